#include "rmipn/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rmipn::evalkit {

double polygon_iou(const geometry::Polygon& a, const geometry::Polygon& b) {
  auto ba = a.bounds();
  auto bb = b.bounds();
  const int x0 = static_cast<int>(std::floor(std::min(ba.min_x, bb.min_x)));
  const int x1 = static_cast<int>(std::ceil(std::max(ba.max_x, bb.max_x)));
  const int y0 = static_cast<int>(std::floor(std::min(ba.min_y, bb.min_y)));
  const int y1 = static_cast<int>(std::ceil(std::max(ba.max_y, bb.max_y)));

  // 2x supersampling: four sample points per unit cell.
  std::size_t inter = 0, uni = 0;
  for (int y = y0; y < y1; ++y) {
    for (int sy = 0; sy < 2; ++sy) {
      const double yc = y + 0.25 + 0.5 * sy;
      auto xs_a = geometry::scanline_crossings(a, yc);
      auto xs_b = geometry::scanline_crossings(b, yc);
      auto inside = [](const std::vector<double>& xs, double xc) {
        std::size_t below = std::upper_bound(xs.begin(), xs.end(), xc) - xs.begin();
        return below % 2 == 1;
      };
      for (int x = x0; x < x1; ++x) {
        for (int sx = 0; sx < 2; ++sx) {
          const double xc = x + 0.25 + 0.5 * sx;
          bool in_a = inside(xs_a, xc);
          bool in_b = inside(xs_b, xc);
          inter += in_a && in_b;
          uni += in_a || in_b;
        }
      }
    }
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

double harmonic_fmeasure(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "recall=%.4f\n", recall);
  os << buf;
  std::snprintf(buf, sizeof(buf), "precision=%.4f\n", precision);
  os << buf;
  std::snprintf(buf, sizeof(buf), "fmeasure=%.4f\n", fmeasure);
  os << buf;
  os << "matches=" << matches << "\n";
  os << "gt_count=" << gt_count << "\n";
  os << "pred_count=" << pred_count << "\n";
  return os.str();
}

std::string EvalReport::per_image_csv() const {
  std::ostringstream os;
  os << "image,gt,preds,matches\n";
  for (const auto& [key, stats] : per_image) {
    os << key << ',' << stats.gt << ',' << stats.preds << ',' << stats.matches << '\n';
  }
  return os.str();
}

EvalReport evaluate(const std::map<std::string, postprocess::DetectionResult>& preds,
                    const std::map<std::string, std::vector<geometry::Polygon>>& gts,
                    double iou_thresh) {
  if (gts.empty()) throw ConfigError("evaluate: no ground-truth images");
  for (const auto& [key, unused] : gts) {
    if (!preds.count(key)) throw ConfigError("evaluate: missing predictions for image " + key);
  }
  for (const auto& [key, unused] : preds) {
    if (!gts.count(key)) throw ConfigError("evaluate: missing ground truth for image " + key);
  }

  EvalReport report;
  for (const auto& [key, gt_polys] : gts) {
    const auto& pred = preds.at(key);
    ImageEval img;
    img.gt = static_cast<int>(gt_polys.size());
    img.preds = static_cast<int>(pred.polygons.size());

    struct Pair {
      double iou;
      int gt_idx;
      int pred_idx;
    };
    std::vector<Pair> pairs;
    for (int gi = 0; gi < img.gt; ++gi) {
      for (int pi = 0; pi < img.preds; ++pi) {
        double iou = polygon_iou(gt_polys[gi], pred.polygons[pi]);
        if (iou >= iou_thresh) pairs.push_back({iou, gi, pi});
      }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
      if (a.iou != b.iou) return a.iou > b.iou;
      if (a.gt_idx != b.gt_idx) return a.gt_idx < b.gt_idx;
      return a.pred_idx < b.pred_idx;
    });
    std::vector<bool> gt_used(gt_polys.size(), false), pred_used(pred.polygons.size(), false);
    for (const Pair& p : pairs) {
      if (gt_used[p.gt_idx] || pred_used[p.pred_idx]) continue;
      gt_used[p.gt_idx] = true;
      pred_used[p.pred_idx] = true;
      img.matches++;
    }

    report.matches += img.matches;
    report.gt_count += img.gt;
    report.pred_count += img.preds;
    report.per_image.emplace_back(key, img);
  }

  report.recall = report.gt_count > 0
                      ? static_cast<double>(report.matches) / report.gt_count
                      : 1.0;
  report.precision = report.pred_count > 0
                         ? static_cast<double>(report.matches) / report.pred_count
                         : 1.0;
  report.fmeasure = harmonic_fmeasure(report.precision, report.recall);
  return report;
}

}  // namespace rmipn::evalkit

#include "rmipn/postprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "rmipn/labelgen.hpp"

namespace rmipn::postprocess {

void PostParams::validate() const {
  if (!(bin_thresh > 0.f && bin_thresh < 1.f)) {
    throw ConfigError("bin_thresh must be in (0, 1), got " + std::to_string(bin_thresh));
  }
  if (!(unclip_ratio > 1.0)) {
    throw ConfigError("unclip_ratio must be > 1, got " + std::to_string(unclip_ratio));
  }
  if (connectivity != 4 && connectivity != 8) {
    throw ConfigError("connectivity must be 4 or 8, got " + std::to_string(connectivity));
  }
  if (min_area < 1) throw ConfigError("min_area must be positive");
}

std::vector<uint8_t> binarize(const std::vector<float>& prob, int height, int width,
                              float thresh) {
  std::vector<uint8_t> mask(static_cast<std::size_t>(height) * width, 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = prob[i] > thresh ? 1 : 0;
  }
  return mask;
}

Components connected_components(const std::vector<uint8_t>& mask, int height, int width,
                                int connectivity) {
  Components out;
  out.labels.assign(static_cast<std::size_t>(height) * width, 0);

  // Union-find over provisional labels.
  std::vector<int32_t> parent(1, 0);
  auto find = [&](int32_t a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  };
  auto unite = [&](int32_t a, int32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      std::size_t i = static_cast<std::size_t>(y) * width + x;
      if (!mask[i]) continue;
      // Previously scanned neighbors.
      int32_t neighbors[4];
      int n_count = 0;
      if (x > 0 && mask[i - 1]) neighbors[n_count++] = out.labels[i - 1];
      if (y > 0) {
        std::size_t up = i - width;
        if (mask[up]) neighbors[n_count++] = out.labels[up];
        if (connectivity == 8) {
          if (x > 0 && mask[up - 1]) neighbors[n_count++] = out.labels[up - 1];
          if (x + 1 < width && mask[up + 1]) neighbors[n_count++] = out.labels[up + 1];
        }
      }
      if (n_count == 0) {
        int32_t fresh = static_cast<int32_t>(parent.size());
        parent.push_back(fresh);
        out.labels[i] = fresh;
      } else {
        int32_t m = neighbors[0];
        for (int k = 1; k < n_count; ++k) m = std::min(m, neighbors[k]);
        out.labels[i] = m;
        for (int k = 0; k < n_count; ++k) unite(m, neighbors[k]);
      }
    }
  }

  // Relabel roots to 1..K in first-encounter scan order.
  std::vector<int32_t> remap(parent.size(), 0);
  int32_t next = 0;
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    if (!out.labels[i]) continue;
    int32_t root = find(out.labels[i]);
    if (!remap[root]) remap[root] = ++next;
    out.labels[i] = remap[root];
  }
  out.count = next;
  return out;
}

namespace {

// Douglas-Peucker on an open chain; keeps endpoints.
void simplify_chain(const std::vector<geometry::Point2>& pts, std::size_t first,
                    std::size_t last, double tol, std::vector<bool>& keep) {
  if (last <= first + 1) return;
  const auto& a = pts[first];
  const auto& b = pts[last];
  double abx = b.x - a.x, aby = b.y - a.y;
  double ab_len = std::hypot(abx, aby);
  double worst = -1.0;
  std::size_t worst_i = first;
  for (std::size_t i = first + 1; i < last; ++i) {
    double d;
    if (ab_len < 1e-12) {
      d = std::hypot(pts[i].x - a.x, pts[i].y - a.y);
    } else {
      d = std::abs((pts[i].x - a.x) * aby - (pts[i].y - a.y) * abx) / ab_len;
    }
    if (d > worst) {
      worst = d;
      worst_i = i;
    }
  }
  if (worst > tol) {
    keep[worst_i] = true;
    simplify_chain(pts, first, worst_i, tol, keep);
    simplify_chain(pts, worst_i, last, tol, keep);
  }
}

std::vector<geometry::Point2> simplify_ring(const std::vector<geometry::Point2>& ring,
                                            double tol) {
  if (ring.size() <= 4) return ring;
  // Anchor the ring at the two mutually farthest of four extreme vertices.
  std::size_t anchor_a = 0, anchor_b = ring.size() / 2;
  double best = -1.0;
  std::array<std::size_t, 4> extremes{0, 0, 0, 0};
  for (std::size_t i = 1; i < ring.size(); ++i) {
    if (ring[i].x < ring[extremes[0]].x) extremes[0] = i;
    if (ring[i].x > ring[extremes[1]].x) extremes[1] = i;
    if (ring[i].y < ring[extremes[2]].y) extremes[2] = i;
    if (ring[i].y > ring[extremes[3]].y) extremes[3] = i;
  }
  for (std::size_t p : extremes) {
    for (std::size_t q : extremes) {
      double d = std::hypot(ring[p].x - ring[q].x, ring[p].y - ring[q].y);
      if (d > best) {
        best = d;
        anchor_a = std::min(p, q);
        anchor_b = std::max(p, q);
      }
    }
  }
  if (anchor_a == anchor_b) return ring;

  auto run_half = [&](std::size_t from, std::size_t to, std::vector<geometry::Point2>& out) {
    std::vector<geometry::Point2> chain;
    for (std::size_t i = from; i != to; i = (i + 1) % ring.size()) chain.push_back(ring[i]);
    chain.push_back(ring[to]);
    std::vector<bool> keep(chain.size(), false);
    keep.front() = keep.back() = true;
    simplify_chain(chain, 0, chain.size() - 1, tol, keep);
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) {  // endpoint added by next half
      if (keep[i]) out.push_back(chain[i]);
    }
  };
  std::vector<geometry::Point2> out;
  run_half(anchor_a, anchor_b, out);
  run_half(anchor_b, anchor_a, out);
  return out;
}

}  // namespace

geometry::Polygon trace_contour(const std::vector<int32_t>& labels, int height, int width,
                                int32_t label) {
  // First component pixel in scan order; its top-left corner starts the walk.
  int sx = -1, sy = -1;
  for (int y = 0; y < height && sx < 0; ++y) {
    for (int x = 0; x < width; ++x) {
      if (labels[static_cast<std::size_t>(y) * width + x] == label) {
        sx = x;
        sy = y;
        break;
      }
    }
  }
  if (sx < 0) throw ValidationError("trace_contour: label not present");

  auto inside = [&](int x, int y) {
    return x >= 0 && x < width && y >= 0 && y < height &&
           labels[static_cast<std::size_t>(y) * width + x] == label;
  };

  // Crack follower, clockwise on screen, component kept on the right.
  // Directions: 0 = +x, 1 = +y, 2 = -x, 3 = -y.
  static constexpr int kDx[4] = {1, 0, -1, 0};
  static constexpr int kDy[4] = {0, 1, 0, -1};
  auto ahead_left = [&](int cx, int cy, int dir) {
    switch (dir) {
      case 0: return inside(cx, cy - 1);
      case 1: return inside(cx, cy);
      case 2: return inside(cx - 1, cy);
      default: return inside(cx - 1, cy - 1);
    }
  };
  auto ahead_right = [&](int cx, int cy, int dir) {
    switch (dir) {
      case 0: return inside(cx, cy);
      case 1: return inside(cx - 1, cy);
      case 2: return inside(cx - 1, cy - 1);
      default: return inside(cx, cy - 1);
    }
  };

  // The walk closes when the start corner is reached with the same outgoing
  // direction it was first left with. The start corner is always a turn (the
  // walker arrives moving up and leaves moving right), so it is emitted on
  // the closing visit.
  std::vector<geometry::Point2> ring;
  int cx = sx, cy = sy, dir = 0;
  int first_out_dir = -1;
  const std::size_t step_cap = 8 * (static_cast<std::size_t>(height) + 1) * (width + 1);
  std::size_t steps = 0;
  while (true) {
    int new_dir;
    if (ahead_left(cx, cy, dir)) {
      new_dir = (dir + 3) % 4;  // turn left; keeps diagonal pairs connected
    } else if (ahead_right(cx, cy, dir)) {
      new_dir = dir;  // straight
    } else {
      new_dir = (dir + 1) % 4;  // turn right
    }
    if (new_dir != dir) {
      ring.push_back({static_cast<double>(cx), static_cast<double>(cy)});
    }
    if (first_out_dir < 0) {
      first_out_dir = new_dir;
    } else if (cx == sx && cy == sy && new_dir == first_out_dir) {
      break;
    }
    dir = new_dir;
    cx += kDx[dir];
    cy += kDy[dir];
    if (++steps > step_cap) throw Error("trace_contour: walker did not close");
  }

  auto simplified = simplify_ring(ring, 0.5);
  try {
    return geometry::Polygon(std::move(simplified));
  } catch (const ValidationError&) {
    return geometry::Polygon(std::move(ring));
  }
}

namespace {

double mean_prob_inside(const geometry::Polygon& poly, const std::vector<float>& prob,
                        int height, int width) {
  auto bb = poly.bounds();
  int y0 = std::max(0, static_cast<int>(std::floor(bb.min_y)));
  int y1 = std::min(height - 1, static_cast<int>(std::ceil(bb.max_y)));
  double sum = 0.0;
  std::size_t count = 0;
  for (int y = y0; y <= y1; ++y) {
    auto xs = geometry::scanline_crossings(poly, y + 0.5);
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      int x_first = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
      int x_last = std::min(width - 1, static_cast<int>(std::floor(xs[k + 1] - 0.5 - 1e-12)));
      for (int x = x_first; x <= x_last; ++x) {
        sum += prob[static_cast<std::size_t>(y) * width + x];
        ++count;
      }
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace

std::optional<ScoredPolygon> unclip_and_score(const geometry::Polygon& poly,
                                              const std::vector<float>& prob, int height,
                                              int width, const PostParams& params,
                                              PostDiag* diag) {
  const double score = mean_prob_inside(poly, prob, height, width);
  if (score < params.box_score_thresh) {
    if (diag) diag->rejected_low_score++;
    return std::nullopt;
  }
  const double d = labelgen::unclip_distance(poly, params.unclip_ratio);
  try {
    return ScoredPolygon{geometry::offset(poly, d), score, true};
  } catch (const CollapseError&) {
    if (diag) diag->unclip_fallbacks++;
    return ScoredPolygon{poly, score, false};
  }
}

DetectionResult extract_detections(const std::vector<float>& prob, int height, int width,
                                   const PostParams& params, PostDiag* diag) {
  params.validate();
  DetectionResult result;
  result.width = width;
  result.height = height;

  auto mask = binarize(prob, height, width, params.bin_thresh);
  auto comps = connected_components(mask, height, width, params.connectivity);
  std::vector<int> pixel_count(static_cast<std::size_t>(comps.count) + 1, 0);
  for (int32_t l : comps.labels) {
    if (l) pixel_count[l]++;
  }

  for (int32_t label = 1; label <= comps.count; ++label) {
    if (pixel_count[label] < params.min_area) {
      if (diag) diag->dropped_small++;
      continue;
    }
    geometry::Polygon contour = trace_contour(comps.labels, height, width, label);
    auto scored = unclip_and_score(contour, prob, height, width, params, diag);
    if (!scored) continue;
    result.polygons.push_back(std::move(scored->polygon));
    result.scores.push_back(scored->score);
  }
  return result;
}

std::string to_json(const DetectionResult& result) {
  nlohmann::json doc;
  doc["width"] = result.width;
  doc["height"] = result.height;
  doc["detections"] = nlohmann::json::array();
  for (std::size_t i = 0; i < result.polygons.size(); ++i) {
    nlohmann::json det;
    det["points"] = nlohmann::json::array();
    for (const auto& v : result.polygons[i].vertices()) {
      det["points"].push_back({v.x, v.y});
    }
    det["score"] = result.scores[i];
    doc["detections"].push_back(std::move(det));
  }
  return doc.dump(2) + "\n";
}

DetectionResult detection_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid detection JSON: ") + e.what());
  }
  DetectionResult result;
  result.width = doc.at("width").get<int>();
  result.height = doc.at("height").get<int>();
  for (const auto& det : doc.at("detections")) {
    std::vector<geometry::Point2> pts;
    for (const auto& p : det.at("points")) {
      pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
    result.polygons.emplace_back(std::move(pts));
    result.scores.push_back(det.at("score").get<double>());
  }
  return result;
}

}  // namespace rmipn::postprocess

#pragma once

#include <map>
#include <string>
#include <vector>

#include "rmipn/geometry.hpp"
#include "rmipn/postprocess.hpp"

namespace rmipn::evalkit {

/// Intersection-over-union by rasterization at 2x supersampling over the
/// joint bounding box. Zero-area union gives 0.
double polygon_iou(const geometry::Polygon& a, const geometry::Polygon& b);

double harmonic_fmeasure(double precision, double recall);

struct ImageEval {
  int gt = 0;
  int preds = 0;
  int matches = 0;
};

struct EvalReport {
  double recall = 0.0;
  double precision = 0.0;
  double fmeasure = 0.0;
  int matches = 0;
  int gt_count = 0;
  int pred_count = 0;
  std::vector<std::pair<std::string, ImageEval>> per_image;

  std::string to_text() const;       // recall= / precision= / fmeasure= / counts
  std::string per_image_csv() const;
};

/// Greedy one-to-one matching per image in descending IoU order (ties by GT
/// index then prediction index); pairs at or above iou_thresh count as
/// matches. Prediction and ground-truth maps must cover the same image keys.
EvalReport evaluate(const std::map<std::string, postprocess::DetectionResult>& preds,
                    const std::map<std::string, std::vector<geometry::Polygon>>& gts,
                    double iou_thresh = 0.5);

}  // namespace rmipn::evalkit

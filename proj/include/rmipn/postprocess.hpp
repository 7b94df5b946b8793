#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rmipn/geometry.hpp"

namespace rmipn::postprocess {

struct PostParams {
  float bin_thresh = 0.3f;
  float box_score_thresh = 0.5f;
  double unclip_ratio = 1.5;
  int min_area = 16;  // pixels
  int connectivity = 8;
  void validate() const;
};

struct DetectionResult {
  int width = 0;
  int height = 0;
  std::vector<geometry::Polygon> polygons;
  std::vector<double> scores;  // each >= box_score_thresh
};

struct PostDiag {
  int dropped_small = 0;
  int rejected_low_score = 0;
  int unclip_fallbacks = 0;
};

/// mask = 1 where prob > thresh.
std::vector<uint8_t> binarize(const std::vector<float>& prob, int height, int width,
                              float thresh);

/// Two-pass labeling; labels run 1..count in first-encounter scan order.
struct Components {
  std::vector<int32_t> labels;
  int count = 0;
};
Components connected_components(const std::vector<uint8_t>& mask, int height, int width,
                                int connectivity = 8);

/// Clockwise boundary of one labeled component, traced along the pixel-cell
/// cracks (vertices on the integer lattice), then simplified with a 0.5 px
/// tolerance.
geometry::Polygon trace_contour(const std::vector<int32_t>& labels, int height, int width,
                                int32_t label);

struct ScoredPolygon {
  geometry::Polygon polygon;
  double score = 0.0;
  bool expanded = true;  // false when the outward offset collapsed
};

/// Scores the polygon by the mean probability over its interior; expands it
/// by D' = A r'/L when the score clears box_score_thresh, otherwise rejects.
std::optional<ScoredPolygon> unclip_and_score(const geometry::Polygon& poly,
                                              const std::vector<float>& prob, int height,
                                              int width, const PostParams& params,
                                              PostDiag* diag = nullptr);

/// Full chain: binarize, label, trace, unclip, score.
DetectionResult extract_detections(const std::vector<float>& prob, int height, int width,
                                   const PostParams& params, PostDiag* diag = nullptr);

std::string to_json(const DetectionResult& result);
DetectionResult detection_from_json(const std::string& text);

}  // namespace rmipn::postprocess

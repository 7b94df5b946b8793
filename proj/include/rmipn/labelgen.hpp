#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "rmipn/geometry.hpp"

namespace rmipn::labelgen {

/// Shrink/unclip ratios for annotation offsetting. Instances are shrunk by
/// D = A(1 - r^2)/L before rasterization and detections are later expanded
/// by D' = A'r'/L'.
struct ShrinkPolicy {
  double shrink_ratio = 0.4;  // r, must be in (0, 1)
  double unclip_ratio = 1.5;  // r', must be > 1
  void validate() const;
};

/// The five supervision rasters for one image. Planes are row-major H*W
/// float32; direction is stored as two planes (x then y component).
struct LabelMaps {
  int height = 0;
  int width = 0;
  std::vector<float> center;          // {0,1}
  std::vector<float> foreground;      // {0,1}
  std::vector<float> threshold_band;  // [0,1]
  std::vector<float> distance;        // [0,1], per-instance max-normalized
  std::vector<float> dir_x;           // [-1,1]
  std::vector<float> dir_y;           // [-1,1]

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
};

struct RenderDiag {
  int zero_area_skipped = 0;
  int shrink_fallbacks = 0;
  int dilate_fallbacks = 0;
};

double shrink_distance(const geometry::Polygon& p, double shrink_ratio);
double unclip_distance(const geometry::Polygon& p, double unclip_ratio);

/// Shrinks by -D with the fallback applied: a polygon whose shrink collapses
/// or rasterizes to an empty region at the given dims is replaced by a 50%
/// scale-about-centroid copy (recorded in diag).
geometry::Polygon resolve_center_polygon(const geometry::Polygon& p, double d, int height,
                                         int width, RenderDiag* diag);

std::vector<float> render_foreground(const std::vector<geometry::Polygon>& polys, int height,
                                     int width, RenderDiag* diag = nullptr);
std::vector<float> render_center(const std::vector<geometry::Polygon>& polys, int height,
                                 int width, const ShrinkPolicy& policy,
                                 RenderDiag* diag = nullptr);
std::vector<float> render_distance(const std::vector<geometry::Polygon>& polys, int height,
                                   int width);
std::pair<std::vector<float>, std::vector<float>> render_direction(
    const std::vector<geometry::Polygon>& polys, int height, int width);
std::vector<float> render_threshold_band(const std::vector<geometry::Polygon>& polys, int height,
                                         int width, const ShrinkPolicy& policy,
                                         RenderDiag* diag = nullptr);

/// All five rasters in one pass.
LabelMaps generate_labels(const std::vector<geometry::Polygon>& polys, int height, int width,
                          const ShrinkPolicy& policy = {}, RenderDiag* diag = nullptr);

/// Binary container: magic "RMLB", version u32, H u32, W u32, then the six
/// planes (center, foreground, threshold_band, distance, dir_x, dir_y) as
/// little-endian f32 row-major.
void save_label_maps(const std::filesystem::path& path, const LabelMaps& maps);
LabelMaps load_label_maps(const std::filesystem::path& path);

/// Rasterization helper: marks mask[y*width+x] = 1 for every pixel whose
/// center (x+0.5, y+0.5) lies strictly inside the polygon (even-odd rule).
void fill_polygon_mask(const geometry::Polygon& p, int height, int width,
                       std::vector<uint8_t>& mask);

}  // namespace rmipn::labelgen

#include "rmipn/labelgen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace rmipn::labelgen {

namespace {

constexpr char kMagic[4] = {'R', 'M', 'L', 'B'};
constexpr uint32_t kVersion = 1;

geometry::Polygon scale_about_centroid(const geometry::Polygon& p, double factor) {
  geometry::Point2 c = p.centroid();
  std::vector<geometry::Point2> scaled;
  scaled.reserve(p.size());
  for (const auto& v : p.vertices()) {
    scaled.push_back({c.x + factor * (v.x - c.x), c.y + factor * (v.y - c.y)});
  }
  return geometry::Polygon(std::move(scaled));
}

// Per-pixel ownership for the distance/direction maps: a foreground pixel
// belongs to the containing polygon whose boundary is nearest. Distances are
// evaluated at the integer pixel coordinate (x, y); insideness uses the pixel
// center (x+0.5, y+0.5).
struct DistanceField {
  std::vector<int> owner;       // -1 outside foreground
  std::vector<float> raw;       // unnormalized distance
  std::vector<geometry::Point2> closest;
};

DistanceField compute_distance_field(const std::vector<geometry::Polygon>& polys, int height,
                                     int width) {
  DistanceField f;
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  f.owner.assign(plane, -1);
  f.raw.assign(plane, 0.f);
  f.closest.assign(plane, {});

  std::vector<uint8_t> mask;
  for (std::size_t pi = 0; pi < polys.size(); ++pi) {
    const auto& poly = polys[pi];
    if (poly.area() <= 0.0) continue;
    fill_polygon_mask(poly, height, width, mask);
    auto bb = poly.bounds();
    int y0 = std::max(0, static_cast<int>(std::floor(bb.min_y)) - 1);
    int y1 = std::min(height - 1, static_cast<int>(std::ceil(bb.max_y)) + 1);
    int x0 = std::max(0, static_cast<int>(std::floor(bb.min_x)) - 1);
    int x1 = std::min(width - 1, static_cast<int>(std::ceil(bb.max_x)) + 1);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        std::size_t idx = static_cast<std::size_t>(y) * width + x;
        if (!mask[idx]) continue;
        auto nb = geometry::nearest_boundary(poly, {static_cast<double>(x), static_cast<double>(y)});
        if (f.owner[idx] < 0 || nb.distance < f.raw[idx]) {
          f.owner[idx] = static_cast<int>(pi);
          f.raw[idx] = static_cast<float>(nb.distance);
          f.closest[idx] = nb.closest;
        }
      }
    }
  }
  return f;
}

}  // namespace

void ShrinkPolicy::validate() const {
  if (!(shrink_ratio > 0.0 && shrink_ratio < 1.0)) {
    throw ConfigError("shrink_ratio must be in (0, 1), got " + std::to_string(shrink_ratio));
  }
  if (!(unclip_ratio > 1.0)) {
    throw ConfigError("unclip_ratio must be > 1, got " + std::to_string(unclip_ratio));
  }
}

double shrink_distance(const geometry::Polygon& p, double shrink_ratio) {
  return p.area() * (1.0 - shrink_ratio * shrink_ratio) / p.perimeter();
}

double unclip_distance(const geometry::Polygon& p, double unclip_ratio) {
  return p.area() * unclip_ratio / p.perimeter();
}

geometry::Polygon resolve_center_polygon(const geometry::Polygon& p, double d, int height,
                                         int width, RenderDiag* diag) {
  try {
    geometry::Polygon shrunk = geometry::offset(p, -d);
    std::vector<uint8_t> mask;
    fill_polygon_mask(shrunk, height, width, mask);
    if (std::find(mask.begin(), mask.end(), uint8_t{1}) != mask.end()) return shrunk;
  } catch (const CollapseError&) {
  }
  if (diag) diag->shrink_fallbacks++;
  return scale_about_centroid(p, 0.5);
}

void fill_polygon_mask(const geometry::Polygon& p, int height, int width,
                       std::vector<uint8_t>& mask) {
  mask.assign(static_cast<std::size_t>(height) * width, 0);
  auto bb = p.bounds();
  int y0 = std::max(0, static_cast<int>(std::floor(bb.min_y - 0.5)));
  int y1 = std::min(height - 1, static_cast<int>(std::ceil(bb.max_y)));
  for (int y = y0; y <= y1; ++y) {
    double yc = y + 0.5;
    auto xs = geometry::scanline_crossings(p, yc);
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      int x_first = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
      int x_last = std::min(width - 1, static_cast<int>(std::floor(xs[k + 1] - 0.5 - 1e-12)));
      for (int x = x_first; x <= x_last; ++x) {
        mask[static_cast<std::size_t>(y) * width + x] = 1;
      }
    }
  }
}

std::vector<float> render_foreground(const std::vector<geometry::Polygon>& polys, int height,
                                     int width, RenderDiag* diag) {
  std::vector<float> plane(static_cast<std::size_t>(height) * width, 0.f);
  std::vector<uint8_t> mask;
  for (const auto& poly : polys) {
    if (poly.area() <= 0.0) {
      if (diag) diag->zero_area_skipped++;
      continue;
    }
    fill_polygon_mask(poly, height, width, mask);
    for (std::size_t i = 0; i < plane.size(); ++i) {
      if (mask[i]) plane[i] = 1.f;
    }
  }
  return plane;
}

std::vector<float> render_center(const std::vector<geometry::Polygon>& polys, int height,
                                 int width, const ShrinkPolicy& policy, RenderDiag* diag) {
  policy.validate();
  std::vector<float> plane(static_cast<std::size_t>(height) * width, 0.f);
  std::vector<uint8_t> mask;
  for (const auto& poly : polys) {
    if (poly.area() <= 0.0) {
      if (diag) diag->zero_area_skipped++;
      continue;
    }
    double d = shrink_distance(poly, policy.shrink_ratio);
    geometry::Polygon shrunk = resolve_center_polygon(poly, d, height, width, diag);
    fill_polygon_mask(shrunk, height, width, mask);
    for (std::size_t i = 0; i < plane.size(); ++i) {
      if (mask[i]) plane[i] = 1.f;
    }
  }
  return plane;
}

std::vector<float> render_distance(const std::vector<geometry::Polygon>& polys, int height,
                                   int width) {
  DistanceField f = compute_distance_field(polys, height, width);
  std::vector<float> max_per_instance(polys.size(), 0.f);
  for (std::size_t i = 0; i < f.owner.size(); ++i) {
    if (f.owner[i] >= 0) {
      max_per_instance[f.owner[i]] = std::max(max_per_instance[f.owner[i]], f.raw[i]);
    }
  }
  std::vector<float> plane(f.owner.size(), 0.f);
  for (std::size_t i = 0; i < f.owner.size(); ++i) {
    if (f.owner[i] >= 0) {
      float m = max_per_instance[f.owner[i]];
      plane[i] = m > 0.f ? f.raw[i] / m : 0.f;
    }
  }
  return plane;
}

std::pair<std::vector<float>, std::vector<float>> render_direction(
    const std::vector<geometry::Polygon>& polys, int height, int width) {
  DistanceField f = compute_distance_field(polys, height, width);
  std::vector<float> dx(f.owner.size(), 0.f), dy(f.owner.size(), 0.f);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      std::size_t i = static_cast<std::size_t>(y) * width + x;
      if (f.owner[i] < 0 || f.raw[i] <= 0.f) continue;
      double vx = f.closest[i].x - x;
      double vy = f.closest[i].y - y;
      double norm = std::hypot(vx, vy);
      dx[i] = static_cast<float>(vx / norm);
      dy[i] = static_cast<float>(vy / norm);
    }
  }
  return {std::move(dx), std::move(dy)};
}

std::vector<float> render_threshold_band(const std::vector<geometry::Polygon>& polys, int height,
                                         int width, const ShrinkPolicy& policy,
                                         RenderDiag* diag) {
  policy.validate();
  std::vector<float> plane(static_cast<std::size_t>(height) * width, 0.f);
  std::vector<uint8_t> dilated_mask, shrunk_mask;
  for (const auto& poly : polys) {
    if (poly.area() <= 0.0) {
      if (diag) diag->zero_area_skipped++;
      continue;
    }
    double d = shrink_distance(poly, policy.shrink_ratio);
    // Same resolution as render_center, so the band excludes exactly the
    // region the center map rendered.
    geometry::Polygon shrunk = resolve_center_polygon(poly, d, height, width, diag);
    geometry::Polygon dilated = [&] {
      try {
        return geometry::offset(poly, d);
      } catch (const CollapseError&) {
        if (diag) diag->dilate_fallbacks++;
        return scale_about_centroid(poly, 1.5);
      }
    }();
    fill_polygon_mask(dilated, height, width, dilated_mask);
    fill_polygon_mask(shrunk, height, width, shrunk_mask);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        std::size_t i = static_cast<std::size_t>(y) * width + x;
        if (!dilated_mask[i] || shrunk_mask[i]) continue;
        auto nb = geometry::nearest_boundary(poly, {static_cast<double>(x), static_cast<double>(y)});
        float v = static_cast<float>(std::clamp(1.0 - nb.distance / d, 0.0, 1.0));
        plane[i] = std::max(plane[i], v);
      }
    }
  }
  return plane;
}

LabelMaps generate_labels(const std::vector<geometry::Polygon>& polys, int height, int width,
                          const ShrinkPolicy& policy, RenderDiag* diag) {
  LabelMaps maps;
  maps.height = height;
  maps.width = width;
  RenderDiag fg_diag, center_diag, band_diag;
  maps.foreground = render_foreground(polys, height, width, &fg_diag);
  maps.center = render_center(polys, height, width, policy, &center_diag);
  maps.threshold_band = render_threshold_band(polys, height, width, policy, &band_diag);
  maps.distance = render_distance(polys, height, width);
  auto dir = render_direction(polys, height, width);
  maps.dir_x = std::move(dir.first);
  maps.dir_y = std::move(dir.second);
  if (diag) {
    // Each zero-area instance is reported once even though every render
    // pass skips it independently.
    diag->zero_area_skipped += fg_diag.zero_area_skipped;
    diag->shrink_fallbacks += center_diag.shrink_fallbacks;
    diag->dilate_fallbacks += band_diag.dilate_fallbacks;
  }
  return maps;
}

void save_label_maps(const std::filesystem::path& path, const LabelMaps& maps) {
  static_assert(std::endian::native == std::endian::little, "little-endian layout assumed");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(kMagic, 4);
  auto write_u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  write_u32(kVersion);
  write_u32(static_cast<uint32_t>(maps.height));
  write_u32(static_cast<uint32_t>(maps.width));
  auto write_plane = [&](const std::vector<float>& plane) {
    out.write(reinterpret_cast<const char*>(plane.data()),
              static_cast<std::streamsize>(plane.size() * sizeof(float)));
  };
  write_plane(maps.center);
  write_plane(maps.foreground);
  write_plane(maps.threshold_band);
  write_plane(maps.distance);
  write_plane(maps.dir_x);
  write_plane(maps.dir_y);
  if (!out) throw IoError("write failed: " + path.string());
}

LabelMaps load_label_maps(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("bad label container magic in " + path.string(), 0);
  }
  auto read_u32 = [&](const char* what) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) {
      throw FormatError(std::string("truncated label container reading ") + what,
                        static_cast<std::size_t>(in.gcount()));
    }
    return v;
  };
  uint32_t version = read_u32("version");
  if (version != kVersion) {
    throw FormatError("unsupported label container version " + std::to_string(version), 4);
  }
  LabelMaps maps;
  maps.height = static_cast<int>(read_u32("height"));
  maps.width = static_cast<int>(read_u32("width"));
  const std::size_t plane = maps.plane_size();
  auto read_plane = [&](std::vector<float>& dst, const char* name) {
    dst.resize(plane);
    in.read(reinterpret_cast<char*>(dst.data()),
            static_cast<std::streamsize>(plane * sizeof(float)));
    if (!in) {
      throw FormatError(std::string("truncated label container in plane ") + name,
                        static_cast<std::size_t>(in.tellg()));
    }
  };
  read_plane(maps.center, "center");
  read_plane(maps.foreground, "foreground");
  read_plane(maps.threshold_band, "threshold_band");
  read_plane(maps.distance, "distance");
  read_plane(maps.dir_x, "dir_x");
  read_plane(maps.dir_y, "dir_y");
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after label planes in " + path.string(),
                      16 + 6 * plane * sizeof(float));
  }
  return maps;
}

}  // namespace rmipn::labelgen

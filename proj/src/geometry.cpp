#include "rmipn/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace rmipn::geometry {

namespace {

constexpr double kDupEps2 = 1e-18;  // squared distance below which two vertices coincide

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Proper crossing test: segments intersect at a single interior point.
bool segments_cross(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  double d1 = cross(a, b, c);
  double d2 = cross(a, b, d);
  double d3 = cross(c, d, a);
  double d4 = cross(c, d, b);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
         ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

bool is_simple(const std::vector<Point2>& v) {
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      // Skip edges sharing a vertex (adjacent, or first/last pair).
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n])) return false;
    }
  }
  return true;
}

double dist2(const Point2& a, const Point2& b) {
  double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

// Intersection of infinite lines (a1,a2) and (b1,b2); false when parallel.
bool intersect_lines(const Point2& a1, const Point2& a2, const Point2& b1, const Point2& b2,
                     Point2* out) {
  double r_x = a2.x - a1.x, r_y = a2.y - a1.y;
  double s_x = b2.x - b1.x, s_y = b2.y - b1.y;
  double denom = r_x * s_y - r_y * s_x;
  double scale = std::abs(r_x) + std::abs(r_y) + std::abs(s_x) + std::abs(s_y);
  if (std::abs(denom) <= 1e-12 * scale * scale) return false;
  double t = ((b1.x - a1.x) * s_y - (b1.y - a1.y) * s_x) / denom;
  out->x = a1.x + t * r_x;
  out->y = a1.y + t * r_y;
  return true;
}

// Removes self-intersection loops from an offset ring. Staircase boundaries
// (traced rasters) offset into rings whose joins cross nearby segments; each
// crossing pair is resolved by excising the shorter arc between the two
// segments and joining them at the intersection point. Returns false when the
// ring cannot be cleaned within the pass budget.
bool excise_crossing_loops(std::vector<Point2>& ring) {
  for (int pass = 0; pass < 64; ++pass) {
    const std::size_t n = ring.size();
    if (n < 4) return true;
    bool found = false;
    for (std::size_t i = 0; i < n && !found; ++i) {
      for (std::size_t j = i + 2; j < n; ++j) {
        if (i == 0 && j == n - 1) continue;  // adjacent around the seam
        const Point2& a = ring[i];
        const Point2& b = ring[(i + 1) % n];
        const Point2& c = ring[j];
        const Point2& d = ring[(j + 1) % n];
        if (!segments_cross(a, b, c, d)) continue;
        Point2 x;
        if (!intersect_lines(a, b, c, d, &x)) continue;
        std::size_t inner = j - i;       // vertices i+1..j
        std::size_t outer = n - inner;   // the rest
        std::vector<Point2> next;
        next.reserve(n);
        if (inner <= outer) {
          // drop i+1..j, join at x
          next.insert(next.end(), ring.begin(), ring.begin() + static_cast<std::ptrdiff_t>(i + 1));
          next.push_back(x);
          next.insert(next.end(), ring.begin() + static_cast<std::ptrdiff_t>(j + 1), ring.end());
        } else {
          // keep i+1..j, join at x
          next.push_back(x);
          next.insert(next.end(), ring.begin() + static_cast<std::ptrdiff_t>(i + 1),
                      ring.begin() + static_cast<std::ptrdiff_t>(j + 1));
        }
        ring = std::move(next);
        found = true;
        break;
      }
    }
    if (!found) return true;
  }
  return false;
}

}  // namespace

Polygon::Polygon(std::vector<Point2> vertices) : vertices_(std::move(vertices)) {
  if (vertices_.size() < 3) {
    throw ValidationError("polygon needs at least 3 vertices, got " +
                          std::to_string(vertices_.size()));
  }
  for (const Point2& p : vertices_) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw ValidationError("polygon vertex is not finite");
    }
  }
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (dist2(vertices_[i], vertices_[(i + 1) % n]) <= kDupEps2) {
      throw ValidationError("polygon has identical consecutive vertices at index " +
                            std::to_string(i));
    }
  }
  if (!is_simple(vertices_)) {
    throw ValidationError("polygon is self-intersecting");
  }
}

double Polygon::signed_area() const {
  double acc = 0.0;
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = vertices_[i];
    const Point2& b = vertices_[(i + 1) % n];
    acc += a.x * b.y - b.x * a.y;
  }
  return 0.5 * acc;
}

double Polygon::area() const { return std::abs(signed_area()); }

double Polygon::perimeter() const {
  double acc = 0.0;
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i) {
    acc += std::sqrt(dist2(vertices_[i], vertices_[(i + 1) % n]));
  }
  return acc;
}

Point2 Polygon::centroid() const {
  double a = signed_area();
  const std::size_t n = vertices_.size();
  if (std::abs(a) < 1e-12) {
    Point2 m{0, 0};
    for (const Point2& p : vertices_) {
      m.x += p.x;
      m.y += p.y;
    }
    m.x /= static_cast<double>(n);
    m.y /= static_cast<double>(n);
    return m;
  }
  double cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& p = vertices_[i];
    const Point2& q = vertices_[(i + 1) % n];
    double w = p.x * q.y - q.x * p.y;
    cx += (p.x + q.x) * w;
    cy += (p.y + q.y) * w;
  }
  return {cx / (6.0 * a), cy / (6.0 * a)};
}

BoundingBox Polygon::bounds() const {
  BoundingBox b;
  b.min_x = b.max_x = vertices_[0].x;
  b.min_y = b.max_y = vertices_[0].y;
  for (const Point2& p : vertices_) {
    b.min_x = std::min(b.min_x, p.x);
    b.max_x = std::max(b.max_x, p.x);
    b.min_y = std::min(b.min_y, p.y);
    b.max_y = std::max(b.max_y, p.y);
  }
  return b;
}

Polygon offset(const Polygon& p, double d) {
  if (d == 0.0) return p;

  const auto& v = p.vertices();
  const int n = static_cast<int>(v.size());
  const double orient = p.signed_area() >= 0.0 ? 1.0 : -1.0;

  auto outward_normal = [&](int i) {
    const Point2& a = v[i];
    const Point2& b = v[(i + 1) % n];
    double dx = b.x - a.x, dy = b.y - a.y;
    double len = std::hypot(dx, dy);
    return Point2{orient * dy / len, -orient * dx / len};
  };

  std::vector<Point2> out;
  out.reserve(v.size() + 4);
  for (int i = 0; i < n; ++i) {
    int j = (i + n - 1) % n;  // edge into vertex i
    Point2 nj = outward_normal(j);
    Point2 ni = outward_normal(i);
    Point2 prev_end{v[i].x + d * nj.x, v[i].y + d * nj.y};
    Point2 next_start{v[i].x + d * ni.x, v[i].y + d * ni.y};
    Point2 aj{v[j].x + d * nj.x, v[j].y + d * nj.y};
    Point2 bi{v[(i + 1) % n].x + d * ni.x, v[(i + 1) % n].y + d * ni.y};

    Point2 miter;
    if (intersect_lines(aj, prev_end, next_start, bi, &miter)) {
      double miter_len = std::sqrt(dist2(miter, v[i]));
      if (miter_len > 2.0 * std::abs(d)) {
        out.push_back(prev_end);
        out.push_back(next_start);
      } else {
        out.push_back(miter);
      }
    } else {
      out.push_back(prev_end);  // parallel join; next_start coincides
    }
  }

  auto collapse = [&] {
    throw CollapseError(d, "offset by " + std::to_string(d) + " collapses the polygon");
  };
  if (!excise_crossing_loops(out)) collapse();

  // Coincident joins collapse to single vertices.
  std::vector<Point2> dedup;
  dedup.reserve(out.size());
  for (const Point2& q : out) {
    if (dedup.empty() || dist2(dedup.back(), q) > 1e-16) dedup.push_back(q);
  }
  while (dedup.size() >= 2 && dist2(dedup.front(), dedup.back()) <= 1e-16) {
    dedup.pop_back();
  }
  if (dedup.size() < 3) collapse();
  try {
    Polygon result(std::move(dedup));
    // Orientation flip means the polygon everted through itself.
    if (result.signed_area() * (p.signed_area() >= 0 ? 1.0 : -1.0) <= 0.0) collapse();
    return result;
  } catch (const ValidationError&) {
    collapse();
  }
  // Unreachable; collapse() always throws.
  throw CollapseError(d, "offset collapse");
}

BoundaryPoint nearest_boundary(const Polygon& p, const Point2& q) {
  const auto& v = p.vertices();
  const std::size_t n = v.size();
  BoundaryPoint best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = v[i];
    const Point2& b = v[(i + 1) % n];
    double ex = b.x - a.x, ey = b.y - a.y;
    double len2 = ex * ex + ey * ey;
    double t = ((q.x - a.x) * ex + (q.y - a.y) * ey) / len2;
    t = std::clamp(t, 0.0, 1.0);
    Point2 foot{a.x + t * ex, a.y + t * ey};
    double dist = std::sqrt(dist2(q, foot));
    if (dist < best.distance) {
      best.distance = dist;
      best.closest = foot;
      best.edge_index = i;
    }
  }
  return best;
}

bool contains(const Polygon& p, const Point2& q) {
  const auto& v = p.vertices();
  const std::size_t n = v.size();
  bool inside = false;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = v[i];
    const Point2& b = v[(i + 1) % n];
    if ((a.y > q.y) != (b.y > q.y)) {
      double x_int = a.x + (q.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (q.x < x_int) inside = !inside;
    }
  }
  return inside;
}

std::vector<double> scanline_crossings(const Polygon& p, double yc) {
  const auto& v = p.vertices();
  const std::size_t n = v.size();
  std::vector<double> xs;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = v[i];
    const Point2& b = v[(i + 1) % n];
    if ((a.y > yc) != (b.y > yc)) {
      xs.push_back(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
    }
  }
  std::sort(xs.begin(), xs.end());
  return xs;
}

}  // namespace rmipn::geometry

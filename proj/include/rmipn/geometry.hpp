#pragma once

#include <cstddef>
#include <vector>

#include "rmipn/errors.hpp"

namespace rmipn::geometry {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline bool operator==(const Point2& a, const Point2& b) {
  return a.x == b.x && a.y == b.y;
}

struct BoundingBox {
  double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;
};

/// Simple polygon in image pixel coordinates. Construction validates that the
/// vertex list has at least three points, contains no consecutive duplicates,
/// is finite, and has no properly crossing edges.
class Polygon {
 public:
  explicit Polygon(std::vector<Point2> vertices);

  const std::vector<Point2>& vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }

  double signed_area() const;
  double area() const;        // |signed shoelace area|
  double perimeter() const;   // closing edge included
  Point2 centroid() const;    // area centroid (vertex mean for zero area)
  BoundingBox bounds() const;

 private:
  std::vector<Point2> vertices_;
};

/// Offsets every edge along its outward (d > 0) or inward (d < 0) normal and
/// rejoins vertices with miter joins; joins whose miter length exceeds 2|d|
/// are beveled. Throws CollapseError when the result degenerates (non-simple
/// or non-positive area). d = 0 returns the input vertex-for-vertex.
Polygon offset(const Polygon& p, double d);

struct BoundaryPoint {
  double distance = 0.0;
  Point2 closest;
  std::size_t edge_index = 0;
};

/// Exact minimum Euclidean distance from q to the polygon boundary and the
/// achieving point. Ties are broken by the lowest edge index.
BoundaryPoint nearest_boundary(const Polygon& p, const Point2& q);

/// Even-odd point-in-polygon test with half-open edge handling, so a point
/// grazing the boundary resolves deterministically.
bool contains(const Polygon& p, const Point2& q);

/// x-coordinates where the horizontal line y = yc crosses the boundary,
/// sorted ascending; consecutive pairs delimit interior spans (even-odd).
std::vector<double> scanline_crossings(const Polygon& p, double yc);

}  // namespace rmipn::geometry

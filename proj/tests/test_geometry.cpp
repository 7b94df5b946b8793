#include <cmath>

#include "doctest.h"
#include "rmipn/geometry.hpp"
#include "rmipn/rng.hpp"

using namespace rmipn;
using geometry::Point2;
using geometry::Polygon;

namespace {

Polygon square(double x0, double y0, double side) {
  return Polygon({{x0, y0}, {x0 + side, y0}, {x0 + side, y0 + side}, {x0, y0 + side}});
}

// Star-shaped polygon around a center: strictly increasing angles keep it
// simple by construction.
Polygon random_star_polygon(Rng& rng, Point2 center, double r_lo, double r_hi, int min_k = 5,
                            int max_k = 12) {
  int k = rng.uniform_int(min_k, max_k);
  std::vector<double> angles;
  for (int i = 0; i < k; ++i) {
    angles.push_back(2.0 * 3.14159265358979323846 * (i + rng.uniform(0.05, 0.95)) / k);
  }
  std::vector<Point2> pts;
  for (double a : angles) {
    double r = rng.uniform(r_lo, r_hi);
    pts.push_back({center.x + r * std::cos(a), center.y + r * std::sin(a)});
  }
  return Polygon(std::move(pts));
}

// Independent oracle: minimum distance from q to the boundary sampled at the
// given pitch, walking edges in index order (first minimum wins).
struct SampledBoundary {
  std::vector<double> xs, ys;

  explicit SampledBoundary(const Polygon& p, double pitch) {
    const auto& v = p.vertices();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Point2& a = v[i];
      const Point2& b = v[(i + 1) % v.size()];
      double len = std::hypot(b.x - a.x, b.y - a.y);
      int steps = std::max(1, static_cast<int>(std::ceil(len / pitch)));
      for (int s = 0; s < steps; ++s) {
        double t = static_cast<double>(s) / steps;
        xs.push_back(a.x + t * (b.x - a.x));
        ys.push_back(a.y + t * (b.y - a.y));
      }
    }
  }

  std::pair<double, Point2> nearest(Point2 q) const {
    double best = std::numeric_limits<double>::infinity();
    Point2 best_pt{};
    for (std::size_t i = 0; i < xs.size(); ++i) {
      double dx = xs[i] - q.x, dy = ys[i] - q.y;
      double d2 = dx * dx + dy * dy;
      if (d2 < best) {
        best = d2;
        best_pt = {xs[i], ys[i]};
      }
    }
    return {std::sqrt(best), best_pt};
  }
};

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("area of basic shapes") {
  CHECK(square(0, 0, 1).area() == doctest::Approx(1.0));
  CHECK(Polygon({{0, 0}, {2, 0}, {0, 2}}).area() == doctest::Approx(2.0));
  // reversed orientation still reports positive area
  CHECK(Polygon({{0, 1}, {1, 1}, {1, 0}, {0, 0}}).area() == doctest::Approx(1.0));
}

TEST_CASE("perimeter of basic shapes") {
  CHECK(square(0, 0, 1).perimeter() == doctest::Approx(4.0));
  CHECK(square(0, 0, 100).perimeter() == doctest::Approx(400.0));
  CHECK(Polygon({{0, 0}, {3, 0}, {0, 4}}).perimeter() == doctest::Approx(12.0));
}

TEST_CASE("degenerate vertex lists are rejected") {
  CHECK_THROWS_AS(Polygon({{0, 0}, {1, 1}}), ValidationError);
  CHECK_THROWS_AS(Polygon({{0, 0}, {0, 0}, {1, 1}}), ValidationError);
  CHECK_THROWS_AS(Polygon({{0, 0}, {1, 0}, {std::nan(""), 1}}), ValidationError);
  // bow-tie self-intersection
  CHECK_THROWS_AS(Polygon({{0, 0}, {2, 2}, {2, 0}, {0, 2}}), ValidationError);
}

TEST_CASE("offset insets and outsets squares uniformly") {
  Polygon big = square(0, 0, 100);
  Polygon inset = geometry::offset(big, -21.0);
  CHECK(inset.area() == doctest::Approx(58.0 * 58.0));
  auto b = inset.bounds();
  CHECK(b.min_x == doctest::Approx(21.0));
  CHECK(b.max_x == doctest::Approx(79.0));
  CHECK(b.min_y == doctest::Approx(21.0));
  CHECK(b.max_y == doctest::Approx(79.0));

  Polygon small = square(0, 0, 10);
  Polygon outset = geometry::offset(small, 3.75);
  CHECK(outset.area() == doctest::Approx(17.5 * 17.5));

  CHECK_THROWS_AS(geometry::offset(square(0, 0, 4), -2.0), CollapseError);
}

TEST_CASE("offset collapse carries the attempted distance") {
  try {
    geometry::offset(square(0, 0, 4), -2.0);
    FAIL("expected CollapseError");
  } catch (const CollapseError& e) {
    CHECK(e.attempted_d() == doctest::Approx(-2.0));
  }
}

TEST_CASE("offset with d = 0 is the identity") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    Polygon p = random_star_polygon(rng, {60, 60}, 20, 45);
    Polygon q = geometry::offset(p, 0.0);
    REQUIRE(q.size() == p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(q.vertices()[i] == p.vertices()[i]);
    }
  }
}

TEST_CASE("offset round trip preserves convex areas") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    // random rotated rectangles are convex with a known inradius
    double w = rng.uniform(30, 80), h = rng.uniform(30, 80);
    double theta = rng.uniform(0, 3.14159);
    double c = std::cos(theta), s = std::sin(theta);
    auto rot = [&](double x, double y) { return Point2{100 + x * c - y * s, 100 + x * s + y * c}; };
    Polygon p({rot(-w / 2, -h / 2), rot(w / 2, -h / 2), rot(w / 2, h / 2), rot(-w / 2, h / 2)});
    double inradius = std::min(w, h) / 2.0;
    double d = rng.uniform(0.05, 0.2) * inradius;
    Polygon back = geometry::offset(geometry::offset(p, -d), d);
    CHECK(back.area() == doctest::Approx(p.area()).epsilon(0.02));
  }
}

TEST_CASE("sharp spikes are beveled by the miter limit") {
  // 15-degree-ish spike: outward offset must not shoot off to a long point
  Polygon spike({{0, 0}, {100, 0}, {100, 8}, {0, 30}});
  Polygon grown = geometry::offset(spike, 4.0);
  auto bb_in = spike.bounds();
  auto bb_out = grown.bounds();
  CHECK(bb_out.max_x - bb_in.max_x < 2.0 * 4.0 + 1e-9);
  CHECK(bb_in.min_x - bb_out.min_x < 2.0 * 4.0 + 1e-9);
}

TEST_CASE("nearest_boundary on a square") {
  Polygon p = square(0, 0, 10);
  auto center = geometry::nearest_boundary(p, {5, 5});
  CHECK(center.distance == doctest::Approx(5.0));
  // all four sides tie; the lowest edge index wins
  CHECK(center.edge_index == 0);
  CHECK(center.closest.x == doctest::Approx(5.0));
  CHECK(center.closest.y == doctest::Approx(0.0));

  auto side = geometry::nearest_boundary(p, {1, 5});
  CHECK(side.distance == doctest::Approx(1.0));
  CHECK(side.closest.x == doctest::Approx(0.0));
  CHECK(side.closest.y == doctest::Approx(5.0));
}

TEST_CASE("nearest_boundary matches the dense-sampling oracle") {
  Polygon pentagon({{20, 10}, {80, 18}, {95, 60}, {50, 95}, {12, 55}});
  SampledBoundary oracle(pentagon, 0.01);
  Rng rng(123);
  for (int i = 0; i < 50; ++i) {
    // random interior points via rejection
    Point2 q{rng.uniform(12, 95), rng.uniform(10, 95)};
    if (!geometry::contains(pentagon, q)) {
      --i;
      continue;
    }
    auto exact = geometry::nearest_boundary(pentagon, q);
    auto [sampled, unused] = oracle.nearest(q);
    CHECK(std::abs(exact.distance - sampled) < 0.02);
  }
}

TEST_CASE("nearest_boundary distance is bounded by vertex distances") {
  Rng rng(99);
  for (int trial = 0; trial < 15; ++trial) {
    Polygon p = random_star_polygon(rng, {50, 50}, 15, 40);
    for (int i = 0; i < 20; ++i) {
      Point2 q{rng.uniform(0, 100), rng.uniform(0, 100)};
      auto nb = geometry::nearest_boundary(p, q);
      for (const auto& v : p.vertices()) {
        CHECK(nb.distance <= std::hypot(v.x - q.x, v.y - q.y) + 1e-9);
      }
    }
  }
}

TEST_CASE("area and perimeter are invariant to rotation and reversal") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Polygon p = random_star_polygon(rng, {0, 0}, 10, 30);
    auto verts = p.vertices();
    std::size_t shift = 1 + rng.next_u64() % (verts.size() - 1);
    std::vector<Point2> rotated(verts.begin() + shift, verts.end());
    rotated.insert(rotated.end(), verts.begin(), verts.begin() + shift);
    Polygon pr(rotated);
    std::vector<Point2> reversed(verts.rbegin(), verts.rend());
    Polygon pv(reversed);
    CHECK(pr.area() == doctest::Approx(p.area()));
    CHECK(pv.area() == doctest::Approx(p.area()));
    CHECK(pr.perimeter() == doctest::Approx(p.perimeter()));
    CHECK(pv.perimeter() == doctest::Approx(p.perimeter()));
  }
}

TEST_CASE("inward offset of a convex polygon stays convex") {
  Polygon hexagon({{50, 0}, {93, 25}, {93, 75}, {50, 100}, {7, 75}, {7, 25}});
  Polygon inset = geometry::offset(hexagon, -8.0);
  const auto& v = inset.vertices();
  double sign = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Point2& a = v[i];
    const Point2& b = v[(i + 1) % v.size()];
    const Point2& c = v[(i + 2) % v.size()];
    double cr = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
    if (sign == 0) sign = cr;
    CHECK(cr * sign >= 0);
  }
}

}  // TEST_SUITE

// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <random>

#include "hsm/geometry.hpp"

using namespace hsm;

namespace
{

PolygonFrames square()
{
  return build_polygon({{0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}, {-0.5, -0.5}});
}

PolygonFrames triangle()
{
  // side sqrt(3), centroid at the origin
  const double R = 1.0;
  std::vector<Vec2> v;
  for (int i = 0; i < 3; ++i)
  {
    const double a = -pi / 2.0 + 2.0 * pi * i / 3.0;
    v.push_back({R * std::cos(a), R * std::sin(a)});
  }
  return build_polygon(v);
}

}  // namespace

TEST_CASE("equilateral triangle frames", "[geometry]")
{
  const auto f = triangle();
  REQUIRE(f.size() == 3);
  CHECK(norm(f.centroid) < 1e-14);
  for (int j = 0; j < 3; ++j)
  {
    CHECK(std::abs(f.a[j] - 0.5) < 1e-14);
    CHECK(std::abs(f.theta[j] - pi / 3.0) < 1e-14);
  }
}

TEST_CASE("unit square frames", "[geometry]")
{
  const auto f = square();
  REQUIRE(f.size() == 4);
  for (int j = 0; j < 4; ++j)
  {
    CHECK(std::abs(f.a[j] - 0.5) < 1e-15);
    CHECK(std::abs(f.theta[j] - pi / 2.0) < 1e-15);
  }
}

TEST_CASE("clockwise input is reordered", "[geometry]")
{
  const auto f = build_polygon({{-0.5, -0.5}, {-0.5, 0.5}, {0.5, 0.5}, {0.5, -0.5}});
  for (int j = 0; j < 4; ++j)
  {
    CHECK(cross(f.vertices[j] - f.centroid, f.vertices[f.next(j)] - f.centroid) > 0.0);
  }
}

TEST_CASE("degenerate and non-convex polygons are rejected", "[geometry]")
{
  CHECK_THROWS_AS(build_polygon({{0, 0}, {1, 0}, {2, 0}}), GeometryError);
  CHECK_THROWS_AS(build_polygon({{0, 0}, {1, 0}}), GeometryError);
  CHECK_THROWS_AS(build_polygon({{0, 0}, {2, 0}, {1, 0.2}, {2, 2}, {0, 2}}), GeometryError);
}

TEST_CASE("local coordinates on the square", "[geometry]")
{
  const auto f = square();
  for (int j = 0; j < 4; ++j)
  {
    const auto p = to_local(f, j, f.centroid);
    CHECK(p.x1 == 0.0);
    CHECK(p.x2 == 0.0);
  }
  // midpoint of the first edge
  const Vec2 mid = 0.5 * (f.vertices[0] + f.vertices[1]);
  const auto m = to_local(f, 0, mid);
  CHECK(std::abs(m.x1 - 0.5) < 1e-15);
  CHECK(std::abs(m.x2) < 1e-15);
  // the corner S_1 lies on Sigma^1 and Sigma^2
  const Vec2 S = f.corner(0);
  CHECK(std::abs(to_local(f, 0, S).x1 - 0.5) < 1e-15);
  CHECK(std::abs(to_local(f, 1, S).x1 - 0.5) < 1e-15);
}

TEST_CASE("classification", "[geometry]")
{
  const auto f = square();
  // edge 1 is the right side x = 0.5
  auto c = classify(f, {10.0, 0.0});
  CHECK(c.halfplanes == std::vector<int>{0});
  CHECK_FALSE(c.inside);
  c = classify(f, {10.0, 10.0});
  CHECK(c.halfplanes == std::vector<int>{0, 1});
  c = classify(f, f.centroid);
  CHECK(c.halfplanes.empty());
  CHECK(c.inside);
}

TEST_CASE("to_local and to_global are inverse", "[geometry]")
{
  const auto f = build_polygon({{0.1, -0.4}, {1.3, 0.2}, {0.9, 1.1}, {-0.6, 0.8}, {-0.7, -0.1}});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i)
  {
    const Vec2 p{u(rng), u(rng)};
    for (int j = 0; j < f.size(); ++j)
    {
      worst = std::max(worst, norm(to_global(f, to_local(f, j, p)) - p));
    }
  }
  CHECK(worst <= 1e-13);
}

TEST_CASE("half-planes cover the exterior", "[geometry]")
{
  const auto f = triangle();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * pi), rad(2.0, 1e4);
  for (int i = 0; i < 1000; ++i)
  {
    const double a = ang(rng), r = rad(rng);
    const auto c = classify(f, {r * std::cos(a), r * std::sin(a)});
    CHECK_FALSE(c.halfplanes.empty());
  }
}

TEST_CASE("the N frame rotations compose to the identity", "[geometry]")
{
  const auto f = build_polygon({{0.1, -0.4}, {1.3, 0.2}, {0.9, 1.1}, {-0.6, 0.8}, {-0.7, -0.1}});
  const LocalPoint p0{0, 0.37, -1.21};
  LocalPoint p = p0;
  for (int j = 0; j < f.size(); ++j)
  {
    const LocalPoint q = rotate_to_next(f, p);
    // the rotation maps local coordinates of the same global point
    CHECK(norm(to_global(f, q) - to_global(f, p)) < 1e-13);
    p = q;
  }
  CHECK(p.j == 0);
  CHECK(std::abs(p.x1 - p0.x1) < 1e-12);
  CHECK(std::abs(p.x2 - p0.x2) < 1e-12);
}

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "hsm/common.hpp"
#include "hsm/error.hpp"

namespace hsm
{

// Convex polygon O with one local frame per edge.
//
// Edge j runs from vertices[j] to vertices[j+1] (counterclockwise). Frame j
// has its origin at the area centroid, e1 the outward normal of edge j and
// e2 = e1 rotated by +pi/2, i.e. the edge direction. In that frame the line
// Sigma^j is {x1 = a[j]}, the edge Gamma^j is the segment
// gamma_lo[j] <= x2 <= gamma_hi[j] of it, and the corner S_j = Sigma^j ∩
// Sigma^{j+1} is vertices[j+1] (x2 = gamma_hi[j]).
//
// theta[j] is the opening angle of the wedge Omega^j ∩ Omega^{j+1} at S_j
// (equal to the interior angle of O there); frame j+1 is frame j rotated by
// the exterior turning angle pi - theta[j].
struct PolygonFrames
{
  std::vector<Vec2> vertices;
  Vec2 centroid;
  std::vector<Vec2> e1;
  std::vector<Vec2> e2;
  std::vector<double> a;
  std::vector<double> theta;
  std::vector<double> gamma_lo;
  std::vector<double> gamma_hi;

  int size() const { return static_cast<int>(vertices.size()); }
  int next(int j) const { return (j + 1) % size(); }
  int prev(int j) const { return (j + size() - 1) % size(); }
  Vec2 corner(int j) const { return vertices[next(j)]; }
  // Point of Sigma^j with parameter x2^j = t.
  Vec2 sigma_point(int j, double t) const { return centroid + a[j] * e1[j] + t * e2[j]; }
  // Largest vertex distance from the centroid.
  double circumradius() const
  {
    double r = 0.0;
    for (const auto &v : vertices)
    {
      r = std::max(r, norm(v - centroid));
    }
    return r;
  }
  double diameter() const
  {
    double d = 0.0;
    for (const auto &u : vertices)
    {
      for (const auto &v : vertices)
      {
        d = std::max(d, norm(u - v));
      }
    }
    return d;
  }
};

struct LocalPoint
{
  int j = 0;
  double x1 = 0.0;
  double x2 = 0.0;
};

inline constexpr double convexity_tolerance = 1e-12;

inline PolygonFrames build_polygon(std::vector<Vec2> vertices)
{
  const int n = static_cast<int>(vertices.size());
  if (n < 3)
  {
    throw GeometryError("polygon needs at least 3 vertices, got " + std::to_string(n));
  }

  double area2 = 0.0;
  for (int i = 0; i < n; ++i)
  {
    area2 += cross(vertices[i], vertices[(i + 1) % n]);
  }
  if (area2 < 0.0)
  {
    std::reverse(vertices.begin(), vertices.end());
  }

  for (int i = 0; i < n; ++i)
  {
    const Vec2 p = vertices[(i + n - 1) % n];
    const Vec2 q = vertices[i];
    const Vec2 r = vertices[(i + 1) % n];
    const double lpq = norm(q - p);
    const double lqr = norm(r - q);
    if (lpq == 0.0 || lqr == 0.0)
    {
      std::ostringstream os;
      os << "repeated vertex " << i << " at (" << q.x << ", " << q.y << ")";
      throw GeometryError(os.str());
    }
    if (cross(q - p, r - q) <= convexity_tolerance * lpq * lqr)
    {
      std::ostringstream os;
      os << "polygon is not strictly convex at vertex " << i << " (" << q.x << ", " << q.y << ")";
      throw GeometryError(os.str());
    }
  }

  PolygonFrames f;
  f.vertices = vertices;

  // Area centroid via the shoelace formula.
  double area = 0.0, cx = 0.0, cy = 0.0;
  for (int i = 0; i < n; ++i)
  {
    const Vec2 p = vertices[i];
    const Vec2 q = vertices[(i + 1) % n];
    const double c = cross(p, q);
    area += c;
    cx += (p.x + q.x) * c;
    cy += (p.y + q.y) * c;
  }
  area *= 0.5;
  f.centroid = {cx / (6.0 * area), cy / (6.0 * area)};

  f.e1.resize(n);
  f.e2.resize(n);
  f.a.resize(n);
  f.theta.resize(n);
  f.gamma_lo.resize(n);
  f.gamma_hi.resize(n);
  for (int j = 0; j < n; ++j)
  {
    const Vec2 p = vertices[j];
    const Vec2 q = vertices[(j + 1) % n];
    const Vec2 d = q - p;
    const double len = norm(d);
    f.e2[j] = (1.0 / len) * d;
    f.e1[j] = {f.e2[j].y, -f.e2[j].x};
    f.a[j] = dot(p - f.centroid, f.e1[j]);
    f.gamma_lo[j] = dot(p - f.centroid, f.e2[j]);
    f.gamma_hi[j] = dot(q - f.centroid, f.e2[j]);
  }
  for (int j = 0; j < n; ++j)
  {
    const int k = (j + 1) % n;
    const double turn = std::atan2(cross(f.e1[j], f.e1[k]), dot(f.e1[j], f.e1[k]));
    f.theta[j] = pi - turn;
  }
  return f;
}

inline LocalPoint to_local(const PolygonFrames &f, int j, Vec2 p)
{
  const Vec2 r = p - f.centroid;
  return {j, dot(r, f.e1[j]), dot(r, f.e2[j])};
}

inline Vec2 to_global(const PolygonFrames &f, const LocalPoint &p)
{
  return f.centroid + p.x1 * f.e1[p.j] + p.x2 * f.e2[p.j];
}

// Frame j+1 coordinates from frame j coordinates by the recursion rotation.
inline LocalPoint rotate_to_next(const PolygonFrames &f, const LocalPoint &p)
{
  const double turn = pi - f.theta[p.j];
  const double c = std::cos(turn), s = std::sin(turn);
  return {f.next(p.j), c * p.x1 + s * p.x2, -s * p.x1 + c * p.x2};
}

struct Classification
{
  std::vector<int> halfplanes;  // all j with p in the open half-plane Omega^j
  bool inside = false;          // p in the open polygon O
};

inline Classification classify(const PolygonFrames &f, Vec2 p)
{
  Classification c;
  bool inside = true;
  for (int j = 0; j < f.size(); ++j)
  {
    const double x1 = to_local(f, j, p).x1;
    if (x1 > f.a[j])
    {
      c.halfplanes.push_back(j);
    }
    if (x1 >= f.a[j])
    {
      inside = false;
    }
  }
  c.inside = inside;
  return c;
}

}  // namespace hsm

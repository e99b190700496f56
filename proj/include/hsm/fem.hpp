// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "hsm/bump.hpp"
#include "hsm/common.hpp"
#include "hsm/error.hpp"
#include "hsm/geometry.hpp"
#include "hsm/halfplane.hpp"
#include "hsm/hsm_core.hpp"
#include "hsm/quadrature.hpp"
#include "hsm/trace.hpp"

namespace hsm
{

// Part index of a boundary edge: the obstacle boundary Gamma, or j for the
// coupling boundary Gamma_b^j (0-based).
inline constexpr int obstacle_part = -1;

struct BoundaryEdge
{
  int a = 0;
  int b = 0;
  int part = obstacle_part;
};

struct FemMesh
{
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> triangles;  // counterclockwise
  std::vector<BoundaryEdge> boundary;
  std::vector<cplx> rho;  // per triangle
  std::vector<cplx> f;    // per triangle
  // Optional load moments int_T f lambda_i; when empty the load is f*area/3.
  std::vector<std::array<cplx, 3>> f_moments;

  double area(int t) const
  {
    const auto &T = triangles[t];
    return 0.5 * cross(nodes[T[1]] - nodes[T[0]], nodes[T[2]] - nodes[T[0]]);
  }
};

// Orients triangles counterclockwise and checks conformity: every edge is
// shared by at most two triangles, the tagged edges are exactly the edges
// used once, and no triangle is degenerate.
inline void check_mesh(FemMesh &mesh)
{
  const int nn = static_cast<int>(mesh.nodes.size());
  const int nt = static_cast<int>(mesh.triangles.size());
  if (nn < 3 || nt < 1)
  {
    throw GeometryError("mesh needs at least one triangle");
  }
  double scale = 0.0;
  for (const auto &p : mesh.nodes)
  {
    scale = std::max({scale, std::abs(p.x), std::abs(p.y)});
  }
  std::map<std::pair<int, int>, int> uses;
  for (int t = 0; t < nt; ++t)
  {
    auto &T = mesh.triangles[t];
    for (int v : T)
    {
      if (v < 0 || v >= nn)
      {
        throw GeometryError("triangle " + std::to_string(t) + " references missing node " +
                            std::to_string(v));
      }
    }
    double ar = mesh.area(t);
    if (std::abs(ar) <= 1e-14 * scale * scale)
    {
      throw GeometryError("triangle " + std::to_string(t) + " is degenerate");
    }
    if (ar < 0.0)
    {
      std::swap(T[1], T[2]);
    }
    for (int e = 0; e < 3; ++e)
    {
      const int u = T[e], v = T[(e + 1) % 3];
      ++uses[{std::min(u, v), std::max(u, v)}];
    }
  }
  int free_edges = 0;
  for (const auto &[e, n] : uses)
  {
    if (n > 2)
    {
      throw GeometryError("mesh edge (" + std::to_string(e.first) + ", " +
                          std::to_string(e.second) + ") is shared by " + std::to_string(n) +
                          " triangles");
    }
    free_edges += (n == 1);
  }
  std::map<std::pair<int, int>, int> tagged;
  for (const auto &be : mesh.boundary)
  {
    const std::pair<int, int> key{std::min(be.a, be.b), std::max(be.a, be.b)};
    const auto it = uses.find(key);
    if (it == uses.end() || it->second != 1)
    {
      throw GeometryError("tagged edge (" + std::to_string(be.a) + ", " + std::to_string(be.b) +
                          ") is not on the mesh boundary");
    }
    if (++tagged[key] > 1)
    {
      throw GeometryError("boundary edge (" + std::to_string(be.a) + ", " +
                          std::to_string(be.b) + ") is tagged twice");
    }
  }
  if (static_cast<int>(tagged.size()) != free_edges)
  {
    throw GeometryError("every boundary edge must carry a tag (" + std::to_string(free_edges) +
                        " boundary edges, " + std::to_string(tagged.size()) + " tagged)");
  }
  mesh.rho.resize(nt, cplx(1.0, 0.0));
  mesh.f.resize(nt, cplx{});
}

// Structured mesh of the square [-outer/2, outer/2]^2 with n x n cells, each
// split into two triangles, minus the centred square of side `inner` (none
// if inner <= 0). Outer sides are tagged right = Gamma_b^0, top = 1,
// left = 2, bottom = 3; the hole boundary is the obstacle.
inline FemMesh build_square_ring_mesh(double outer, double inner, int n)
{
  if (!(outer > 0.0) || n < 4)
  {
    throw DomainError("ring mesh needs outer > 0 and n >= 4");
  }
  if (inner >= outer)
  {
    throw DomainError("inner square must be smaller than the outer square");
  }
  const double cell = outer / n;
  int m = n;  // cells in [m, n-m) on both axes are removed
  if (inner > 0.0)
  {
    const double mm = 0.5 * (outer - inner) / cell;
    if (std::abs(mm - std::round(mm)) > 1e-9 * n)
    {
      throw DomainError("inner square sides must fall on grid lines");
    }
    m = static_cast<int>(std::round(mm));
  }
  auto removed = [&](int i, int j) { return i >= m && i < n - m && j >= m && j < n - m; };

  std::vector<int> index((n + 1) * (n + 1), -1);
  FemMesh mesh;
  auto node = [&](int i, int j)
  {
    int &id = index[j * (n + 1) + i];
    if (id < 0)
    {
      id = static_cast<int>(mesh.nodes.size());
      mesh.nodes.push_back({-0.5 * outer + i * cell, -0.5 * outer + j * cell});
    }
    return id;
  };
  for (int j = 0; j < n; ++j)
  {
    for (int i = 0; i < n; ++i)
    {
      if (removed(i, j))
      {
        continue;
      }
      const int v00 = node(i, j), v10 = node(i + 1, j), v11 = node(i + 1, j + 1),
                v01 = node(i, j + 1);
      mesh.triangles.push_back({v00, v10, v11});
      mesh.triangles.push_back({v00, v11, v01});
    }
  }

  std::map<std::pair<int, int>, int> uses;
  for (const auto &T : mesh.triangles)
  {
    for (int e = 0; e < 3; ++e)
    {
      ++uses[{std::min(T[e], T[(e + 1) % 3]), std::max(T[e], T[(e + 1) % 3])}];
    }
  }
  const double half = 0.5 * outer, tol = 1e-9 * outer;
  for (const auto &[e, count] : uses)
  {
    if (count != 1)
    {
      continue;
    }
    const Vec2 mid = 0.5 * (mesh.nodes[e.first] + mesh.nodes[e.second]);
    int part = obstacle_part;
    if (std::abs(mid.x - half) < tol)
    {
      part = 0;
    }
    else if (std::abs(mid.y - half) < tol)
    {
      part = 1;
    }
    else if (std::abs(mid.x + half) < tol)
    {
      part = 2;
    }
    else if (std::abs(mid.y + half) < tol)
    {
      part = 3;
    }
    mesh.boundary.push_back({e.first, e.second, part});
  }
  check_mesh(mesh);
  return mesh;
}

// Reassigns every non-obstacle boundary edge to the half-plane containing it
// most deeply (largest distance of its nearer endpoint to Sigma^j).
inline void assign_outer_parts(FemMesh &mesh, const PolygonFrames &frames)
{
  for (auto &be : mesh.boundary)
  {
    if (be.part == obstacle_part)
    {
      continue;
    }
    double best = -1e300;
    for (int j = 0; j < frames.size(); ++j)
    {
      const double d = std::min(to_local(frames, j, mesh.nodes[be.a]).x1,
                                to_local(frames, j, mesh.nodes[be.b]).x1) -
                       frames.a[j];
      if (d > best)
      {
        best = d;
        be.part = j;
      }
    }
  }
}

// Plain-text mesh format:
//   nodes <n>       then n lines "x y"
//   triangles <m>   then m lines "i j k" (0-based)
//   boundary <b>    then b lines "i j tag", tag in {gamma, gb1, ..., gbN}
// '#' starts a comment.
inline FemMesh read_mesh(std::istream &in)
{
  std::vector<std::string> tok;
  std::string line;
  while (std::getline(in, line))
  {
    if (const auto c = line.find('#'); c != std::string::npos)
    {
      line.resize(c);
    }
    std::istringstream ls(line);
    std::string w;
    while (ls >> w)
    {
      tok.push_back(w);
    }
  }
  std::size_t pos = 0;
  auto next = [&](const char *what) -> const std::string &
  {
    if (pos >= tok.size())
    {
      throw IoError(std::string("mesh file ended while reading ") + what);
    }
    return tok[pos++];
  };
  auto number = [&](const char *what)
  {
    const std::string &s = next(what);
    try
    {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size())
      {
        throw std::invalid_argument(s);
      }
      return v;
    }
    catch (const std::logic_error &)
    {
      throw IoError(std::string("mesh file: bad ") + what + " '" + s + "'");
    }
  };
  auto integer = [&](const char *what)
  {
    const double v = number(what);
    if (v != std::floor(v) || v < 0)
    {
      throw IoError(std::string("mesh file: bad ") + what);
    }
    return static_cast<int>(v);
  };
  auto keyword = [&](const char *kw)
  {
    if (next(kw) != kw)
    {
      throw IoError(std::string("mesh file: expected '") + kw + "'");
    }
  };

  FemMesh mesh;
  keyword("nodes");
  const int nn = integer("node count");
  for (int i = 0; i < nn; ++i)
  {
    const double x = number("node coordinate");
    const double y = number("node coordinate");
    mesh.nodes.push_back({x, y});
  }
  keyword("triangles");
  const int nt = integer("triangle count");
  for (int i = 0; i < nt; ++i)
  {
    std::array<int, 3> T;
    for (int &v : T)
    {
      v = integer("triangle index");
    }
    mesh.triangles.push_back(T);
  }
  keyword("boundary");
  const int nb = integer("boundary count");
  for (int i = 0; i < nb; ++i)
  {
    BoundaryEdge be;
    be.a = integer("boundary index");
    be.b = integer("boundary index");
    const std::string tag = next("boundary tag");
    if (tag == "gamma")
    {
      be.part = obstacle_part;
    }
    else if (tag.size() > 2 && tag.compare(0, 2, "gb") == 0 &&
             tag.find_first_not_of("0123456789", 2) == std::string::npos && tag[2] != '0')
    {
      be.part = std::stoi(tag.substr(2)) - 1;
    }
    else
    {
      throw IoError("mesh file: unknown boundary tag '" + tag + "'");
    }
    mesh.boundary.push_back(be);
  }
  if (pos != tok.size())
  {
    throw IoError("mesh file: trailing content after the boundary section");
  }
  check_mesh(mesh);
  return mesh;
}

inline void write_mesh(std::ostream &out, const FemMesh &mesh)
{
  out << std::setprecision(17);
  out << "nodes " << mesh.nodes.size() << "\n";
  for (const auto &p : mesh.nodes)
  {
    out << p.x << " " << p.y << "\n";
  }
  out << "triangles " << mesh.triangles.size() << "\n";
  for (const auto &T : mesh.triangles)
  {
    out << T[0] << " " << T[1] << " " << T[2] << "\n";
  }
  out << "boundary " << mesh.boundary.size() << "\n";
  for (const auto &be : mesh.boundary)
  {
    out << be.a << " " << be.b << " "
        << (be.part == obstacle_part ? std::string("gamma") : "gb" + std::to_string(be.part + 1))
        << "\n";
  }
}

// Local P1 matrices of a counterclockwise triangle.
struct ElementMatrices
{
  double area = 0.0;
  std::array<std::array<double, 3>, 3> stiffness{};
  std::array<std::array<double, 3>, 3> mass{};
  std::array<Vec2, 3> grad{};  // gradients of the barycentric coordinates
};

inline ElementMatrices p1_element(Vec2 p0, Vec2 p1, Vec2 p2)
{
  ElementMatrices E;
  E.area = 0.5 * cross(p1 - p0, p2 - p0);
  const std::array<Vec2, 3> p{p0, p1, p2};
  for (int i = 0; i < 3; ++i)
  {
    // grad lambda_i is the inward normal of the opposite edge over its height.
    const Vec2 e = p[(i + 2) % 3] - p[(i + 1) % 3];
    E.grad[i] = (0.5 / E.area) * Vec2{-e.y, e.x};
  }
  for (int i = 0; i < 3; ++i)
  {
    for (int j = 0; j < 3; ++j)
    {
      E.stiffness[i][j] = E.area * dot(E.grad[i], E.grad[j]);
      E.mass[i][j] = E.area / 12.0 * (i == j ? 2.0 : 1.0);
    }
  }
  return E;
}

// Fraction of triangle abc inside the disc and the barycentric moments
// (1/|T|) int_{T ∩ disc} lambda_i. Triangles inside or outside the disc are
// exact; cut triangles are sampled on s^2 congruent sub-triangles.
struct DiscOverlap
{
  double fraction = 0.0;
  std::array<double, 3> moments{};
};

inline double distance_to_triangle(Vec2 p, Vec2 a, Vec2 b, Vec2 c)
{
  const double c0 = cross(b - a, p - a), c1 = cross(c - b, p - b), c2 = cross(a - c, p - c);
  if ((c0 >= 0 && c1 >= 0 && c2 >= 0) || (c0 <= 0 && c1 <= 0 && c2 <= 0))
  {
    return 0.0;
  }
  auto seg = [&](Vec2 u, Vec2 v)
  {
    const Vec2 d = v - u;
    const double s = std::clamp(dot(p - u, d) / dot(d, d), 0.0, 1.0);
    return norm(p - (u + s * d));
  };
  return std::min({seg(a, b), seg(b, c), seg(c, a)});
}

inline DiscOverlap disc_overlap(Vec2 a, Vec2 b, Vec2 c, const DiscBump &bump, int s)
{
  DiscOverlap o;
  const double r = bump.radius;
  if (norm(a - bump.center) <= r && norm(b - bump.center) <= r && norm(c - bump.center) <= r)
  {
    return {1.0, {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}};
  }
  if (distance_to_triangle(bump.center, a, b, c) >= r)
  {
    return o;
  }
  const double w = 1.0 / double(s * s);
  for (int i = 0; i < s; ++i)
  {
    for (int j = 0; j + i < s; ++j)
    {
      // upright sub-triangle (i, j), and the inverted one next to it
      for (int flip = 0; flip < 2; ++flip)
      {
        if (flip && i + j + 1 >= s)
        {
          continue;
        }
        const double u = flip ? (i + 2.0 / 3.0) / s : (i + 1.0 / 3.0) / s;
        const double v = flip ? (j + 2.0 / 3.0) / s : (j + 1.0 / 3.0) / s;
        if (norm(a + u * (b - a) + v * (c - a) - bump.center) < bump.radius)
        {
          o.fraction += w;
          o.moments[0] += w * (1.0 - u - v);
          o.moments[1] += w * u;
          o.moments[2] += w * v;
        }
      }
    }
  }
  return o;
}

// Piecewise-constant rho = 1 + sum (value - 1) * fraction and
// f = sum value * fraction per triangle. The load moments of f are kept
// separately: a disc edge cutting a triangle then does not shift the load
// between its vertices.
inline void apply_bumps(FemMesh &mesh, const std::vector<DiscBump> &rho,
                        const std::vector<DiscBump> &f, int subdivisions = 64)
{
  for (const auto &b : rho)
  {
    if (b.value.imag() < 0.0)
    {
      throw DomainError("rho must have a non-negative imaginary part");
    }
  }
  const int nt = static_cast<int>(mesh.triangles.size());
  mesh.rho.assign(nt, cplx(1.0, 0.0));
  mesh.f.assign(nt, cplx{});
  mesh.f_moments.assign(nt, {});
  for (int t = 0; t < nt; ++t)
  {
    const auto &T = mesh.triangles[t];
    const Vec2 a = mesh.nodes[T[0]], b = mesh.nodes[T[1]], c = mesh.nodes[T[2]];
    for (const auto &bump : rho)
    {
      mesh.rho[t] += (bump.value - 1.0) * disc_overlap(a, b, c, bump, subdivisions).fraction;
    }
    const double ar = mesh.area(t);
    for (const auto &bump : f)
    {
      const auto o = disc_overlap(a, b, c, bump, subdivisions);
      mesh.f[t] += bump.value * o.fraction;
      for (int i = 0; i < 3; ++i)
      {
        mesh.f_moments[t][i] += bump.value * ar * o.moments[i];
      }
    }
  }
}

struct MeshLocation
{
  int tri = -1;
  std::array<double, 3> bary{};
  bool found() const { return tri >= 0; }
};

// Bucket grid over the mesh bounding box for point location.
class MeshLocator
{
public:
  MeshLocator() = default;
  explicit MeshLocator(const FemMesh &mesh) : mesh_(&mesh)
  {
    lo_ = hi_ = mesh.nodes.front();
    for (const auto &p : mesh.nodes)
    {
      lo_ = {std::min(lo_.x, p.x), std::min(lo_.y, p.y)};
      hi_ = {std::max(hi_.x, p.x), std::max(hi_.y, p.y)};
    }
    bins_ = std::max(1, static_cast<int>(std::sqrt(double(mesh.triangles.size()) / 2.0)));
    cell_ = {(hi_.x - lo_.x) / bins_, (hi_.y - lo_.y) / bins_};
    buckets_.assign(bins_ * bins_, {});
    for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t)
    {
      Vec2 a = mesh.nodes[mesh.triangles[t][0]], b = a;
      for (int v : mesh.triangles[t])
      {
        const Vec2 p = mesh.nodes[v];
        a = {std::min(a.x, p.x), std::min(a.y, p.y)};
        b = {std::max(b.x, p.x), std::max(b.y, p.y)};
      }
      const auto [i0, j0] = bin(a);
      const auto [i1, j1] = bin(b);
      for (int j = j0; j <= j1; ++j)
      {
        for (int i = i0; i <= i1; ++i)
        {
          buckets_[j * bins_ + i].push_back(t);
        }
      }
    }
  }

  // Containing triangle (closed, with relative slack `tol`) or tri = -1.
  MeshLocation locate(Vec2 p, double tol = 1e-10) const
  {
    MeshLocation out;
    const double slack = tol * std::max(hi_.x - lo_.x, hi_.y - lo_.y);
    if (!mesh_ || p.x < lo_.x - slack || p.x > hi_.x + slack || p.y < lo_.y - slack ||
        p.y > hi_.y + slack)
    {
      return out;
    }
    const auto [i, j] = bin(p);
    for (int t : buckets_[j * bins_ + i])
    {
      const auto &T = mesh_->triangles[t];
      const Vec2 a = mesh_->nodes[T[0]], b = mesh_->nodes[T[1]], c = mesh_->nodes[T[2]];
      const double det = cross(b - a, c - a);
      const double l1 = cross(p - a, c - a) / det;
      const double l2 = cross(b - a, p - a) / det;
      const double l0 = 1.0 - l1 - l2;
      if (l0 >= -tol && l1 >= -tol && l2 >= -tol)
      {
        out.tri = t;
        out.bary = {l0, l1, l2};
        return out;
      }
    }
    return out;
  }

private:
  std::pair<int, int> bin(Vec2 p) const
  {
    auto clampi = [&](double v) { return std::clamp(static_cast<int>(v), 0, bins_ - 1); };
    return {clampi(cell_.x > 0 ? (p.x - lo_.x) / cell_.x : 0.0),
            clampi(cell_.y > 0 ? (p.y - lo_.y) / cell_.y : 0.0)};
  }

  const FemMesh *mesh_ = nullptr;
  Vec2 lo_, hi_, cell_;
  int bins_ = 1;
  std::vector<std::vector<int>> buckets_;
};

inline cplx p1_value(const FemMesh &mesh, const Eigen::VectorXcd &u, const MeshLocation &loc)
{
  const auto &T = mesh.triangles[loc.tri];
  return loc.bary[0] * u(T[0]) + loc.bary[1] * u(T[1]) + loc.bary[2] * u(T[2]);
}

inline CVec2 p1_gradient(const FemMesh &mesh, const Eigen::VectorXcd &u, int tri)
{
  const auto &T = mesh.triangles[tri];
  const auto E = p1_element(mesh.nodes[T[0]], mesh.nodes[T[1]], mesh.nodes[T[2]]);
  CVec2 g;
  for (int i = 0; i < 3; ++i)
  {
    g.x += E.grad[i].x * u(T[i]);
    g.y += E.grad[i].y * u(T[i]);
  }
  return g;
}

// Checks the assumptions of the coupled formulation: the polygon lies in the
// mesh, rho - 1 and f are supported in the closed polygon, Im rho >= 0, and
// each Gamma_b^j lies in Omega^j at least one grid spacing away from Sigma^j.
inline void check_coupled_setup(const PolygonFrames &frames, const FemMesh &mesh,
                                const MeshLocator &loc, const HsmDiscretization &disc)
{
  const int N = frames.size();
  const double tol = 1e-9 * std::max(1.0, frames.diameter());
  for (int v = 0; v < N; ++v)
  {
    if (!loc.locate(frames.vertices[v]).found())
    {
      std::ostringstream os;
      os << "polygon vertex " << v << " (" << frames.vertices[v].x << ", "
         << frames.vertices[v].y << ") is not covered by the mesh";
      throw GeometryError(os.str());
    }
  }
  auto in_polygon = [&](Vec2 p)
  {
    for (int j = 0; j < N; ++j)
    {
      if (to_local(frames, j, p).x1 > frames.a[j] + tol)
      {
        return false;
      }
    }
    return true;
  };
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t)
  {
    if (mesh.rho[t].imag() < 0.0)
    {
      throw DomainError("rho has a negative imaginary part in triangle " + std::to_string(t));
    }
    if (mesh.rho[t] == cplx(1.0, 0.0) && mesh.f[t] == cplx{})
    {
      continue;
    }
    for (int v : mesh.triangles[t])
    {
      if (!in_polygon(mesh.nodes[v]))
      {
        throw DomainError("rho - 1 or f is non-zero in triangle " + std::to_string(t) +
                          ", which is not inside the polygon");
      }
    }
  }
  std::vector<int> count(N, 0);
  for (const auto &be : mesh.boundary)
  {
    if (be.part == obstacle_part)
    {
      continue;
    }
    if (be.part < 0 || be.part >= N)
    {
      throw GeometryError("boundary tag gb" + std::to_string(be.part + 1) +
                          " does not name a polygon edge");
    }
    ++count[be.part];
    for (int v : {be.a, be.b})
    {
      const double d = to_local(frames, be.part, mesh.nodes[v]).x1 - frames.a[be.part];
      if (d < disc.grid.h)
      {
        std::ostringstream os;
        os << "node " << v << " of Gamma_b^" << be.part + 1 << " is " << d
           << " from Sigma^" << be.part + 1 << " (needs at least the grid spacing "
           << disc.grid.h << ")";
        throw GeometryError(os.str());
      }
    }
  }
  for (int j = 0; j < N; ++j)
  {
    if (count[j] == 0)
    {
      throw GeometryError("no boundary edge is tagged gb" + std::to_string(j + 1));
    }
  }
}

// Blocks of the coupled system, unknowns (traces, u_b):
//   [ H   -P ] [phi]   [0]
//   [ -C   K ] [u_b] = [F]
// H is the HSM matrix with identity rows on Gamma^j, P interpolates u_b at
// those nodes, K = stiffness - k^2 rho mass - ik boundary mass on Gamma_b
// and C holds int_{Gamma_b^j} (Lambda^j phi^j) v. C is stored only for the
// mesh nodes on Gamma_b (coupling_nodes).
struct CoupledSystem
{
  LinearSystem hsm;
  Eigen::SparseMatrix<cplx> K;
  Eigen::SparseMatrix<cplx> P;
  std::vector<int> coupling_nodes;
  Eigen::MatrixXcd C;
  Eigen::VectorXcd F;

  Eigen::MatrixXcd dense_matrix() const
  {
    const int nt = static_cast<int>(hsm.matrix.rows());
    const int nf = static_cast<int>(K.rows());
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(nt + nf, nt + nf);
    M.topLeftCorner(nt, nt) = hsm.matrix;
    M.topRightCorner(nt, nf) = -Eigen::MatrixXcd(P);
    M.bottomRightCorner(nf, nf) = Eigen::MatrixXcd(K);
    for (std::size_t i = 0; i < coupling_nodes.size(); ++i)
    {
      M.row(nt + coupling_nodes[i]).head(nt) = -C.row(i);
    }
    return M;
  }
  Eigen::VectorXcd dense_rhs() const
  {
    Eigen::VectorXcd b(hsm.rhs.size() + F.size());
    b << hsm.rhs, F;
    return b;
  }
};

namespace detail
{

inline Vec2 outward_normal(const FemMesh &mesh, const BoundaryEdge &be,
                           const std::map<std::pair<int, int>, int> &owner)
{
  const int t = owner.at({std::min(be.a, be.b), std::max(be.a, be.b)});
  int c = 0;
  for (int v : mesh.triangles[t])
  {
    if (v != be.a && v != be.b)
    {
      c = v;
    }
  }
  const Vec2 e = mesh.nodes[be.b] - mesh.nodes[be.a];
  Vec2 n = (1.0 / norm(e)) * Vec2{e.y, -e.x};
  if (dot(n, mesh.nodes[c] - mesh.nodes[be.a]) > 0.0)
  {
    n = -1.0 * n;
  }
  return n;
}

inline std::map<std::pair<int, int>, int> boundary_owner(const FemMesh &mesh)
{
  std::map<std::pair<int, int>, int> owner;
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t)
  {
    const auto &T = mesh.triangles[t];
    for (int e = 0; e < 3; ++e)
    {
      owner[{std::min(T[e], T[(e + 1) % 3]), std::max(T[e], T[(e + 1) % 3])}] = t;
    }
  }
  return owner;
}

// The coupled problem has no Dirichlet data: the grid interpolant is used on
// Gamma^j as well.
inline HsmDiscretization coupled_discretization(HsmDiscretization disc)
{
  disc.edge_data = false;
  return disc;
}

}  // namespace detail

inline constexpr int boundary_gauss_points = 3;

inline CoupledSystem assemble_coupled(const KernelParams &kp, const PolygonFrames &frames,
                                      const FemMesh &mesh, const HsmDiscretization &disc_in)
{
  const auto disc = detail::coupled_discretization(disc_in);
  const MeshLocator loc(mesh);
  check_coupled_setup(frames, mesh, loc, disc);
  const cplx k = kp.k;
  const int nf = static_cast<int>(mesh.nodes.size());

  CoupledSystem sys;
  sys.hsm = assemble_polygon(kp, frames, DirichletData{}, disc);
  const auto &L = sys.hsm.layout;
  const int nt = L.size();

  // FEM block.
  std::vector<Eigen::Triplet<cplx>> trip;
  sys.F = Eigen::VectorXcd::Zero(nf);
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t)
  {
    const auto &T = mesh.triangles[t];
    const auto E = p1_element(mesh.nodes[T[0]], mesh.nodes[T[1]], mesh.nodes[T[2]]);
    for (int i = 0; i < 3; ++i)
    {
      for (int j = 0; j < 3; ++j)
      {
        trip.emplace_back(T[i], T[j], E.stiffness[i][j] - k * k * mesh.rho[t] * E.mass[i][j]);
      }
      sys.F(T[i]) += mesh.f_moments.empty() ? mesh.f[t] * E.area / 3.0 : mesh.f_moments[t][i];
    }
  }
  for (const auto &be : mesh.boundary)
  {
    if (be.part == obstacle_part)
    {
      continue;  // homogeneous Neumann: natural
    }
    const double len = norm(mesh.nodes[be.b] - mesh.nodes[be.a]);
    const cplx c = -I * k * len / 6.0;
    trip.emplace_back(be.a, be.a, 2.0 * c);
    trip.emplace_back(be.b, be.b, 2.0 * c);
    trip.emplace_back(be.a, be.b, c);
    trip.emplace_back(be.b, be.a, c);
  }
  sys.K.resize(nf, nf);
  sys.K.setFromTriplets(trip.begin(), trip.end());

  // Gamma^j rows: phi^j(t_m) = u_b(P).
  std::vector<Eigen::Triplet<cplx>> ptrip;
  for (int j = 0; j < frames.size(); ++j)
  {
    for (int m = 0; m < L.nodes; ++m)
    {
      const double t = disc.grid.node(m);
      if (node_role(frames, j, t) != NodeRole::gamma)
      {
        continue;
      }
      const Vec2 P = frames.sigma_point(j, t);
      const auto where = loc.locate(P);
      if (!where.found())
      {
        std::ostringstream os;
        os << "edge " << j << " node at (" << P.x << ", " << P.y << ") is outside the mesh";
        throw GeometryError(os.str());
      }
      for (int i = 0; i < 3; ++i)
      {
        ptrip.emplace_back(L.value(j, m), mesh.triangles[where.tri][i], where.bary[i]);
      }
    }
  }
  sys.P.resize(nt, nf);
  sys.P.setFromTriplets(ptrip.begin(), ptrip.end());

  // Coupling block: Gauss points on Gamma_b, Lambda^j as a functional of
  // the trace unknowns.
  const auto owner = detail::boundary_owner(mesh);
  const auto &rule = quad::gauss_legendre(boundary_gauss_points);
  struct GaussPoint
  {
    int edge;
    int g;
  };
  std::vector<GaussPoint> points;
  std::vector<int> slot(nf, -1);
  for (int e = 0; e < static_cast<int>(mesh.boundary.size()); ++e)
  {
    const auto &be = mesh.boundary[e];
    if (be.part == obstacle_part)
    {
      continue;
    }
    for (int g = 0; g < boundary_gauss_points; ++g)
    {
      points.push_back({e, g});
    }
    for (int v : {be.a, be.b})
    {
      if (slot[v] < 0)
      {
        slot[v] = static_cast<int>(sys.coupling_nodes.size());
        sys.coupling_nodes.push_back(v);
      }
    }
  }
  std::vector<Eigen::VectorXcd> rows(points.size());
  parallel_for(points.size(), disc.threads,
               [&](std::size_t i)
               {
                 const auto &be = mesh.boundary[points[i].edge];
                 const int j = be.part;
                 const Vec2 a = mesh.nodes[be.a], b = mesh.nodes[be.b];
                 const double xi = rule.nodes[points[i].g];
                 const Vec2 x = a + 0.5 * (1.0 + xi) * (b - a);
                 const Vec2 n = detail::outward_normal(mesh, be, owner);
                 const auto lp = to_local(frames, j, x);
                 const auto F = build_functional<3>(k, frames.a[j], disc.grid, disc.tails,
                                                    disc.quad, lp.x1, lp.x2);
                 const double n1 = dot(n, frames.e1[j]), n2 = dot(n, frames.e2[j]);
                 auto robin = [&](const std::array<cplx, 3> &w)
                 { return w[1] * n1 + w[2] * n2 - I * k * w[0]; };
                 Eigen::VectorXcd r = Eigen::VectorXcd::Zero(nt);
                 for (int m = 0; m < L.nodes; ++m)
                 {
                   r(L.value(j, m)) = robin(F.nodes[m]);
                 }
                 if (L.tails)
                 {
                   r(L.c_plus(j)) = robin(F.c_plus);
                   r(L.c_minus(j)) = robin(F.c_minus);
                 }
                 rows[i] = std::move(r);
               });
  sys.C = Eigen::MatrixXcd::Zero(sys.coupling_nodes.size(), nt);
  for (std::size_t i = 0; i < points.size(); ++i)
  {
    const auto &be = mesh.boundary[points[i].edge];
    const double len = norm(mesh.nodes[be.b] - mesh.nodes[be.a]);
    const double xi = rule.nodes[points[i].g];
    const double w = 0.5 * len * rule.weights[points[i].g];
    sys.C.row(slot[be.a]) += (w * 0.5 * (1.0 - xi)) * rows[i].transpose();
    sys.C.row(slot[be.b]) += (w * 0.5 * (1.0 + xi)) * rows[i].transpose();
  }
  return sys;
}

struct CoupledSolution
{
  HsmSolutionPolygon exterior;  // traces and everything needed to evaluate them
  std::shared_ptr<const FemMesh> mesh;
  std::shared_ptr<const MeshLocator> locator;
  Eigen::VectorXcd u_b;
};

inline cplx eval_coupled(const CoupledSolution &sol, Vec2 p)
{
  const auto where = sol.locator->locate(p);
  if (where.found())
  {
    return p1_value(*sol.mesh, sol.u_b, where);
  }
  const auto cls = classify(sol.exterior.frames, p);
  if (cls.halfplanes.empty())
  {
    std::ostringstream os;
    os << "point (" << p.x << ", " << p.y << ") lies inside the obstacle";
    throw DomainError(os.str());
  }
  return reconstruct(sol.exterior, p);
}

// Robin mismatch (d/dn - ik)(u_b - U^j(phi^j)) at the midpoints of Gamma_b.
// The P1 normal derivative is only first-order accurate, so this measures
// discretization error rather than solver error.
inline double robin_residual(const CoupledSolution &sol)
{
  const auto &mesh = *sol.mesh;
  const auto owner = detail::boundary_owner(mesh);
  const auto &ext = sol.exterior;
  double worst = 0.0;
  for (const auto &be : mesh.boundary)
  {
    if (be.part == obstacle_part)
    {
      continue;
    }
    const Vec2 x = 0.5 * (mesh.nodes[be.a] + mesh.nodes[be.b]);
    const Vec2 n = detail::outward_normal(mesh, be, owner);
    const int t = owner.at({std::min(be.a, be.b), std::max(be.a, be.b)});
    const auto g = p1_gradient(mesh, sol.u_b, t);
    const cplx ub = 0.5 * (sol.u_b(be.a) + sol.u_b(be.b));
    const cplx fem = g.x * n.x + g.y * n.y - I * ext.kp.k * ub;
    const cplx hsm =
        op_Lambda(ext.kp, ext.frames, be.part, ext.traces[be.part], ext.disc.quad, {{x, n}})[0];
    worst = std::max(worst, std::abs(fem - hsm));
  }
  return worst;
}

// Eliminates u_b: with W = P K^{-1},
//   (H - W C) phi = rhs_H + W F,   u_b = K^{-1} (F + C phi).
// K is complex symmetric, so the rows of W come from solves with K itself.
inline CoupledSolution solve_coupled(const KernelParams &kp, const PolygonFrames &frames,
                                     const FemMesh &mesh_in, const HsmDiscretization &disc_in)
{
  const auto disc = detail::coupled_discretization(disc_in);
  auto mesh = std::make_shared<FemMesh>(mesh_in);
  check_mesh(*mesh);
  const auto sys = assemble_coupled(kp, frames, *mesh, disc);
  const int nt = static_cast<int>(sys.hsm.matrix.rows());
  const int nf = static_cast<int>(sys.K.rows());

  Eigen::SparseLU<Eigen::SparseMatrix<cplx>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(sys.K);
  if (lu.info() != Eigen::Success)
  {
    throw SolveError("finite element block is singular: " + lu.lastErrorMessage(), 0.0);
  }

  std::vector<int> grows;  // trace rows coupled to u_b
  const Eigen::SparseMatrix<cplx, Eigen::RowMajor> Prow(sys.P);
  for (int r = 0; r < nt; ++r)
  {
    if (Prow.outerIndexPtr()[r + 1] > Prow.outerIndexPtr()[r])
    {
      grows.push_back(r);
    }
  }
  Eigen::MatrixXcd PT = Eigen::MatrixXcd::Zero(nf, grows.size());
  for (std::size_t i = 0; i < grows.size(); ++i)
  {
    for (Eigen::SparseMatrix<cplx, Eigen::RowMajor>::InnerIterator it(Prow, grows[i]); it; ++it)
    {
      PT(it.col(), i) = it.value();
    }
  }
  const Eigen::MatrixXcd WT = lu.solve(PT);  // column i = row grows[i] of W

  Eigen::MatrixXcd M = sys.hsm.matrix;
  Eigen::VectorXcd b = sys.hsm.rhs;
  for (std::size_t i = 0; i < grows.size(); ++i)
  {
    const int r = grows[i];
    for (std::size_t c = 0; c < sys.coupling_nodes.size(); ++c)
    {
      M.row(r) -= WT(sys.coupling_nodes[c], i) * sys.C.row(c);
    }
    b(r) += (WT.col(i).transpose() * sys.F)(0);
  }

  CoupledSolution sol;
  sol.mesh = mesh;
  sol.locator = std::make_shared<MeshLocator>(*mesh);
  auto &ext = sol.exterior;
  ext.kp = kp;
  ext.frames = frames;
  ext.disc = disc;
  const Eigen::VectorXcd phi = dense_solve(M, b, &ext.report.rcond);

  Eigen::VectorXcd rhs = sys.F;
  for (std::size_t c = 0; c < sys.coupling_nodes.size(); ++c)
  {
    rhs(sys.coupling_nodes[c]) += (sys.C.row(c) * phi)(0);
  }
  sol.u_b = lu.solve(rhs);
  ext.traces = unpack_traces(phi, sys.hsm.layout, kp, frames, disc);

  // Residuals of the full block system.
  Eigen::VectorXcd r1 = sys.hsm.matrix * phi - sys.P * sol.u_b - sys.hsm.rhs;
  Eigen::VectorXcd r2 = sys.K * sol.u_b - sys.F;
  for (std::size_t c = 0; c < sys.coupling_nodes.size(); ++c)
  {
    r2(sys.coupling_nodes[c]) -= (sys.C.row(c) * phi)(0);
  }
  ext.report.linear_residual =
      std::max(r1.size() ? r1.cwiseAbs().maxCoeff() : 0.0, r2.cwiseAbs().maxCoeff());
  for (int r : grows)
  {
    ext.report.matching = std::max(ext.report.matching, std::abs(r1(r)));
  }
  for (const auto &tr : ext.traces)
  {
    ext.report.seam = std::max(ext.report.seam, seam_residual(tr));
  }
  ext.report.compatibility = compatibility_residual(ext);
  ext.report.robin = robin_residual(sol);
  return sol;
}

}  // namespace hsm

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "hsm/common.hpp"
#include "hsm/error.hpp"
#include "hsm/geometry.hpp"
#include "hsm/halfplane.hpp"
#include "hsm/quadrature.hpp"
#include "hsm/trace.hpp"

namespace hsm
{

// Same grid on every Sigma^j. Tail unknowns are present iff Im k = 0.
struct HsmDiscretization
{
  TraceGrid grid;
  bool tails = true;
  QuadratureSpec quad;
  int threads = 1;
  // Integrate the Dirichlet data itself on Gamma^j instead of the grid
  // interpolant of its samples.
  bool edge_data = true;
};

// Default truncation: the larger of 8 wavelengths and twice the diameter.
inline double default_truncation(const PolygonFrames &frames, cplx k)
{
  return std::max(8.0 * 2.0 * pi / k.real(), 2.0 * frames.diameter());
}

inline HsmDiscretization make_discretization(const PolygonFrames &frames, cplx k, double A,
                                             double h, int stencil = 10)
{
  check_wavenumber(k);
  if (A <= 0.0)
  {
    A = default_truncation(frames, k);
  }
  if (h <= 0.0)
  {
    h = 2.0 * pi / k.real() / 20.0;
  }
  // Round h down so that 2A/h is an integer.
  const double cells = std::ceil(2.0 * A / h - 1e-9);
  HsmDiscretization disc;
  disc.grid = make_grid(A, 2.0 * A / cells, stencil);
  disc.tails = k.imag() == 0.0;
  return disc;
}

// Which block of the system a grid node of Sigma^j belongs to.
enum class NodeRole
{
  gamma,  // on the edge Gamma^j (ties at the corners included)
  next,   // Sigma^j ∩ Omega^{j+1}: beyond the corner S_j
  prev,   // Sigma^j ∩ Omega^{j-1}: before the corner S_{j-1}
};

inline NodeRole node_role(const PolygonFrames &frames, int j, double t)
{
  const double eps = 1e-12 * std::max(1.0, std::abs(t));
  if (t > frames.gamma_hi[j] + eps)
  {
    return NodeRole::next;
  }
  if (t < frames.gamma_lo[j] - eps)
  {
    return NodeRole::prev;
  }
  return NodeRole::gamma;
}

// Unknown layout: per edge, nodes() grid values followed (with tails) by
// c+ and c-.
struct TraceLayout
{
  int edges = 0;
  int nodes = 0;
  bool tails = true;

  int per_edge() const { return nodes + (tails ? 2 : 0); }
  int size() const { return edges * per_edge(); }
  int value(int j, int m) const { return j * per_edge() + m; }
  int c_plus(int j) const { return j * per_edge() + nodes; }
  int c_minus(int j) const { return j * per_edge() + nodes + 1; }
};

struct LinearSystem
{
  Eigen::MatrixXcd matrix;
  Eigen::VectorXcd rhs;
  TraceLayout layout;
};

// Dirichlet data g on Gamma: g(edge, point).
using DirichletData = std::function<cplx(int, Vec2)>;

namespace detail
{

// Writes "phi^j(t) - U^src(phi^src)(P) = 0" into row r (only the trace
// columns; the identity entry is set by the caller).
inline void write_d_row(Eigen::MatrixXcd &M, Eigen::VectorXcd &rhs, int r,
                        const KernelParams &kp, const PolygonFrames &frames,
                        const HsmDiscretization &disc, const TraceLayout &L, int src, Vec2 P,
                        const EdgeData *edge)
{
  const auto lp = to_local(frames, src, P);
  const auto F = build_functional<1>(kp.k, frames.a[src], disc.grid, disc.tails, disc.quad,
                                     lp.x1, lp.x2, edge);
  rhs(r) += F.constant[0];
  for (int m = 0; m < L.nodes; ++m)
  {
    M(r, L.value(src, m)) -= F.nodes[m][0];
  }
  if (L.tails)
  {
    M(r, L.c_plus(src)) -= F.c_plus[0];
    M(r, L.c_minus(src)) -= F.c_minus[0];
  }
}

inline void write_tail_rows(Eigen::MatrixXcd &M, const KernelParams &kp,
                            const HsmDiscretization &disc, const TraceLayout &L, int j, int r0)
{
  const cplx m = tail_model(kp.k, disc.grid.A);
  M(r0, L.value(j, L.nodes - 1)) = 1.0;
  M(r0, L.c_plus(j)) = -m;
  M(r0 + 1, L.value(j, 0)) = 1.0;
  M(r0 + 1, L.c_minus(j)) = -m;
}

}  // namespace detail

inline std::vector<std::shared_ptr<const EdgeData>> make_edge_data(const PolygonFrames &frames,
                                                                   const DirichletData &g)
{
  std::vector<std::shared_ptr<const EdgeData>> out;
  for (int j = 0; j < frames.size(); ++j)
  {
    auto e = std::make_shared<EdgeData>();
    e->lo = frames.gamma_lo[j];
    e->hi = frames.gamma_hi[j];
    if (g)
    {
      e->g = [frames, g, j](double t) { return g(j, frames.sigma_point(j, t)); };
    }
    else
    {
      e->g = [](double) { return cplx{}; };
    }
    out.push_back(std::move(e));
  }
  return out;
}

// Collocation of the HSM equations at every grid node:
//   Gamma^j nodes:            phi^j = g
//   Sigma^j ∩ Omega^{j+-1}:   phi^j = U^{j+-1}(phi^{j+-1})
// plus, with tails, phi^j(+-A) = c+-^j e^{ikA} A^{-1/2}.
inline LinearSystem assemble_polygon(const KernelParams &kp, const PolygonFrames &frames,
                                     const DirichletData &g, const HsmDiscretization &disc)
{
  check_quadrature(disc.quad);
  if (disc.tails != (kp.k.imag() == 0.0))
  {
    throw AssemblyError("tail unknowns must be enabled exactly when Im k = 0");
  }
  const int N = frames.size();
  TraceLayout L{N, disc.grid.nodes(), disc.tails};
  LinearSystem sys;
  sys.layout = L;
  sys.matrix = Eigen::MatrixXcd::Zero(L.size(), L.size());
  sys.rhs = Eigen::VectorXcd::Zero(L.size());

  std::vector<std::shared_ptr<const EdgeData>> edges(N);
  if (disc.edge_data)
  {
    edges = make_edge_data(frames, g);
  }

  // Row r of the node block is unknown r; tail rows are the c+- slots.
  std::vector<std::pair<int, int>> rows;  // (edge, node)
  for (int j = 0; j < N; ++j)
  {
    for (int m = 0; m < L.nodes; ++m)
    {
      rows.emplace_back(j, m);
    }
  }
  parallel_for(rows.size(), disc.threads,
               [&](std::size_t i)
               {
                 const auto [j, m] = rows[i];
                 const int r = L.value(j, m);
                 const double t = disc.grid.node(m);
                 const Vec2 P = frames.sigma_point(j, t);
                 sys.matrix(r, r) = 1.0;
                 switch (node_role(frames, j, t))
                 {
                 case NodeRole::gamma:
                   sys.rhs(r) = g ? g(j, P) : cplx{};
                   break;
                 case NodeRole::next:
                 {
                   const int src = frames.next(j);
                   detail::write_d_row(sys.matrix, sys.rhs, r, kp, frames, disc, L, src, P,
                                       edges[src].get());
                   break;
                 }
                 case NodeRole::prev:
                 {
                   const int src = frames.prev(j);
                   detail::write_d_row(sys.matrix, sys.rhs, r, kp, frames, disc, L, src, P,
                                       edges[src].get());
                   break;
                 }
                 }
               });
  if (L.tails)
  {
    for (int j = 0; j < N; ++j)
    {
      detail::write_tail_rows(sys.matrix, kp, disc, L, j, L.c_plus(j));
    }
  }
  return sys;
}

struct ResidualReport
{
  double rcond = 0.0;            // reciprocal condition estimate of the LU factors
  double linear_residual = 0.0;  // max |A x - b|
  double seam = 0.0;             // max seam mismatch over all traces
  double compatibility = 0.0;    // max |U^j - U^{j+1}| on the overlap sample set
  double matching = 0.0;         // coupled problems: max |phi^j - u_b| on Gamma^j
  double robin = 0.0;            // coupled problems: Robin-trace mismatch on Gamma_b
};

struct HsmSolutionPolygon
{
  std::vector<RadiatingTrace> traces;
  KernelParams kp{cplx(1.0, 0.0)};
  PolygonFrames frames;
  HsmDiscretization disc;
  ResidualReport report;
};

// Smallest acceptable reciprocal condition number of the dense factorization.
inline constexpr double singular_rcond = 1e-13;

inline Eigen::VectorXcd dense_solve(const Eigen::MatrixXcd &A, const Eigen::VectorXcd &b,
                                    double *rcond_out)
{
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(A);
  const double rc = lu.rcond();
  if (rcond_out)
  {
    *rcond_out = rc;
  }
  if (!(rc > singular_rcond))
  {
    std::ostringstream os;
    os << "system matrix is numerically singular (rcond = " << rc
       << "); the discretization is probably under-resolved";
    throw SolveError(os.str(), rc);
  }
  return lu.solve(b);
}

inline std::vector<RadiatingTrace> unpack_traces(const Eigen::VectorXcd &x, const TraceLayout &L,
                                                 const KernelParams &kp,
                                                 const PolygonFrames &frames,
                                                 const HsmDiscretization &disc)
{
  std::vector<RadiatingTrace> traces;
  for (int j = 0; j < L.edges; ++j)
  {
    auto tr = zero_trace(j, frames.a[j], kp.k, disc.grid, disc.tails);
    for (int m = 0; m < L.nodes; ++m)
    {
      tr.values[m] = x(L.value(j, m));
    }
    if (L.tails)
    {
      tr.c_plus = x(L.c_plus(j));
      tr.c_minus = x(L.c_minus(j));
    }
    traces.push_back(std::move(tr));
  }
  return traces;
}

// Random points of the overlap wedge Omega^j ∩ Omega^{j+1}, within `radius`
// of the corner. Fixed seed: the sample set is reproducible.
inline std::vector<Vec2> overlap_samples(const PolygonFrames &frames, int j, int count,
                                         double radius, unsigned seed = 12345)
{
  std::mt19937_64 rng(seed + static_cast<unsigned>(j));
  std::uniform_real_distribution<double> u(-radius, radius);
  const Vec2 S = frames.corner(j);
  const int jn = frames.next(j);
  std::vector<Vec2> pts;
  while (static_cast<int>(pts.size()) < count)
  {
    const Vec2 p = S + Vec2{u(rng), u(rng)};
    if (norm(p - S) > radius || norm(p - S) < 0.05 * radius)
    {
      continue;
    }
    if (to_local(frames, j, p).x1 > frames.a[j] && to_local(frames, jn, p).x1 > frames.a[jn])
    {
      pts.push_back(p);
    }
  }
  return pts;
}

inline double compatibility_residual(const HsmSolutionPolygon &sol, int samples_per_corner = 50)
{
  const auto &f = sol.frames;
  double worst = 0.0;
  const double radius = 2.0 * sol.kp.wavelength();
  for (int j = 0; j < f.size(); ++j)
  {
    const int jn = f.next(j);
    for (const Vec2 &p : overlap_samples(f, j, samples_per_corner, radius))
    {
      const cplx u1 = halfplane_eval(sol.kp, sol.traces[j], sol.disc.quad, to_local(f, j, p));
      const cplx u2 = halfplane_eval(sol.kp, sol.traces[jn], sol.disc.quad, to_local(f, jn, p));
      worst = std::max(worst, std::abs(u1 - u2));
    }
  }
  return worst;
}

inline HsmSolutionPolygon solve_polygon(const KernelParams &kp, const PolygonFrames &frames,
                                        const DirichletData &g, const HsmDiscretization &disc)
{
  const auto sys = assemble_polygon(kp, frames, g, disc);
  HsmSolutionPolygon sol;
  sol.kp = kp;
  sol.frames = frames;
  sol.disc = disc;
  const Eigen::VectorXcd x = dense_solve(sys.matrix, sys.rhs, &sol.report.rcond);
  sol.report.linear_residual = (sys.matrix * x - sys.rhs).cwiseAbs().maxCoeff();
  sol.traces = unpack_traces(x, sys.layout, kp, frames, disc);
  if (disc.edge_data)
  {
    const auto edges = make_edge_data(frames, g);
    for (int j = 0; j < frames.size(); ++j)
    {
      sol.traces[j].edge = edges[j];
    }
  }
  for (const auto &tr : sol.traces)
  {
    sol.report.seam = std::max(sol.report.seam, seam_residual(tr));
  }
  sol.report.compatibility = compatibility_residual(sol);
  return sol;
}

// Half-plane used to represent the field at p: the one containing p most
// deeply. Throws if p is not in the exterior domain.
inline int deepest_halfplane(const PolygonFrames &frames, Vec2 p)
{
  int best = -1;
  double depth = 0.0;
  for (int j = 0; j < frames.size(); ++j)
  {
    const double d = to_local(frames, j, p).x1 - frames.a[j];
    if (d > depth)
    {
      depth = d;
      best = j;
    }
  }
  if (best < 0)
  {
    std::ostringstream os;
    os << "point (" << p.x << ", " << p.y << ") is not outside the polygon";
    throw DomainError(os.str());
  }
  return best;
}

inline cplx reconstruct(const HsmSolutionPolygon &sol, Vec2 p)
{
  const int j = deepest_halfplane(sol.frames, p);
  return halfplane_eval(sol.kp, sol.traces[j], sol.disc.quad, to_local(sol.frames, j, p));
}

inline FieldSample reconstruct_sample(const HsmSolutionPolygon &sol, Vec2 p)
{
  const int j = deepest_halfplane(sol.frames, p);
  return halfplane_sample(sol.kp, sol.frames, sol.traces[j], sol.disc.quad, p);
}

namespace detail
{

// int_A^inf e^{i beta t} t^{-1/2} dt, beta > 0, along t = A + i s / beta.
inline cplx oscillatory_tail(double beta, double A, int points)
{
  const auto &lag = quad::gauss_laguerre(points, 0.0);
  cplx s{};
  for (std::size_t i = 0; i < lag.nodes.size(); ++i)
  {
    s += lag.weights[i] / std::sqrt(cplx(A, lag.nodes[i] / beta));
  }
  return I / beta * std::exp(I * beta * A) * s;
}

// Far-field pattern of U^j(phi^j) in the direction with local angle alpha
// (x_hat = cos(alpha) e1 + sin(alpha) e2), relative to the centroid.
inline cplx far_field_halfplane(const KernelParams &kp, const RadiatingTrace &tr,
                                const QuadratureSpec &q, double alpha)
{
  const double k = kp.k.real();
  const double ca = std::cos(alpha), sa = std::sin(alpha);
  const auto &g = tr.grid;
  const auto &rule = quad::gauss_legendre(q.order);
  cplx integral{};
  double lw[32];
  for (int c = 0; c < g.cells; ++c)
  {
    const double t0 = g.node(c);
    const int first = g.stencil_first(c);
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    {
      const double t = t0 + 0.5 * g.h * (1.0 + rule.nodes[i]);
      lagrange_weights((t - g.node(first)) / g.h, g.stencil, lw);
      cplx v{};
      for (int m = 0; m < g.stencil; ++m)
      {
        v += lw[m] * tr.values[first + m];
      }
      integral += 0.5 * g.h * rule.weights[i] * v * std::exp(-I * k * t * sa);
    }
  }
  if (tr.tails)
  {
    integral += tr.c_plus * oscillatory_tail(k * (1.0 - sa), g.A, q.tail_points);
    integral += tr.c_minus * oscillatory_tail(k * (1.0 + sa), g.A, q.tail_points);
  }
  return 0.5 * I * k * ca * std::sqrt(2.0 / (pi * k)) * std::exp(-0.75 * pi * I) *
         std::exp(-I * k * tr.a * ca) * integral;
}

}  // namespace detail

// F(x_hat) with u ~ F(x_hat) e^{ik|x|}/sqrt|x|, |x| measured from the
// centroid. Evaluated in the half-plane maximizing x_hat . e1^j (average of the
// two on ties).
inline cplx far_field(const HsmSolutionPolygon &sol, Vec2 direction)
{
  if (sol.kp.k.imag() != 0.0)
  {
    throw UnsupportedError("far-field pattern requires a real wavenumber");
  }
  const double len = norm(direction);
  if (!(len > 0.0))
  {
    throw DomainError("far-field direction must be non-zero");
  }
  const Vec2 xh = (1.0 / len) * direction;
  const auto &f = sol.frames;
  double best = -2.0;
  for (int j = 0; j < f.size(); ++j)
  {
    best = std::max(best, dot(xh, f.e1[j]));
  }
  cplx sum{};
  int count = 0;
  for (int j = 0; j < f.size(); ++j)
  {
    if (dot(xh, f.e1[j]) >= best - 1e-12)
    {
      const double alpha = std::atan2(dot(xh, f.e2[j]), dot(xh, f.e1[j]));
      sum += detail::far_field_halfplane(sol.kp, sol.traces[j], sol.disc.quad, alpha);
      ++count;
    }
  }
  return sum / double(count);
}

// R^{1/2} max |du/dr - ik u| over n points of the circle of radius R about
// the centroid.
inline double sommerfeld_residual(const HsmSolutionPolygon &sol, double R, int n_samples)
{
  if (sol.kp.k.imag() != 0.0)
  {
    throw UnsupportedError("Sommerfeld residual requires a real wavenumber");
  }
  if (!(R > sol.frames.circumradius()))
  {
    throw DomainError("Sommerfeld radius must exceed the circumradius of the polygon");
  }
  std::vector<double> vals(n_samples);
  parallel_for(n_samples, sol.disc.threads,
               [&](std::size_t i)
               {
                 const double th = 2.0 * pi * double(i) / n_samples;
                 const Vec2 dir{std::cos(th), std::sin(th)};
                 const auto s = reconstruct_sample(sol, sol.frames.centroid + R * dir);
                 const cplx dudr = s.grad.x * dir.x + s.grad.y * dir.y;
                 vals[i] = std::abs(dudr - I * sol.kp.k * s.value);
               });
  return std::sqrt(R) * *std::max_element(vals.begin(), vals.end());
}

}  // namespace hsm

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hsm/common.hpp"
#include "hsm/error.hpp"

namespace hsm
{

// Uniform grid t_m = -A + m h, m = 0..cells, with local Lagrange
// interpolation of `stencil` consecutive nodes.
struct TraceGrid
{
  double A = 0.0;
  double h = 0.0;
  int cells = 0;
  int stencil = 10;

  int nodes() const { return cells + 1; }
  double node(int m) const { return -A + m * h; }

  // Cell containing t (clamped to the grid) and the first node of its stencil.
  int cell_of(double t) const
  {
    const int c = static_cast<int>(std::floor((t + A) / h));
    return std::clamp(c, 0, cells - 1);
  }
  int stencil_first(int cell) const
  {
    return std::clamp(cell - stencil / 2 + 1, 0, nodes() - stencil);
  }
};

inline TraceGrid make_grid(double A, double h, int stencil = 10)
{
  if (!(A > 0.0) || !(h > 0.0))
  {
    throw DomainError("trace grid needs A > 0 and h > 0");
  }
  const double ratio = 2.0 * A / h;
  const double cells = std::round(ratio);
  if (std::abs(ratio - cells) > 1e-9 * ratio)
  {
    throw AssemblyError("2A/h = " + std::to_string(ratio) + " is not an integer");
  }
  if (stencil < 2 || stencil > cells + 1)
  {
    throw DomainError("interpolation stencil must have between 2 and cells+1 nodes");
  }
  return {A, h, static_cast<int>(cells), stencil};
}

// Lagrange basis on the nodes 0, 1, ..., p-1 evaluated at x (in units of h).
inline void lagrange_weights(double x, int p, double *w)
{
  for (int i = 0; i < p; ++i)
  {
    double v = 1.0;
    for (int m = 0; m < p; ++m)
    {
      if (m != i)
      {
        v *= (x - m) / double(i - m);
      }
    }
    w[i] = v;
  }
}

// Leading term of the radiation condition along Sigma: e^{ik|t|} |t|^{-1/2}.
inline cplx tail_model(cplx k, double t)
{
  const double s = std::abs(t);
  return std::exp(I * k * s) / std::sqrt(s);
}

// Known trace values on a sub-interval of Sigma (the Dirichlet data on the
// edge Gamma). Where present they replace the grid interpolant.
struct EdgeData
{
  double lo = 0.0;
  double hi = 0.0;
  std::function<cplx(double)> g;

  bool contains(double t) const { return t >= lo && t <= hi; }
};

struct RadiatingTrace
{
  int j = 0;
  double a = 0.0;  // position of Sigma^j in its frame (x1 = a)
  cplx k{1.0, 0.0};
  TraceGrid grid;
  std::vector<cplx> values;
  cplx c_plus{};
  cplx c_minus{};
  bool tails = true;  // off: the trace vanishes for |t| > A
  std::shared_ptr<const EdgeData> edge;
};

inline RadiatingTrace zero_trace(int j, double a, cplx k, const TraceGrid &grid, bool tails)
{
  RadiatingTrace tr;
  tr.j = j;
  tr.a = a;
  tr.k = k;
  tr.grid = grid;
  tr.values.assign(grid.nodes(), cplx{});
  tr.tails = tails;
  return tr;
}

inline cplx trace_eval(const RadiatingTrace &tr, double t)
{
  const auto &g = tr.grid;
  if (tr.edge && tr.edge->contains(t))
  {
    return tr.edge->g(t);
  }
  if (t > g.A)
  {
    return tr.tails ? tr.c_plus * tail_model(tr.k, t) : cplx{};
  }
  if (t < -g.A)
  {
    return tr.tails ? tr.c_minus * tail_model(tr.k, t) : cplx{};
  }
  const int first = g.stencil_first(g.cell_of(t));
  double w[32];
  lagrange_weights((t - g.node(first)) / g.h, g.stencil, w);
  cplx v{};
  for (int i = 0; i < g.stencil; ++i)
  {
    v += w[i] * tr.values[first + i];
  }
  return v;
}

// Mismatch between the grid values at +-A and the tail model there.
inline double seam_residual(const RadiatingTrace &tr)
{
  if (!tr.tails)
  {
    return 0.0;
  }
  const double A = tr.grid.A;
  const cplx m = tail_model(tr.k, A);
  return std::max(std::abs(tr.values.back() - tr.c_plus * m),
                  std::abs(tr.values.front() - tr.c_minus * m));
}

inline double seam_tolerance(const RadiatingTrace &tr)
{
  double vmax = 0.0;
  for (const auto &v : tr.values)
  {
    vmax = std::max(vmax, std::abs(v));
  }
  return 10.0 * tr.grid.h * tr.grid.h * vmax;
}

// Restriction of a trace to a parameter interval; evaluation delegates.
struct TraceSegmentView
{
  const RadiatingTrace *parent = nullptr;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  cplx operator()(double t) const
  {
    if (t < lo || t > hi)
    {
      throw DomainError("trace segment evaluated outside its interval");
    }
    return trace_eval(*parent, t);
  }
};

struct TailFit
{
  cplx c_plus{};
  cplx c_minus{};
  cplx b_plus{};
  cplx b_minus{};
  double residual = 0.0;  // Euclidean norm of the least-squares residual
};

// Least-squares fit of c e^{ik|t|}|t|^{-1/2} (1 + b/|t|) separately on t > 0
// and t < 0.
inline TailFit estimate_tail_coefficients(const std::vector<std::pair<double, cplx>> &samples, cplx k)
{
  TailFit fit;
  double res2 = 0.0;
  for (int side : {+1, -1})
  {
    std::vector<std::pair<double, cplx>> s;
    for (const auto &p : samples)
    {
      if (side * p.first > 0.0)
      {
        s.push_back(p);
      }
    }
    if (s.size() < 4)
    {
      throw EstimationError("tail fit needs at least 4 samples on each side, got " +
                            std::to_string(s.size()));
    }
    double tscale = 0.0;
    for (const auto &p : s)
    {
      tscale = std::max(tscale, std::abs(p.first));
    }
    const int n = static_cast<int>(s.size());
    Eigen::MatrixXcd M(n, 2);
    Eigen::VectorXcd y(n);
    for (int i = 0; i < n; ++i)
    {
      const double t = std::abs(s[i].first);
      const cplx m = tail_model(k, t);
      M(i, 0) = m;
      M(i, 1) = m * (tscale / t);  // column scaled to O(1)
      y(i) = s[i].second;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(M);
    qr.setThreshold(1e-10);
    if (qr.rank() < 2)
    {
      throw EstimationError("tail fit is rank deficient (samples at too few distinct |t|)");
    }
    const Eigen::VectorXcd x = qr.solve(y);
    res2 += (M * x - y).squaredNorm();
    const cplx c = x(0);
    const cplx cb = x(1) * tscale;
    const cplx b = (c == cplx{}) ? cplx{} : cb / c;
    if (side > 0)
    {
      fit.c_plus = c;
      fit.b_plus = b;
    }
    else
    {
      fit.c_minus = c;
      fit.b_minus = b;
    }
  }
  fit.residual = std::sqrt(res2);
  return fit;
}

}  // namespace hsm

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <utility>
#include <vector>

#include "hsm/common.hpp"
#include "hsm/error.hpp"
#include "hsm/geometry.hpp"
#include "hsm/quadrature.hpp"
#include "hsm/specfun.hpp"
#include "hsm/trace.hpp"

// Half-plane Dirichlet propagator
//
//   U(psi)(x) = int_R H(k; x1 - a, x2 - t) psi(t) dt,
//   H(k; x1, x2) = (i k x1 / 2) H1(k|x|) / |x|,
//
// for a trace psi given by grid values and radiating tails. Every evaluation
// is first built as a linear functional of the trace unknowns (node values
// and c+-); the same code therefore serves field evaluation and matrix
// assembly.
namespace hsm
{

inline void check_wavenumber(cplx k)
{
  if (!(k.real() > 0.0) || !(k.imag() >= 0.0) || !std::isfinite(k.real()) ||
      !std::isfinite(k.imag()))
  {
    std::ostringstream os;
    os << "wavenumber must satisfy Re k > 0 and Im k >= 0, got " << k;
    throw DomainError(os.str());
  }
}

struct KernelParams
{
  cplx k;

  explicit KernelParams(cplx k_) : k(k_) { check_wavenumber(k); }
  double wavelength() const { return 2.0 * pi / k.real(); }
};

struct QuadratureSpec
{
  int order = 6;             // Gauss points per grid cell
  int max_depth = 8;         // bisection depth of the near-field refinement
  double tolerance = 1e-8;   // near-field refinement tolerance (relative)
  double near_factor = 2.0;  // refine when the target is within near_factor*h of Sigma
  int panel_points = 8;      // Gauss points per panel on the real part of a tail contour
  int tail_points = 40;      // Laguerre points on the vertical part of a tail contour
};

inline void check_quadrature(const QuadratureSpec &q)
{
  if (q.order < 2 || q.max_depth < 0 || !(q.tolerance > 0.0) || !(q.near_factor > 0.0) ||
      q.panel_points < 2 || q.tail_points < 4)
  {
    throw DomainError("invalid quadrature specification");
  }
}

// Weights of a field functional: component c of the field equals
// sum_m nodes[m][c] * values[m] + c_plus[c] * c+ + c_minus[c] * c-.
// NC = 1 gives the value, NC = 3 gives (value, d/dx1, d/dx2).
template <int NC>
struct Functional
{
  using Comp = std::array<cplx, NC>;
  std::vector<Comp> nodes;
  Comp c_plus{};
  Comp c_minus{};
  Comp constant{};  // contribution of known edge data, if any

  Comp apply(const RadiatingTrace &tr) const
  {
    Comp out = constant;
    for (std::size_t m = 0; m < nodes.size(); ++m)
    {
      for (int c = 0; c < NC; ++c)
      {
        out[c] += nodes[m][c] * tr.values[m];
      }
    }
    if (tr.tails)
    {
      for (int c = 0; c < NC; ++c)
      {
        out[c] += c_plus[c] * tr.c_plus + c_minus[c] * tr.c_minus;
      }
    }
    return out;
  }
};

namespace detail
{

// Kernel H(k; d, s) and, for NC = 3, its derivatives with respect to the
// target coordinates. s = x2 - t may be complex (deformed contours).
template <int NC>
inline std::array<cplx, NC> kernel(cplx k, double d, cplx s)
{
  const cplx r = std::sqrt(d * d + s * s);
  const auto hk = specfun::hankel_h01(k * r);
  const cplx f = hk.h1 / r;
  std::array<cplx, NC> out;
  out[0] = 0.5 * I * k * d * f;
  if constexpr (NC == 3)
  {
    // d/dr [H1(kr)/r] = k H0(kr)/r - 2 H1(kr)/r^2
    const cplx df = k * hk.h0 / r - 2.0 * hk.h1 / (r * r);
    out[1] = 0.5 * I * k * (f + d * d * df / r);
    out[2] = 0.5 * I * k * d * df * s / r;
  }
  return out;
}

// Bisection driver: `sample(u, w, acc)` adds w * integrand(u) into acc.
template <class Sample>
void gauss_into(Sample &sample, double u0, double u1, const quad::Rule &rule, std::vector<cplx> &acc)
{
  const double c = 0.5 * (u0 + u1), hw = 0.5 * (u1 - u0);
  for (std::size_t g = 0; g < rule.nodes.size(); ++g)
  {
    sample(c + hw * rule.nodes[g], hw * rule.weights[g], acc);
  }
}

template <class Sample>
void bisect(Sample &sample, double u0, double u1, const std::vector<cplx> &coarse, int depth,
            const quad::Rule &rule, const QuadratureSpec &q, std::vector<cplx> &out)
{
  const std::size_t n = coarse.size();
  const double um = 0.5 * (u0 + u1);
  std::vector<cplx> left(n), right(n);
  gauss_into(sample, u0, um, rule, left);
  gauss_into(sample, um, u1, rule, right);
  double err = 0.0, scale = 1.0;
  for (std::size_t i = 0; i < n; ++i)
  {
    err = std::max(err, std::abs(left[i] + right[i] - coarse[i]));
    scale = std::max(scale, std::abs(left[i] + right[i]));
  }
  if (err <= q.tolerance * scale)
  {
    for (std::size_t i = 0; i < n; ++i)
    {
      out[i] += left[i] + right[i];
    }
    return;
  }
  if (depth >= q.max_depth)
  {
    std::ostringstream os;
    os << "near-field quadrature did not converge after " << q.max_depth
       << " bisections (error estimate " << err << ")";
    throw ConvergenceError(os.str());
  }
  bisect(sample, u0, um, left, depth + 1, rule, q, out);
  bisect(sample, um, u1, right, depth + 1, rule, q, out);
}

// Adaptive integral over t in [t0, t1] of a kernel that concentrates at
// t* on the scale d: substitute t = t* + d sinh(u), which turns the nascent
// delta into a smooth bounded integrand, and bisect in u.
template <class Eval>
void near_segment(Eval &eval, double t0, double t1, double tstar, double d, std::size_t n,
                  const QuadratureSpec &q, std::vector<cplx> &out)
{
  const auto &rule = quad::gauss_legendre(q.order);
  auto sample = [&](double u, double w, std::vector<cplx> &acc)
  {
    const double t = tstar + d * std::sinh(u);
    eval(t, w * d * std::cosh(u), acc);
  };
  const double u0 = std::asinh((t0 - tstar) / d);
  const double u1 = std::asinh((t1 - tstar) / d);
  std::vector<cplx> coarse(n);
  gauss_into(sample, u0, u1, rule, coarse);
  bisect(sample, u0, u1, coarse, 0, rule, q, out);
}

// int_A^inf H(k; d, x2 - t) m(t) dt with m(t) = e^{ikt} t^{-1/2} (radiating
// tail) or m = 1. The contour runs along the real axis to T = max(A, x2 +
// margin) and then up the vertical line T + i sigma, where the integrand
// decays like e^{-rate sigma}. No singularity lies in between: the branch
// points of the kernel are x2 +- i d and T > x2.
template <int NC>
std::array<cplx, NC> tail_integral(cplx k, double d, double x2, double A, bool model, double h,
                                   const QuadratureSpec &q)
{
  std::array<cplx, NC> out{};
  const double kr = k.real();
  const double margin = std::max(2.0 * d, 4.0 / kr);
  const double T = std::max(A, x2 + margin);
  auto integrand = [&](cplx t)
  {
    auto kv = kernel<NC>(k, d, cplx(x2) - t);
    if (model)
    {
      const cplx m = std::exp(I * k * t) / std::sqrt(t);
      for (auto &c : kv)
      {
        c *= m;
      }
    }
    return kv;
  };

  if (T > A)
  {
    const bool near = d < q.near_factor * h;
    auto eval = [&](double t, double w, std::vector<cplx> &acc)
    {
      const auto kv = integrand(t);
      for (int c = 0; c < NC; ++c)
      {
        acc[c] += w * kv[c];
      }
    };
    const double len = 1.0 / std::abs(k);
    const int panels = static_cast<int>(std::ceil((T - A) / len));
    const double pl = (T - A) / panels;
    const auto &rule = quad::gauss_legendre(q.panel_points);
    std::vector<cplx> acc(NC);
    for (int p = 0; p < panels; ++p)
    {
      const double t0 = A + p * pl, t1 = t0 + pl;
      const double dist = std::max({0.0, t0 - x2, x2 - t1});
      if (near && dist < q.near_factor * h)
      {
        near_segment(eval, t0, t1, x2, d, NC, q, acc);
      }
      else
      {
        gauss_into(eval, t0, t1, rule, acc);
      }
    }
    for (int c = 0; c < NC; ++c)
    {
      out[c] += acc[c];
    }
  }

  const double rate = (model ? 2.0 : 1.0) * kr;
  const auto &lag = quad::gauss_laguerre_scaled(q.tail_points);
  for (std::size_t i = 0; i < lag.nodes.size(); ++i)
  {
    const double sigma = lag.nodes[i] / rate;
    const auto kv = integrand(cplx(T, sigma));
    const cplx w = I * lag.weights[i] / rate;
    for (int c = 0; c < NC; ++c)
    {
      out[c] += w * kv[c];
    }
  }
  return out;
}

// Left tail by mirror symmetry: t -> -t, x2 -> -x2; the x2-derivative flips.
template <int NC>
std::array<cplx, NC> tail_integral_minus(cplx k, double d, double x2, double A, bool model,
                                         double h, const QuadratureSpec &q)
{
  auto v = tail_integral<NC>(k, d, -x2, A, model, h, q);
  if constexpr (NC == 3)
  {
    v[2] = -v[2];
  }
  return v;
}

}  // namespace detail

inline cplx kernel_H(cplx k, double x1, double x2)
{
  if (x1 == 0.0 && x2 == 0.0)
  {
    throw DomainError("half-plane kernel evaluated at the origin");
  }
  if (x1 == 0.0)
  {
    return {};
  }
  return detail::kernel<1>(k, x1, x2)[0];
}

// Field functional of the half-plane whose boundary trace lives on `grid`
// (line x1 = a), at the local target (x1, x2). With `edge`, the trace on
// [edge->lo, edge->hi] is the known function edge->g; its contribution is
// returned in `constant` and the grid interpolant is only used elsewhere.
template <int NC>
Functional<NC> build_functional(cplx k, double a, const TraceGrid &grid, bool tails,
                                const QuadratureSpec &q, double x1, double x2,
                                const EdgeData *edge = nullptr)
{
  const double d = x1 - a;
  if (!(d > 0.0))
  {
    std::ostringstream os;
    os << "target (" << x1 << ", " << x2 << ") is not inside the half-plane x1 > " << a;
    throw DomainError(os.str());
  }
  const double h = grid.h;
  const int p = grid.stencil;
  Functional<NC> F;
  F.nodes.assign(grid.nodes(), {});

  const bool near = d < q.near_factor * h;
  // Near the line the kernel is a nascent delta at t* = x2. The split
  //   int K psi = int K (psi - psi*) + psi* int K
  // is used, with int_R K known in closed form; the quadrature of K alone
  // is accumulated alongside so that psi* (exact - quadrature - tails) can be
  // added at the end.
  //
  // Accumulator layout: p*NC stencil weights, NC for int K, NC for the
  // known-data part.
  const int kofs = p * NC, gofs = p * NC + NC;
  std::vector<cplx> acc(p * NC + 2 * NC);
  double tf = 0.0;
  bool on_edge = false;
  auto eval = [&](double t, double w, std::vector<cplx> &out)
  {
    const auto kv = detail::kernel<NC>(k, d, x2 - t);
    if (on_edge)
    {
      const cplx gw = w * edge->g(t);
      for (int cc = 0; cc < NC; ++cc)
      {
        out[gofs + cc] += gw * kv[cc];
      }
    }
    else
    {
      double lw[32];
      lagrange_weights((t - tf) / h, p, lw);
      for (int i = 0; i < p; ++i)
      {
        const double wi = w * lw[i];
        for (int cc = 0; cc < NC; ++cc)
        {
          out[i * NC + cc] += wi * kv[cc];
        }
      }
    }
    for (int cc = 0; cc < NC; ++cc)
    {
      out[kofs + cc] += w * kv[cc];
    }
  };

  const auto &rule = quad::gauss_legendre(q.order);
  auto segment = [&](double s0, double s1)
  {
    if (!(s1 > s0))
    {
      return;
    }
    const double dist = std::max({0.0, s0 - x2, x2 - s1});
    if (near && dist < q.near_factor * h)
    {
      detail::near_segment(eval, s0, s1, x2, d, acc.size(), q, acc);
    }
    else
    {
      detail::gauss_into(eval, s0, s1, rule, acc);
    }
  };

  std::array<cplx, NC> kq{};
  for (int c = 0; c < grid.cells; ++c)
  {
    const double t0 = grid.node(c), t1 = t0 + h;
    const int first = grid.stencil_first(c);
    tf = grid.node(first);
    std::fill(acc.begin(), acc.begin() + gofs, cplx{});
    if (edge && t1 > edge->lo && t0 < edge->hi)
    {
      on_edge = false;
      segment(t0, std::min(t1, edge->lo));
      segment(std::max(t0, edge->hi), t1);
      on_edge = true;
      segment(std::max(t0, edge->lo), std::min(t1, edge->hi));
      on_edge = false;
    }
    else
    {
      segment(t0, t1);
    }
    for (int i = 0; i < p; ++i)
    {
      for (int cc = 0; cc < NC; ++cc)
      {
        F.nodes[first + i][cc] += acc[i * NC + cc];
      }
    }
    for (int cc = 0; cc < NC; ++cc)
    {
      kq[cc] += acc[kofs + cc];
    }
  }
  for (int cc = 0; cc < NC; ++cc)
  {
    F.constant[cc] = acc[gofs + cc];
  }

  if (tails)
  {
    F.c_plus = detail::tail_integral<NC>(k, d, x2, grid.A, true, h, q);
    F.c_minus = detail::tail_integral_minus<NC>(k, d, x2, grid.A, true, h, q);
  }

  if (near)
  {
    // int_R H(k; d, s) ds = e^{ikd}; its x1-derivative is ik e^{ikd}, the
    // x2-derivative vanishes.
    std::array<cplx, NC> exact{};
    exact[0] = std::exp(I * k * d);
    if constexpr (NC == 3)
    {
      exact[1] = I * k * exact[0];
    }
    const auto jp = detail::tail_integral<NC>(k, d, x2, grid.A, false, h, q);
    const auto jm = detail::tail_integral_minus<NC>(k, d, x2, grid.A, false, h, q);
    std::array<cplx, NC> corr;
    for (int cc = 0; cc < NC; ++cc)
    {
      corr[cc] = exact[cc] - kq[cc] - jp[cc] - jm[cc];
    }
    if (edge && edge->contains(x2))
    {
      const cplx gs = edge->g(x2);
      for (int cc = 0; cc < NC; ++cc)
      {
        F.constant[cc] += gs * corr[cc];
      }
    }
    else if (std::abs(x2) <= grid.A)
    {
      double lw[32];
      const int first = grid.stencil_first(grid.cell_of(x2));
      lagrange_weights((x2 - grid.node(first)) / h, p, lw);
      for (int i = 0; i < p; ++i)
      {
        for (int cc = 0; cc < NC; ++cc)
        {
          F.nodes[first + i][cc] += lw[i] * corr[cc];
        }
      }
    }
    else if (tails)
    {
      const cplx m = tail_model(k, x2);
      auto &target = x2 > 0.0 ? F.c_plus : F.c_minus;
      for (int cc = 0; cc < NC; ++cc)
      {
        target[cc] += m * corr[cc];
      }
    }
  }
  return F;
}

inline cplx halfplane_eval(const KernelParams &kp, const RadiatingTrace &tr, const QuadratureSpec &q,
                           const LocalPoint &p)
{
  const auto F = build_functional<1>(kp.k, tr.a, tr.grid, tr.tails, q, p.x1, p.x2, tr.edge.get());
  return F.apply(tr)[0];
}

// Gradient in the local frame of the trace: (d/dx1, d/dx2).
inline CVec2 halfplane_grad(const KernelParams &kp, const RadiatingTrace &tr,
                            const QuadratureSpec &q, const LocalPoint &p)
{
  const auto F = build_functional<3>(kp.k, tr.a, tr.grid, tr.tails, q, p.x1, p.x2, tr.edge.get());
  const auto v = F.apply(tr);
  return {v[1], v[2]};
}

// Value and global gradient together.
struct FieldSample
{
  cplx value;
  CVec2 grad;
};

inline FieldSample halfplane_sample(const KernelParams &kp, const PolygonFrames &frames,
                                    const RadiatingTrace &tr, const QuadratureSpec &q, Vec2 x)
{
  const auto lp = to_local(frames, tr.j, x);
  const auto F = build_functional<3>(kp.k, tr.a, tr.grid, tr.tails, q, lp.x1, lp.x2, tr.edge.get());
  const auto v = F.apply(tr);
  const Vec2 e1 = frames.e1[tr.j], e2 = frames.e2[tr.j];
  return {v[0], {v[1] * e1.x + v[2] * e2.x, v[1] * e1.y + v[2] * e2.y}};
}

// D_{j,j+dir}: U^j(psi) on the part of Sigma^{j+dir} inside Omega^j, at the
// given x2^{j+dir} parameters.
inline std::vector<cplx> op_D(const KernelParams &kp, const PolygonFrames &frames, int j, int dir,
                              const RadiatingTrace &tr, const QuadratureSpec &q,
                              const std::vector<double> &targets)
{
  if (dir != 1 && dir != -1)
  {
    throw DomainError("op_D direction must be +1 or -1");
  }
  const int jt = dir > 0 ? frames.next(j) : frames.prev(j);
  std::vector<cplx> out;
  out.reserve(targets.size());
  for (double t : targets)
  {
    const auto lp = to_local(frames, j, frames.sigma_point(jt, t));
    out.push_back(halfplane_eval(kp, tr, q, lp));
  }
  return out;
}

struct BoundaryPoint
{
  Vec2 x;
  Vec2 n;  // unit normal
};

// Robin trace (d/dn - ik) U^j(psi) at points of Gamma_b^j.
inline std::vector<cplx> op_Lambda(const KernelParams &kp, const PolygonFrames &frames, int j,
                                   const RadiatingTrace &tr, const QuadratureSpec &q,
                                   const std::vector<BoundaryPoint> &points)
{
  std::vector<cplx> out;
  out.reserve(points.size());
  for (const auto &bp : points)
  {
    const double d = to_local(frames, j, bp.x).x1 - frames.a[j];
    if (d < tr.grid.h)
    {
      std::ostringstream os;
      os << "coupling point (" << bp.x.x << ", " << bp.x.y << ") is " << d
         << " from Sigma^" << j << ", closer than the grid spacing";
      throw GeometryError(os.str());
    }
    const auto s = halfplane_sample(kp, frames, tr, q, bp.x);
    out.push_back(s.grad.x * bp.n.x + s.grad.y * bp.n.y - I * kp.k * s.value);
  }
  return out;
}

}  // namespace hsm

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "hsm/bump.hpp"
#include "hsm/common.hpp"
#include "hsm/error.hpp"
#include "hsm/geometry.hpp"
#include "hsm/specfun.hpp"

namespace hsm::verify
{

// ---------------------------------------------------------------------------
// Oracles: closed forms and independent quadrature. Nothing here may use the
// half-plane or matching code.

// Fundamental solution of -Delta - k^2.
inline cplx phi(cplx k, Vec2 x, Vec2 y)
{
  const double r = norm(x - y);
  if (r == 0.0)
  {
    throw DomainError("fundamental solution evaluated at coincident points");
  }
  return 0.25 * I * specfun::hankel_h0(k * r);
}

// Gradient of phi with respect to x.
inline CVec2 phi_grad(cplx k, Vec2 x, Vec2 y)
{
  const double r = norm(x - y);
  if (r == 0.0)
  {
    throw DomainError("fundamental solution evaluated at coincident points");
  }
  const cplx s = -0.25 * I * k * specfun::hankel_h1(k * r) / r;
  return {s * (x.x - y.x), s * (x.y - y.y)};
}

// Amplitudes c+- of Phi(., z) along Sigma^j:
//   Phi ~ c+- e^{ik|t|} |t|^{-1/2},  c+- = e^{i pi/4} / sqrt(8 pi k) e^{-+ik e2.(z - O)}.
inline std::pair<cplx, cplx> point_source_tails(cplx k,
                                                const PolygonFrames &frames, int j, Vec2 z)
{
  const cplx c0 = std::exp(0.25 * pi * I) / std::sqrt(8.0 * pi * k);
  const double s = dot(frames.e2[j], z - frames.centroid);
  return {c0 * std::exp(-I * k * s), c0 * std::exp(I * k * s)};
}

// Far-field pattern of Phi(., z) relative to `origin`.
inline cplx point_source_far_field(cplx k, Vec2 origin, Vec2 z, Vec2 xhat)
{
  return std::exp(0.25 * pi * I) / std::sqrt(8.0 * pi * k) *
         std::exp(-I * k * dot(xhat, z - origin));
}

inline std::function<cplx(int, Vec2)> point_source_data(cplx k, Vec2 z)
{
  return [k, z](int, Vec2 p) { return phi(k, p, z); };
}

// int_disc Phi(p, y) dy in closed form (Graf's addition theorem):
//   outside: (i pi R / 2k) J1(kR) H0(k|p-c|)
//   inside:  -1/k^2 + (i pi R / 2k) H1(kR) J0(k|p-c|)
inline cplx disc_convolution_exact(cplx k, const DiscBump &b, Vec2 p)
{
  if (k.imag() != 0.0)
  {
    throw UnsupportedError("closed-form disc convolution needs a real wavenumber");
  }
  const double kr = k.real();
  const double R = b.radius;
  const double rho = norm(p - b.center);
  const cplx pre = I * pi * R / (2.0 * kr);
  if (rho >= R)
  {
    return b.value * pre * specfun::bessel_j1(kr * R) * specfun::hankel_h0(kr * rho);
  }
  const double j0 = rho == 0.0 ? 1.0 : specfun::bessel_j0(kr * rho);
  return b.value * (-1.0 / (kr * kr) + pre * specfun::hankel_h1(kr * R) * j0);
}

// int Phi(p, y) f(y) dy for f a sum of constant-in-disc bumps, by nested
// adaptive Gauss-Kronrod quadrature in polar coordinates centred at p (the
// logarithmic singularity is then harmless when p lies in a disc).
inline cplx convolution_oracle(cplx k, const std::vector<DiscBump> &f, Vec2 p,
                               double tol = 1e-6)
{
  using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
  constexpr unsigned depth = 20;
  cplx total{};
  for (const auto &b : f)
  {
    if (b.value == cplx{} || !(b.radius > 0.0))
    {
      continue;
    }
    const double R = b.radius;
    const double d = norm(p - b.center);
    double err_out = 0.0;
    auto radial = [&](double r0, double r1)
    {
      double err = 0.0, l1 = 0.0;
      auto g = [&](double rho) -> cplx
      { return rho > 0.0 ? 0.25 * I * specfun::hankel_h0(k * rho) * rho : cplx{}; };
      const cplx v = GK::integrate(g, r0, r1, depth, 0.01 * tol, &err, &l1);
      if (err > 0.01 * tol * std::max(l1, 1e-300) && err > 1e-15)
      {
        throw ConvergenceError("convolution oracle: radial quadrature did not converge");
      }
      return v;
    };
    cplx v{};
    double l1 = 0.0;
    if (d == 0.0)
    {
      v = 2.0 * pi * radial(0.0, R);
    }
    else if (d < R)
    {
      auto outer = [&](double psi)
      {
        const double s = std::sin(psi);
        const double r1 = d * std::cos(psi) + std::sqrt(R * R - d * d * s * s);
        return radial(0.0, r1);
      };
      v = GK::integrate(outer, 0.0, 2.0 * pi, depth, tol, &err_out, &l1);
    }
    else
    {
      const double pm = std::asin(std::min(1.0, R / d));
      // psi = pm sin(s) removes the square-root behaviour of the chord at +-pm.
      auto outer = [&](double s)
      {
        const double psi = pm * std::sin(s);
        const double q = std::sqrt(std::max(0.0, R * R - d * d * std::sin(psi) * std::sin(psi)));
        const double c = d * std::cos(psi);
        return pm * std::cos(s) * radial(c - q, c + q);
      };
      v = GK::integrate(outer, -0.5 * pi, 0.5 * pi, depth, tol, &err_out, &l1);
    }
    if (err_out > tol * std::max(l1, 1e-300) && err_out > 1e-15)
    {
      throw ConvergenceError("convolution oracle: angular quadrature did not converge");
    }
    total += b.value * v;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Independent Bessel series (long double) for the special-function checks.

struct SeriesValues
{
  double j0, y0, j1, y1;
};

inline SeriesValues bessel_series(double x)
{
  using ld = long double;
  constexpr ld gamma = 0.577215664901532860606512090082402431L;
  const ld q = ld(x) * x / 4;
  ld t0 = 1, t1 = 1, j0 = 1, j1 = 1, y0 = 0, y1 = 1, hm = 0;
  for (int m = 1; m < 400; ++m)
  {
    t0 *= -q / (ld(m) * m);
    t1 *= -q / (ld(m) * (m + 1));
    hm += ld(1) / m;
    j0 += t0;
    j1 += t1;
    y0 += hm * t0;
    y1 += (2 * hm + ld(1) / (m + 1)) * t1;
    if (std::fabs(t0) < 1e-24L && std::fabs(t1) < 1e-24L)
    {
      break;
    }
  }
  const ld pil = 3.141592653589793238462643383279502884L;
  const ld lg = std::log(ld(x) / 2) + gamma;
  const ld J1 = ld(x) / 2 * j1;
  return {double(j0), double(2 / pil * (lg * j0 - y0)), double(J1),
          double(-2 / (pil * x) + 2 / pil * lg * J1 - ld(x) / (2 * pil) * y1)};
}

}  // namespace hsm::verify

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <complex>
#include <sstream>

#include "hsm/common.hpp"
#include "hsm/error.hpp"
#include "hsm/quadrature.hpp"

// Hankel functions of the first kind, orders 0 and 1, for complex arguments
// in the closed upper half-plane.
//
// Three regimes are used:
//   |z| <= 3       ascending series for J and Y (cancellation in J + iY is at
//                  most e^{2 Im z} <= e^6 here),
//   3 < |z| < 25   the exact Laplace-type integral
//                    H_nu(z) = sqrt(2/(pi z)) e^{i(z - nu pi/2 - pi/4)} / Gamma(nu + 1/2)
//                              * int_0^inf e^{-u} u^{nu-1/2} (1 + iu/(2z))^{nu-1/2} du
//                  evaluated by 40-point generalized Gauss-Laguerre,
//   |z| >= 25      the Hankel asymptotic series, whose smallest term is ~e^{-2|z|}.
// The integral form is valid for -pi/2 < arg z < pi, which covers Im z >= 0, Re z > -|z|.
namespace hsm::specfun
{

inline constexpr double series_radius = 3.0;
inline constexpr double asymptotic_radius = 25.0;
inline constexpr int laplace_points = 40;

struct Hankel01
{
  cplx h0;
  cplx h1;
};

namespace detail
{

inline void check_argument(cplx z)
{
  if (z == cplx(0.0, 0.0))
  {
    throw DomainError("Hankel function evaluated at z = 0");
  }
  if (z.imag() < 0.0)
  {
    std::ostringstream os;
    os << "Hankel function requires Im(z) >= 0, got z = " << z;
    throw DomainError(os.str());
  }
}

struct BesselSeries
{
  cplx j0, j1, y0, y1;
};

// Ascending series for J0, J1, Y0, Y1 (principal branch of log).
inline BesselSeries ascending_series(cplx z)
{
  constexpr double euler_gamma = 0.57721566490153286061;
  const cplx q = 0.25 * z * z;
  const cplx logterm = std::log(0.5 * z) + euler_gamma;

  // term_m = (-q)^m / (m!)^2 for J0; J1 uses (-q)^m / (m!(m+1)!).
  cplx t0 = 1.0, t1 = 1.0;
  cplx sj0 = t0, sj1 = t1;
  double harmonic = 0.0;  // H_m
  cplx sy0 = 0.0;
  // Y1 series uses psi(m+1) + psi(m+2) = -2 gamma + H_m + H_{m+1}.
  cplx sy1 = 1.0;  // m = 0: H_0 + H_1 = 1
  for (int m = 1; m < 200; ++m)
  {
    t0 *= -q / (double(m) * m);
    t1 *= -q / (double(m) * (m + 1));
    harmonic += 1.0 / m;
    sj0 += t0;
    sj1 += t1;
    sy0 += harmonic * t0;
    sy1 += (2.0 * harmonic + 1.0 / (m + 1)) * t1;
    if (std::abs(t0) * (1.0 + harmonic) < 1e-18 * std::abs(sj0) &&
        std::abs(t1) * (1.0 + harmonic) < 1e-18 * std::abs(sj1))
    {
      break;
    }
  }
  BesselSeries s;
  s.j0 = sj0;
  s.j1 = 0.5 * z * sj1;
  s.y0 = (2.0 / pi) * (logterm * s.j0 - sy0);
  // The -2 gamma part of psi(m+1) + psi(m+2) sums to (2 gamma / pi) J1 and is
  // carried by logterm.
  s.y1 = -2.0 / (pi * z) + (2.0 / pi) * logterm * s.j1 - (0.5 * z / pi) * sy1;
  return s;
}

inline Hankel01 laplace_integral(cplx z)
{
  const auto &r0 = quad::gauss_laguerre(laplace_points, -0.5);
  const auto &r1 = quad::gauss_laguerre(laplace_points, 0.5);
  const cplx scale = I / (2.0 * z);
  cplx s0 = 0.0, s1 = 0.0;
  for (int i = 0; i < laplace_points; ++i)
  {
    // Nodes of both rules differ, so each needs its own square root.
    s0 += r0.weights[i] / std::sqrt(1.0 + scale * r0.nodes[i]);
    s1 += r1.weights[i] * std::sqrt(1.0 + scale * r1.nodes[i]);
  }
  const cplx pre = std::sqrt(2.0 / (pi * z));
  const cplx phase0 = std::exp(I * (z - 0.25 * pi));
  const cplx phase1 = std::exp(I * (z - 0.75 * pi));
  const double sqrt_pi = std::sqrt(pi);
  return {pre * phase0 * s0 / sqrt_pi, pre * phase1 * s1 / (0.5 * sqrt_pi)};
}

inline Hankel01 asymptotic_series(cplx z)
{
  // a_m(nu) = prod_{l=1..m} (4nu^2 - (2l-1)^2) / (m! 8^m); term_m = i^m a_m / z^m
  cplx p0 = 1.0, p1 = 1.0;
  cplx t0 = 1.0, t1 = 1.0;
  const cplx step = I / (8.0 * z);
  for (int m = 1; m < 60; ++m)
  {
    const double odd = 2.0 * m - 1.0;
    t0 *= step * (0.0 - odd * odd) / double(m);
    t1 *= step * (4.0 - odd * odd) / double(m);
    p0 += t0;
    p1 += t1;
    if (std::abs(t0) < 1e-17 && std::abs(t1) < 1e-17)
    {
      break;
    }
  }
  const cplx pre = std::sqrt(2.0 / (pi * z));
  return {pre * std::exp(I * (z - 0.25 * pi)) * p0, pre * std::exp(I * (z - 0.75 * pi)) * p1};
}

}  // namespace detail

// H0^(1)(z) and H1^(1)(z) together; cheaper than two separate calls.
inline Hankel01 hankel_h01(cplx z)
{
  detail::check_argument(z);
  const double r = std::abs(z);
  if (r <= series_radius)
  {
    const auto s = detail::ascending_series(z);
    return {s.j0 + I * s.y0, s.j1 + I * s.y1};
  }
  if (r < asymptotic_radius)
  {
    return detail::laplace_integral(z);
  }
  return detail::asymptotic_series(z);
}

inline cplx hankel_h0(cplx z) { return hankel_h01(z).h0; }
inline cplx hankel_h1(cplx z) { return hankel_h01(z).h1; }

// Real-argument Bessel functions, read off the Hankel function.
inline double bessel_j0(double x) { return hankel_h0(x).real(); }
inline double bessel_y0(double x) { return hankel_h0(x).imag(); }
inline double bessel_j1(double x) { return hankel_h1(x).real(); }
inline double bessel_y1(double x) { return hankel_h1(x).imag(); }

}  // namespace hsm::specfun

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <map>
#include <mutex>
#include <utility>
#include <vector>

#include "hsm/common.hpp"

namespace hsm::quad
{

struct Rule
{
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail
{

inline Rule compute_gauss_legendre(int n)
{
  Rule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i)
  {
    double z = std::cos(pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it)
    {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 1; j <= n; ++j)
      {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15)
      {
        break;
      }
    }
    r.nodes[i] = -z;
    r.nodes[n - 1 - i] = z;
    r.weights[i] = r.weights[n - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
  }
  return r;
}

// Generalized Gauss-Laguerre rule for weight x^alpha e^{-x} (Newton iteration
// on the three-term recurrence with the usual asymptotic starting guesses).
inline Rule compute_gauss_laguerre(int n, double alpha)
{
  Rule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  double z = 0.0;
  for (int i = 0; i < n; ++i)
  {
    if (i == 0)
    {
      z = (1.0 + alpha) * (3.0 + 0.92 * alpha) / (1.0 + 2.4 * n + 1.8 * alpha);
    }
    else if (i == 1)
    {
      z += (15.0 + 6.25 * alpha) / (1.0 + 0.9 * alpha + 2.5 * n);
    }
    else
    {
      const double ai = i - 1;
      z += ((1.0 + 2.55 * ai) / (1.9 * ai) + 1.26 * ai * alpha / (1.0 + 3.5 * ai)) *
           (z - r.nodes[i - 2]) / (1.0 + 0.3 * alpha);
    }
    double pp = 0.0;
    // Two extra sweeps after the step size stalls so that pp and p2, which set
    // the weight, are evaluated at the converged node.
    int settled = 0;
    for (int it = 0; it < 200 && settled < 3; ++it)
    {
      double p1 = 1.0;
      double p2 = 0.0;
      for (int j = 1; j <= n; ++j)
      {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0 + alpha - z) * p2 - (j - 1.0 + alpha) * p3) / j;
      }
      pp = (n * p1 - (n + alpha) * p2) / z;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-14 * std::max(1.0, std::abs(z)))
      {
        ++settled;
      }
    }
    r.nodes[i] = z;
    // Christoffel form w = 1 / sum q_j(z)^2 over the orthonormal polynomials;
    // all terms are positive, which keeps the small-node weights accurate.
    double q_prev = 0.0, q = 1.0 / std::sqrt(std::tgamma(alpha + 1.0)), sum = q * q;
    for (int j = 0; j + 1 < n; ++j)
    {
      const double b_next = std::sqrt((j + 1.0) * (j + 1.0 + alpha));
      const double b_this = std::sqrt(j * (j + alpha));
      const double q_next = ((z - (2.0 * j + alpha + 1.0)) * q - b_this * q_prev) / b_next;
      q_prev = q;
      q = q_next;
      sum += q * q;
    }
    r.weights[i] = 1.0 / sum;
  }
  return r;
}

}  // namespace detail

// Gauss-Legendre rule on [-1, 1]; cached, safe for concurrent callers.
inline const Rule &gauss_legendre(int n)
{
  static std::mutex mutex;
  static std::map<int, Rule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end())
  {
    it = cache.emplace(n, detail::compute_gauss_legendre(n)).first;
  }
  return it->second;
}

// Generalized Gauss-Laguerre rule for weight x^alpha e^{-x} on [0, inf).
inline const Rule &gauss_laguerre(int n, double alpha = 0.0)
{
  static std::mutex mutex;
  static std::map<std::pair<int, double>, Rule> cache;
  std::lock_guard lock(mutex);
  const auto key = std::make_pair(n, alpha);
  auto it = cache.find(key);
  if (it == cache.end())
  {
    it = cache.emplace(key, detail::compute_gauss_laguerre(n, alpha)).first;
  }
  return it->second;
}

// Plain Gauss-Laguerre rule with the weight folded back in, i.e. weights
// w_i e^{x_i}, for integrating f(x) dx on [0, inf) when f decays roughly like
// e^{-x}.
inline const Rule &gauss_laguerre_scaled(int n)
{
  static std::mutex mutex;
  static std::map<int, Rule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end())
  {
    Rule r = detail::compute_gauss_laguerre(n, 0.0);
    for (std::size_t i = 0; i < r.nodes.size(); ++i)
    {
      r.weights[i] *= std::exp(r.nodes[i]);
    }
    it = cache.emplace(n, std::move(r)).first;
  }
  return it->second;
}

}  // namespace hsm::quad

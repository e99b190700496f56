// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <exception>
#include <numbers>
#include <thread>
#include <vector>

namespace hsm
{

using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

struct Vec2
{
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

// Complex 2-vector, used for field gradients.
struct CVec2
{
  cplx x{};
  cplx y{};
};

// Runs fn(i) for i in [0, n) on `threads` workers. Work is split into
// contiguous blocks, each index is processed exactly once, and fn must only
// write to storage owned by index i; results are therefore identical for any
// thread count.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn &&fn)
{
  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1)
  {
    for (std::size_t i = 0; i < n; ++i)
    {
      fn(i);
    }
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t block = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w)
  {
    pool.emplace_back(
        [&, w]
        {
          try
          {
            const std::size_t lo = w * block;
            const std::size_t hi = std::min(n, lo + block);
            for (std::size_t i = lo; i < hi; ++i)
            {
              fn(i);
            }
          }
          catch (...)
          {
            errors[w] = std::current_exception();
          }
        });
  }
  for (auto &t : pool)
  {
    t.join();
  }
  for (auto &e : errors)
  {
    if (e)
    {
      std::rethrow_exception(e);
    }
  }
}

}  // namespace hsm

// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include "hsm/oracle.hpp"
#include "hsm/trace.hpp"

using namespace hsm;

TEST_CASE("zero trace evaluates to zero", "[trace]")
{
  const auto tr = zero_trace(0, 0.5, 1.0, make_grid(10.0, 0.5), true);
  for (double t : {-100.0, -10.0, -3.3, 0.0, 7.1, 10.0, 250.0})
  {
    CHECK(trace_eval(tr, t) == cplx{});
  }
}

TEST_CASE("tail evaluation beyond A", "[trace]")
{
  auto tr = zero_trace(0, 0.0, 1.0, make_grid(10.0, 0.5), true);
  tr.c_plus = 1.0;
  CHECK(std::abs(trace_eval(tr, 100.0) - cplx(0.086232, -0.050637)) < 1e-6);
  tr.tails = false;
  CHECK(trace_eval(tr, 100.0) == cplx{});
}

TEST_CASE("interpolation of a smooth sample function", "[trace]")
{
  auto tr = zero_trace(0, 0.0, 1.0, make_grid(4.0, 0.1), false);
  for (int m = 0; m < tr.grid.nodes(); ++m)
  {
    tr.values[m] = std::exp(-tr.grid.node(m) * tr.grid.node(m));
  }
  CHECK(std::abs(trace_eval(tr, 0.5) - 0.778801) < 1e-4);
  CHECK(std::abs(trace_eval(tr, 0.537) - std::exp(-0.537 * 0.537)) < 1e-8);
}

TEST_CASE("grid construction errors", "[trace]")
{
  CHECK_THROWS_AS(make_grid(10.0, 0.3), AssemblyError);
  CHECK_THROWS_AS(make_grid(-1.0, 0.1), DomainError);
  CHECK_THROWS_AS(make_grid(1.0, 1.0, 10), DomainError);
}

TEST_CASE("trace_eval is linear in the values and the tail coefficients", "[trace]")
{
  const auto g = make_grid(5.0, 0.25);
  auto a = zero_trace(0, 0.0, 1.0, g, true), b = a, s = a;
  for (int m = 0; m < g.nodes(); ++m)
  {
    a.values[m] = cplx(std::sin(m), 0.3 * m);
    b.values[m] = cplx(std::cos(2.0 * m), -1.0);
    s.values[m] = a.values[m] + b.values[m];
  }
  a.c_plus = {1, 2};
  b.c_plus = {-0.5, 0.1};
  s.c_plus = a.c_plus + b.c_plus;
  a.c_minus = {0.2, 0};
  b.c_minus = {0, 3};
  s.c_minus = a.c_minus + b.c_minus;
  for (double t : {-30.0, -5.0, -1.13, 0.0, 2.71, 5.0, 12.0})
  {
    const cplx sum = trace_eval(a, t) + trace_eval(b, t);
    CHECK(std::abs(trace_eval(s, t) - sum) <= 1e-14 * std::max(1.0, std::abs(sum)));
  }
}

TEST_CASE("segment view restricts the interval", "[trace]")
{
  auto tr = zero_trace(0, 0.0, 1.0, make_grid(2.0, 0.25), false);
  tr.values.assign(tr.grid.nodes(), 2.0);
  const TraceSegmentView v{&tr, -1.0, 1.0};
  CHECK(std::abs(v(0.3) - 2.0) < 1e-14);
  CHECK_THROWS_AS(v(1.5), DomainError);
}

TEST_CASE("tail fit recovers an exact model", "[trace]")
{
  std::vector<std::pair<double, cplx>> s;
  const cplx k = 1.0, c(2.0, 1.0);
  for (double t = 10.0; t <= 40.0; t += 0.5)
  {
    s.emplace_back(t, c * tail_model(k, t));
    s.emplace_back(-t, 0.5 * c * tail_model(k, t) * (1.0 + 0.3 / t));
  }
  const auto fit = estimate_tail_coefficients(s, k);
  CHECK(std::abs(fit.c_plus - c) < 1e-10);
  CHECK(std::abs(fit.c_minus - 0.5 * c) < 1e-10);
  CHECK(std::abs(fit.b_minus - 0.3) < 1e-8);
}

TEST_CASE("tail fit of zero samples", "[trace]")
{
  std::vector<std::pair<double, cplx>> s;
  for (double t = 5.0; t <= 10.0; t += 1.0)
  {
    s.emplace_back(t, 0.0);
    s.emplace_back(-t, 0.0);
  }
  const auto fit = estimate_tail_coefficients(s, 1.0);
  CHECK(fit.c_plus == cplx{});
  CHECK(fit.c_minus == cplx{});
}

TEST_CASE("tail fit needs samples on both sides", "[trace]")
{
  std::vector<std::pair<double, cplx>> s{{1.0, 1.0}, {2.0, 1.0}, {3.0, 1.0}, {4.0, 1.0}};
  CHECK_THROWS_AS(estimate_tail_coefficients(s, 1.0), EstimationError);
}

TEST_CASE("point-source trace: tail amplitude and residual decay", "[trace]")
{
  const auto f = build_polygon({{0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}, {-0.5, -0.5}});
  const cplx k = 1.0;
  const Vec2 z = f.centroid;
  std::vector<double> res;
  for (double A : {10.0, 20.0, 40.0})
  {
    std::vector<std::pair<double, cplx>> s;
    for (double t = A / 2.0; t <= A; t += 0.1)
    {
      s.emplace_back(t, verify::phi(k, f.sigma_point(0, t), z));
      s.emplace_back(-t, verify::phi(k, f.sigma_point(0, -t), z));
    }
    const auto fit = estimate_tail_coefficients(s, k);
    if (A == 40.0)
    {
      CHECK(std::abs(std::abs(fit.c_plus) - 0.199471) < 1e-3);
      const auto [cp, cm] = verify::point_source_tails(k, f, 0, z);
      CHECK(std::abs(fit.c_plus - cp) < 1e-3);
      CHECK(std::abs(fit.c_minus - cm) < 1e-3);
    }
    // normalise by the sample norm so the levels compare
    double n2 = 0.0;
    for (const auto &p : s)
    {
      n2 += std::norm(p.second);
    }
    res.push_back(fit.residual / std::sqrt(n2));
  }
  CHECK(res[1] < res[0]);
  CHECK(res[2] < res[1]);
  // at least first order in 1/A
  CHECK(res[2] / res[1] < 0.6);
}

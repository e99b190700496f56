// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <set>

#include "hsm/verify.hpp"

using namespace hsm;
using namespace hsm::verify;

TEST_CASE("fundamental solution values", "[verify][oracle]")
{
  CHECK(std::abs(phi(1.0, {0.0, 0.0}, {1.0, 0.0}) - cplx(-0.022064, 0.191299)) < 1e-6);
  const Vec2 x{0.3, -1.2}, y{2.0, 0.7};
  CHECK(phi(cplx(1.5, 0.2), x, y) == phi(cplx(1.5, 0.2), y, x));
  CHECK_THROWS_AS(phi(1.0, x, x), DomainError);
  CHECK_THROWS_AS(phi_grad(1.0, x, x), DomainError);
}

TEST_CASE("fundamental solution decays like e^{-Im k r}", "[verify][oracle]")
{
  const cplx k(1.0, 1.0);
  const double r5 = std::abs(phi(k, {0, 0}, {5, 0})), r6 = std::abs(phi(k, {0, 0}, {6, 0}));
  CHECK(r6 / r5 == Catch::Approx(std::exp(-1.0)).epsilon(0.1));
  // with the r^{-1/2} factor removed
  CHECK(r6 / r5 * std::sqrt(6.0 / 5.0) == Catch::Approx(std::exp(-1.0)).epsilon(1e-2));
}

TEST_CASE("gradient of the fundamental solution", "[verify][oracle]")
{
  const cplx k(2.0, 0.3);
  const Vec2 x{0.4, 1.1}, y{-0.5, 0.2};
  const auto g = phi_grad(k, x, y);
  const double d = 1e-6;
  const cplx gx = (phi(k, {x.x + d, x.y}, y) - phi(k, {x.x - d, x.y}, y)) / (2.0 * d);
  const cplx gy = (phi(k, {x.x, x.y + d}, y) - phi(k, {x.x, x.y - d}, y)) / (2.0 * d);
  CHECK(std::abs(g.x - gx) < 1e-8);
  CHECK(std::abs(g.y - gy) < 1e-8);
}

TEST_CASE("point-source amplitudes", "[verify][oracle]")
{
  const auto f = unit_square();
  const auto [cp, cm] = point_source_tails(1.0, f, 0, f.centroid);
  CHECK(std::abs(cp) == Catch::Approx(0.199471).epsilon(1e-5));
  CHECK(std::arg(cp) == Catch::Approx(pi / 4.0));
  CHECK(cp == cm);
  const cplx F = point_source_far_field(1.0, {0, 0}, {0.3, 0.0}, {1.0, 0.0});
  CHECK(std::arg(F) == Catch::Approx(pi / 4.0 - 0.3));
}

TEST_CASE("convolution oracle", "[verify][oracle]")
{
  const cplx k = 1.0;
  CHECK(convolution_oracle(k, {}, {1.0, 2.0}) == cplx{});
  CHECK(convolution_oracle(k, {{{0, 0}, 0.2, 0.0}}, {1.0, 2.0}) == cplx{});

  SECTION("small disc acts like a point source")
  {
    const double eps = 0.01;
    const Vec2 c{0.1, 0.2}, p{2.0, -1.0};
    const cplx v = convolution_oracle(k, {{c, eps, 1.0}}, p);
    const cplx point = pi * eps * eps * phi(k, p, c);
    CHECK(std::abs(v / point - 1.0) < 1e-3);
  }
  SECTION("radial symmetry")
  {
    const DiscBump b{{0.2, -0.1}, 0.3, cplx(1.0, 0.5)};
    const cplx v1 = convolution_oracle(k, {b}, {b.center.x + 0.6, b.center.y});
    const cplx v2 = convolution_oracle(k, {b}, {b.center.x, b.center.y - 0.6});
    const cplx v3 = convolution_oracle(k, {b}, {b.center.x - 0.6 * std::cos(1.0), b.center.y + 0.6 * std::sin(1.0)});
    CHECK(std::abs(v1 - v2) <= 1e-8 * std::abs(v1));
    CHECK(std::abs(v1 - v3) <= 1e-8 * std::abs(v1));
  }
  SECTION("agrees with the closed form inside and outside the disc")
  {
    const DiscBump b{{0.0, 0.0}, 0.2, 1.0};
    for (const Vec2 p : {Vec2{0.0, 0.0}, Vec2{0.1, 0.05}, Vec2{0.3, 0.0}, Vec2{1.0, 2.0}, Vec2{0.0, 0.21}})
    {
      const cplx ex = disc_convolution_exact(k, b, p);
      INFO("p = (" << p.x << ", " << p.y << ")");
      CHECK(std::abs(convolution_oracle(k, {b}, p) - ex) <= 1e-6 * std::abs(ex));
    }
    CHECK_THROWS_AS(disc_convolution_exact(cplx(1.0, 0.1), b, {1.0, 0.0}), UnsupportedError);
  }
}

TEST_CASE("independent Bessel series", "[verify][oracle]")
{
  for (double x : {0.1, 0.5, 1.0, 2.0, 4.0})
  {
    const auto s = bessel_series(x);
    const cplx h0 = specfun::hankel_h0(x), h1 = specfun::hankel_h1(x);
    CHECK(std::abs(h0 - cplx(s.j0, s.y0)) <= 1e-12 * std::abs(h0));
    CHECK(std::abs(h1 - cplx(s.j1, s.y1)) <= 1e-12 * std::abs(h1));
  }
}

TEST_CASE("log-log slope of a power law", "[verify]")
{
  const std::vector<double> x{1.0, 2.0, 4.0, 8.0};
  std::vector<double> y;
  for (double v : x)
  {
    y.push_back(3.0 * std::pow(v, -1.5));
  }
  CHECK(loglog_slope(x, y) == Catch::Approx(-1.5));
}

TEST_CASE("every acceptance criterion has exactly one case", "[verify]")
{
  std::multiset<std::string> names;
  for (const auto &[name, fn] : registered_cases())
  {
    names.insert(name);
  }
  for (int i = 1; i <= 10; ++i)
  {
    CHECK(names.count("acceptance-" + std::to_string(i)) == 1);
  }
  CHECK_THROWS_AS(run_case("no-such-case"), DomainError);
  CHECK_THROWS_AS(run_convergence("no-such-case", {1, 2, 3}), DomainError);
  CHECK_THROWS_AS(run_convergence("polygon-h", {1, 2}), DomainError);
}

TEST_CASE("reports serialize to JSON", "[verify]")
{
  const auto r = run_case("acceptance-10");
  CHECK(r.pass());
  const auto j = to_json(r);
  CHECK(j["case"] == "acceptance-10");
  CHECK(j["pass"] == true);
  CHECK(j["checks"].size() == 2);
  CHECK(j["checks"][0]["metrics"].contains("max_abs_error"));
}

TEST_CASE("super-algebraic trend detection", "[verify]")
{
  ConvergenceReport r;
  r.slopes = {-2.0, -4.0, -6.0};
  CHECK(superalgebraic(r));
  r.slopes = {-2.0, -4.0, -0.1};
  CHECK_FALSE(superalgebraic(r));
  r.slopes = {-1.0, -1.0, -1.0};
  CHECK_FALSE(superalgebraic(r));
}

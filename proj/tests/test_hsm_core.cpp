// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include "hsm/hsm_core.hpp"
#include "hsm/verify.hpp"

using namespace hsm;
using verify::unit_square;

namespace
{

// Exact point-source unknowns in the layout of `sys`.
Eigen::VectorXcd exact_unknowns(const LinearSystem &sys, const PolygonFrames &f,
                                const HsmDiscretization &disc, cplx k, Vec2 z)
{
  const auto &L = sys.layout;
  Eigen::VectorXcd x(L.size());
  for (int j = 0; j < L.edges; ++j)
  {
    for (int m = 0; m < L.nodes; ++m)
    {
      x(L.value(j, m)) = verify::phi(k, f.sigma_point(j, disc.grid.node(m)), z);
    }
    if (L.tails)
    {
      const auto [cp, cm] = verify::point_source_tails(k, f, j, z);
      x(L.c_plus(j)) = cp;
      x(L.c_minus(j)) = cm;
    }
  }
  return x;
}

double node_residual(const LinearSystem &sys, const Eigen::VectorXcd &x)
{
  const Eigen::VectorXcd r = sys.matrix * x - sys.rhs;
  double worst = 0.0;
  for (int j = 0; j < sys.layout.edges; ++j)
  {
    for (int m = 0; m < sys.layout.nodes; ++m)
    {
      worst = std::max(worst, std::abs(r(sys.layout.value(j, m))));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("system dimension, zero data and second-kind structure", "[hsm_core]")
{
  const auto f = unit_square();
  const KernelParams kp(1.0);
  const auto disc = make_discretization(f, kp.k, 10.0, 0.05);
  const auto sys = assemble_polygon(kp, f, [](int, Vec2) { return cplx{}; }, disc);
  CHECK(sys.matrix.rows() == 4 * (2 * 10 / 0.05 + 1) + 8);
  CHECK(sys.matrix.cols() == sys.matrix.rows());
  CHECK(sys.rhs.norm() == 0.0);
  for (int j = 0; j < 4; ++j)
  {
    for (int m = 0; m < sys.layout.nodes; ++m)
    {
      const int r = sys.layout.value(j, m);
      CHECK(sys.matrix(r, r) == cplx(1.0));
    }
  }
  CHECK(std::isfinite(sys.matrix.cwiseAbs().rowwise().sum().maxCoeff()));
}

TEST_CASE("exact traces nearly satisfy the assembled equations", "[hsm_core]")
{
  // The residual is the interpolation error of the exact trace, so it falls
  // with h at the interpolation order.
  const auto f = unit_square();
  const KernelParams kp(cplx(1.0, 0.5));
  const Vec2 z{0.0, 0.0};
  std::vector<double> res;
  for (double div : {20.0, 40.0})
  {
    const auto disc = make_discretization(f, kp.k, 30.0, kp.wavelength() / div);
    const auto sys = assemble_polygon(kp, f, verify::point_source_data(kp.k, z), disc);
    res.push_back(node_residual(sys, exact_unknowns(sys, f, disc, kp.k, z)));
  }
  CHECK(res[1] <= 1e-6);
  CHECK(std::log2(res[0] / res[1]) >= 3.0);
}

TEST_CASE("tail options must match the wavenumber", "[hsm_core]")
{
  const auto f = unit_square();
  const KernelParams kp(cplx(1.0, 0.5));
  auto disc = make_discretization(f, 1.0, 4.0, 0.5);
  CHECK(disc.tails);
  CHECK_THROWS_AS(assemble_polygon(kp, f, {}, disc), AssemblyError);
}

TEST_CASE("singular systems are reported", "[hsm_core]")
{
  double rc = 1.0;
  CHECK_THROWS_AS(dense_solve(Eigen::MatrixXcd::Zero(3, 3), Eigen::VectorXcd::Ones(3), &rc),
                  SolveError);
}

TEST_CASE("zero data gives the zero solution", "[hsm_core]")
{
  const auto f = unit_square();
  const KernelParams kp(1.0);
  const auto disc = make_discretization(f, kp.k, 4.0 * kp.wavelength(), kp.wavelength() / 10.0);
  const auto sol = solve_polygon(kp, f, [](int, Vec2) { return cplx{}; }, disc);
  for (const auto &tr : sol.traces)
  {
    for (const auto &v : tr.values)
    {
      CHECK(v == cplx{});
    }
    CHECK(tr.c_plus == cplx{});
    CHECK(tr.c_minus == cplx{});
  }
  CHECK(reconstruct(sol, {3.0, 1.0}) == cplx{});
  CHECK(far_field(sol, {0.0, 1.0}) == cplx{});
  CHECK(sommerfeld_residual(sol, 20.0, 16) == 0.0);
}

TEST_CASE("solutions are linear in the data", "[hsm_core]")
{
  const auto f = unit_square();
  const KernelParams kp(1.0);
  const auto disc = make_discretization(f, kp.k, 4.0 * kp.wavelength(), kp.wavelength() / 10.0);
  const auto g1 = verify::point_source_data(kp.k, {0.1, 0.2});
  const DirichletData g2 = [](int j, Vec2 p) { return cplx(j + 1.0, p.x * p.y); };
  const auto s1 = solve_polygon(kp, f, g1, disc);
  const auto s2 = solve_polygon(kp, f, g2, disc);
  const auto s = solve_polygon(kp, f, [&](int j, Vec2 p) { return g1(j, p) + g2(j, p); }, disc);
  double worst = 0.0, mag = 0.0;
  for (int j = 0; j < 4; ++j)
  {
    for (int m = 0; m < disc.grid.nodes(); ++m)
    {
      worst = std::max(worst, std::abs(s.traces[j].values[m] - s1.traces[j].values[m] -
                                       s2.traces[j].values[m]));
      mag = std::max(mag, std::abs(s.traces[j].values[m]));
    }
    worst = std::max(worst, std::abs(s.traces[j].c_plus - s1.traces[j].c_plus - s2.traces[j].c_plus));
  }
  CHECK(worst <= 1e-12 * mag);
}

TEST_CASE("manufactured point source: traces, field, overlap", "[hsm_core]")
{
  const auto &run = verify::reference_run(1);
  const auto &sol = run.sol;
  CHECK(verify::trace_error(sol, run.z) <= 1e-4);
  const auto pts = verify::exterior_points(sol.frames, 100, 5.0, 0.1, 21);
  CHECK(verify::reconstruct_error(sol, run.z, pts) <= 1e-4);
  CHECK(compatibility_residual(sol, 50) <= 1e-4);
  CHECK(sol.report.seam <= seam_tolerance(sol.traces[0]));
  CHECK(sol.report.linear_residual <= 1e-12);
}

TEST_CASE("far field of a point source at the centroid", "[hsm_core]")
{
  const auto &sol = verify::reference_run(1).sol;
  for (int i = 0; i < 8; ++i)
  {
    const double th = 2.0 * pi * i / 8.0 + 0.1;
    const cplx F = far_field(sol, {std::cos(th), std::sin(th)});
    CHECK(std::abs(std::abs(F) - 0.199471) < 1e-3);
    CHECK(std::abs(std::arg(F) - pi / 4.0) < 1e-3 / 0.199471);
  }
}

TEST_CASE("far field of an off-centre point source", "[hsm_core]")
{
  const Vec2 z{0.2, 0.1};
  const auto run = verify::solve_manufactured(1.0, z, 12.0 * 2.0 * pi, 2.0 * pi / 20.0, 1);
  for (int i = 0; i < 16; ++i)
  {
    const double th = 2.0 * pi * i / 16.0;
    const Vec2 d{std::cos(th), std::sin(th)};
    const cplx ex = verify::point_source_far_field(1.0, run.sol.frames.centroid, z, d);
    CHECK(std::abs(far_field(run.sol, d) - ex) <= 1e-3 * std::abs(ex));
  }
}

TEST_CASE("Sommerfeld residual decays like 1/R", "[hsm_core]")
{
  const auto &sol = verify::reference_run(1).sol;
  const double m20 = sommerfeld_residual(sol, 20.0, 64);
  const double m40 = sommerfeld_residual(sol, 40.0, 64);
  const double m80 = sommerfeld_residual(sol, 80.0, 64);
  CHECK(m40 / m20 == Catch::Approx(0.5).margin(0.05));
  CHECK(m40 < m20);
  CHECK(m80 < m40);
  CHECK_THROWS_AS(sommerfeld_residual(sol, 0.5, 8), DomainError);
}

TEST_CASE("dissipative point source without tails", "[hsm_core]")
{
  // A = 30; the grid is finer than wavelength/20, see the notes in the README.
  const cplx k(1.0, 0.5);
  const Vec2 z{0.0, 0.0};
  const auto run = verify::solve_manufactured(k, z, 30.0, 2.0 * pi / 50.0, 1);
  CHECK_FALSE(run.sol.disc.tails);
  CHECK(verify::trace_error(run.sol, z) <= 1e-6);
  CHECK_THROWS_AS(far_field(run.sol, {1.0, 0.0}), UnsupportedError);
}

TEST_CASE("points inside the polygon cannot be reconstructed", "[hsm_core]")
{
  const auto f = unit_square();
  CHECK_THROWS_AS(deepest_halfplane(f, {0.1, 0.1}), DomainError);
  CHECK(deepest_halfplane(f, {3.0, 0.5}) == 0);
}

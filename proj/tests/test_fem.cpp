// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <map>
#include <sstream>

#include "hsm/fem.hpp"
#include "hsm/verify.hpp"

using namespace hsm;
using verify::unit_square;

namespace
{

HsmDiscretization coarse_disc(const PolygonFrames &f, cplx k)
{
  return make_discretization(f, k, 0.0, 0.0);
}

Eigen::VectorXcd load_vector(const FemMesh &m)
{
  Eigen::VectorXcd F = Eigen::VectorXcd::Zero(m.nodes.size());
  for (std::size_t t = 0; t < m.triangles.size(); ++t)
  {
    for (int i = 0; i < 3; ++i)
    {
      F(m.triangles[t][i]) += m.f_moments[t][i];
    }
  }
  return F;
}

}  // namespace

TEST_CASE("ring mesh counts", "[fem]")
{
  const auto m = build_square_ring_mesh(2.0, 0.0, 4);
  CHECK(m.triangles.size() == 32);
  CHECK(m.nodes.size() == 25);
  CHECK(m.boundary.size() == 16);
}

TEST_CASE("ring mesh with a hole passes the audit", "[fem]")
{
  auto m = build_square_ring_mesh(2.0, 0.5, 8);
  REQUIRE_NOTHROW(check_mesh(m));
  for (std::size_t t = 0; t < m.triangles.size(); ++t)
  {
    CHECK(m.area(static_cast<int>(t)) > 0.0);
  }
  std::map<int, int> parts;
  for (const auto &be : m.boundary)
  {
    ++parts[be.part];
  }
  CHECK(parts[obstacle_part] == 8);
  for (int j = 0; j < 4; ++j)
  {
    CHECK(parts[j] == 8);
  }
  // total area of the ring
  double area = 0.0;
  for (std::size_t t = 0; t < m.triangles.size(); ++t)
  {
    area += m.area(static_cast<int>(t));
  }
  CHECK(area == Catch::Approx(4.0 - 0.25).epsilon(1e-14));
}

TEST_CASE("ring mesh parameter errors", "[fem]")
{
  CHECK_THROWS_AS(build_square_ring_mesh(2.0, 2.0, 8), DomainError);
  CHECK_THROWS_AS(build_square_ring_mesh(2.0, 3.0, 8), DomainError);
  CHECK_THROWS_AS(build_square_ring_mesh(2.0, 0.3, 8), DomainError);
}

TEST_CASE("mesh audit rejects broken meshes", "[fem]")
{
  auto m = build_square_ring_mesh(2.0, 0.0, 4);
  auto untagged = m;
  untagged.boundary.pop_back();
  CHECK_THROWS_AS(check_mesh(untagged), GeometryError);
  auto degenerate = m;
  degenerate.triangles[0][1] = degenerate.triangles[0][0];
  CHECK_THROWS_AS(check_mesh(degenerate), GeometryError);
  auto clockwise = m;
  std::swap(clockwise.triangles[3][1], clockwise.triangles[3][2]);
  REQUIRE_NOTHROW(check_mesh(clockwise));
  CHECK(clockwise.area(3) > 0.0);
}

TEST_CASE("P1 matrices of the reference triangle", "[fem]")
{
  const auto E = p1_element({0, 0}, {1, 0}, {0, 1});
  const double S[3][3] = {{1.0, -0.5, -0.5}, {-0.5, 0.5, 0.0}, {-0.5, 0.0, 0.5}};
  for (int i = 0; i < 3; ++i)
  {
    for (int j = 0; j < 3; ++j)
    {
      CHECK(std::abs(E.stiffness[i][j] - S[i][j]) < 1e-15);
      CHECK(std::abs(E.mass[i][j] - (i == j ? 0.5 / 6.0 : 0.5 / 12.0)) < 1e-16);
    }
  }
}

TEST_CASE("global stiffness is symmetric and annihilates constants", "[fem]")
{
  auto m = build_square_ring_mesh(2.0, 0.5, 8);
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(m.nodes.size(), m.nodes.size());
  Eigen::MatrixXd M = S;
  for (const auto &T : m.triangles)
  {
    const auto E = p1_element(m.nodes[T[0]], m.nodes[T[1]], m.nodes[T[2]]);
    for (int i = 0; i < 3; ++i)
    {
      for (int j = 0; j < 3; ++j)
      {
        S(T[i], T[j]) += E.stiffness[i][j];
        M(T[i], T[j]) += E.mass[i][j];
      }
    }
  }
  CHECK((S - S.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((M - M.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(S.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-13);
  CHECK(M.sum() == Catch::Approx(3.75).epsilon(1e-14));
}

TEST_CASE("coupled block is complex symmetric; zero source gives zero load", "[fem]")
{
  const auto f = unit_square();
  const KernelParams kp(1.0);
  auto m = build_square_ring_mesh(2.0, 0.5, 8);
  check_mesh(m);
  auto disc = coarse_disc(f, kp.k);
  disc.edge_data = false;
  const auto sys = assemble_coupled(kp, f, m, disc);
  const Eigen::MatrixXcd K(sys.K);
  CHECK((K - K.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(sys.F.norm() == 0.0);
  CHECK(sys.hsm.rhs.norm() == 0.0);
}

TEST_CASE("bump moments", "[fem]")
{
  const DiscBump b{{0.1, -0.05}, 0.3, 1.0};
  // triangle well inside the disc
  const auto in = disc_overlap({0.05, -0.1}, {0.15, -0.1}, {0.1, 0.0}, b, 16);
  CHECK(in.fraction == 1.0);
  CHECK(in.moments[0] == Catch::Approx(1.0 / 3.0));
  const auto out = disc_overlap({2.0, 2.0}, {3.0, 2.0}, {2.0, 3.0}, b, 16);
  CHECK(out.fraction == 0.0);
  // covered area of a mesh
  auto m = build_square_ring_mesh(2.0, 0.0, 16);
  apply_bumps(m, {}, {b});
  double area = 0.0;
  for (std::size_t t = 0; t < m.triangles.size(); ++t)
  {
    area += m.f[t].real() * m.area(static_cast<int>(t));
  }
  CHECK(area == Catch::Approx(pi * 0.09).epsilon(1e-3));
  CHECK_THROWS_AS(apply_bumps(m, {{{0, 0}, 0.1, cplx(1.0, -0.5)}}, {}), DomainError);
}

TEST_CASE("point location and P1 evaluation", "[fem]")
{
  auto m = build_square_ring_mesh(2.0, 0.5, 8);
  check_mesh(m);
  const MeshLocator loc(m);
  Eigen::VectorXcd u(m.nodes.size());
  for (std::size_t i = 0; i < m.nodes.size(); ++i)
  {
    u(i) = cplx(2.0 * m.nodes[i].x - m.nodes[i].y + 0.5, m.nodes[i].y);
  }
  for (const Vec2 p : {Vec2{0.7, 0.3}, Vec2{-0.9, -0.95}, Vec2{0.0, 0.5}, Vec2{1.0, 1.0}})
  {
    const auto w = loc.locate(p);
    REQUIRE(w.found());
    CHECK(std::abs(p1_value(m, u, w) - cplx(2.0 * p.x - p.y + 0.5, p.y)) < 1e-13);
  }
  CHECK_FALSE(loc.locate({0.0, 0.0}).found());  // in the hole
  CHECK_FALSE(loc.locate({1.5, 0.0}).found());
}

TEST_CASE("mesh text format round trip", "[fem]")
{
  auto m = build_square_ring_mesh(2.0, 0.5, 8);
  std::stringstream ss;
  write_mesh(ss, m);
  const auto r = read_mesh(ss);
  REQUIRE(r.nodes.size() == m.nodes.size());
  CHECK(r.triangles == m.triangles);
  REQUIRE(r.boundary.size() == m.boundary.size());
  for (std::size_t i = 0; i < m.nodes.size(); ++i)
  {
    CHECK(r.nodes[i] == m.nodes[i]);
  }
  for (std::size_t i = 0; i < m.boundary.size(); ++i)
  {
    CHECK(r.boundary[i].part == m.boundary[i].part);
  }
  std::istringstream bad("nodes 2\n0 0\n1 x\n");
  CHECK_THROWS_AS(read_mesh(bad), IoError);
  std::istringstream tag("nodes 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2\nboundary 1\n0 1 outer\n");
  CHECK_THROWS_AS(read_mesh(tag), IoError);
}

TEST_CASE("setup checks", "[fem]")
{
  const auto f = unit_square();
  const KernelParams kp(1.0);
  const auto disc = coarse_disc(f, kp.k);
  // source outside the polygon
  auto m = build_square_ring_mesh(2.0, 0.0, 16);
  apply_bumps(m, {}, {{{0.8, 0.0}, 0.1, 1.0}});
  CHECK_THROWS_AS(solve_coupled(kp, f, m, disc), DomainError);
  // coupling boundary too close to Sigma
  auto tight = build_square_ring_mesh(1.25, 0.0, 10);
  CHECK_THROWS_AS(solve_coupled(kp, f, tight, disc), GeometryError);
}

TEST_CASE("zero data gives the zero coupled solution", "[fem]")
{
  const auto f = unit_square();
  const KernelParams kp(1.0);
  auto m = build_square_ring_mesh(2.0, 0.5, 16);
  const auto sol = solve_coupled(kp, f, m, coarse_disc(f, kp.k));
  CHECK(sol.u_b.norm() == 0.0);
  for (const auto &tr : sol.exterior.traces)
  {
    for (const auto &v : tr.values)
    {
      CHECK(v == cplx{});
    }
  }
  CHECK(eval_coupled(sol, {3.0, 0.0}) == cplx{});
  CHECK_THROWS_AS(eval_coupled(sol, {0.1, 0.1}), DomainError);
}

const std::vector<DiscBump> bump_source{{{0.0, 0.0}, 0.2, 1.0}};

// Solved once, shared by the sections below.
const CoupledSolution &bump_solution()
{
  static const CoupledSolution sol = []
  {
    const auto f = unit_square();
    const KernelParams kp(1.0);
    auto m = build_square_ring_mesh(2.0, 0.0, 64);
    apply_bumps(m, {}, bump_source);
    return solve_coupled(kp, f, m, make_discretization(f, kp.k, 0.0, kp.wavelength() / 20.0));
  }();
  return sol;
}

TEST_CASE("bump source against the convolution oracle", "[fem]")
{
  const KernelParams kp(1.0);
  const auto &src = bump_source;
  const auto &sol = bump_solution();

  SECTION("exterior points")
  {
    for (int i = 0; i < 20; ++i)
    {
      const double th = 2.0 * pi * i / 20.0;
      const double r = i % 2 ? 0.8 : 2.5;
      const Vec2 p{r * std::cos(th), r * std::sin(th)};
      const cplx ex = verify::convolution_oracle(kp.k, src, p);
      INFO("p = (" << p.x << ", " << p.y << ")");
      CHECK(std::abs(eval_coupled(sol, p) - ex) <= 1e-2 * std::abs(ex));
    }
  }
  SECTION("finite elements and half-plane agree in the overlap")
  {
    for (int i = 0; i < 20; ++i)
    {
      const Vec2 p{0.55 + 0.4 * (i % 5) / 4.0, -0.9 + 1.8 * (i / 5) / 3.0};
      const cplx fe = p1_value(*sol.mesh, sol.u_b, sol.locator->locate(p));
      const cplx hp = reconstruct(sol.exterior, p);
      CHECK(std::abs(fe - hp) <= 1e-2 * std::abs(hp));
    }
  }
  SECTION("no jump across the outer boundary")
  {
    for (double th : {0.1, 0.7, 2.0, 4.0})
    {
      const Vec2 d{std::cos(th), std::sin(th)};
      const double s = 1.0 / std::max(std::abs(d.x), std::abs(d.y));  // boundary of the square
      const cplx in = eval_coupled(sol, (s - 1e-9) * d);
      const cplx out = eval_coupled(sol, (s + 1e-9) * d);
      CHECK(std::abs(in - out) <= 1e-2 * std::abs(out));
    }
  }
  SECTION("residual report")
  {
    CHECK(sol.exterior.report.linear_residual <= 1e-12);
    CHECK(sol.exterior.report.matching <= 1e-12);
    CHECK(sol.exterior.report.robin <= 1e-2);
  }
}

TEST_CASE("obstacle: reciprocity and partition independence", "[fem]")
{
  const auto f = unit_square();
  const KernelParams kp(1.0);
  const auto disc = coarse_disc(f, kp.k);
  const auto base = build_square_ring_mesh(2.0, 0.5, 32);
  const Vec2 z1{0.35, 0.1}, z2{-0.3, -0.35};
  auto m1 = base, m2 = base;
  apply_bumps(m1, {}, {{z1, 0.05, 1.0}});
  apply_bumps(m2, {}, {{z2, 0.05, 1.0}});
  const auto s1 = solve_coupled(kp, f, m1, disc);
  const auto s2 = solve_coupled(kp, f, m2, disc);
  // int f2 u1 = int f1 u2 for the symmetric (Neumann obstacle) problem
  const cplx a = (load_vector(m2).transpose() * s1.u_b)(0);
  const cplx b = (load_vector(m1).transpose() * s2.u_b)(0);
  CHECK(std::abs(a - b) <= 1e-2 * std::abs(a));

  // moving part of Gamma_b^1 to Gamma_b^2 changes nothing but discretization error
  auto m3 = m1;
  for (auto &be : m3.boundary)
  {
    const Vec2 mid = 0.5 * (m3.nodes[be.a] + m3.nodes[be.b]);
    if (be.part == 0 && mid.y > 0.875)
    {
      be.part = 1;
    }
  }
  const auto s3 = solve_coupled(kp, f, m3, disc);
  double diff = 0.0, mag = 0.0;
  for (int i = 0; i < 20; ++i)
  {
    const double th = 2.0 * pi * i / 20.0 + 0.05;
    const Vec2 p{3.0 * std::cos(th), 3.0 * std::sin(th)};
    diff = std::max(diff, std::abs(eval_coupled(s1, p) - eval_coupled(s3, p)));
    mag = std::max(mag, std::abs(eval_coupled(s1, p)));
  }
  CHECK(diff <= 1e-3 * mag);
}

TEST_CASE("bump source: second-order mesh convergence", "[fem][slow]")
{
  const auto rep = verify::run_convergence("bump-n", {2.0 / 32, 2.0 / 64, 2.0 / 128});
  INFO("errors " << rep.errors[0] << " " << rep.errors[1] << " " << rep.errors[2]);
  CHECK(rep.errors[2] < rep.errors[1]);
  CHECK(rep.errors[1] < rep.errors[0]);
  CHECK(rep.fitted_slope >= 2.0 - verify::exponent_tolerance);
}

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hsm/common.hpp"
#include "hsm/error.hpp"
#include "hsm/fem.hpp"
#include "hsm/geometry.hpp"
#include "hsm/halfplane.hpp"
#include "hsm/hsm_core.hpp"
#include "hsm/oracle.hpp"
#include "hsm/specfun.hpp"
#include "hsm/trace.hpp"

namespace hsm::verify
{

// ---------------------------------------------------------------------------
// Reports.

struct Check
{
  std::string name;
  bool pass = true;
  std::vector<std::pair<std::string, double>> metrics;
  std::string note;

  Check &metric(const std::string &key, double v)
  {
    metrics.emplace_back(key, v);
    return *this;
  }
};

struct Report
{
  std::string id;
  std::string title;
  std::vector<Check> checks;
  double seconds = 0.0;

  bool pass() const
  {
    return std::all_of(checks.begin(), checks.end(), [](const Check &c) { return c.pass; });
  }
};

inline nlohmann::json to_json(const Report &r)
{
  nlohmann::json j;
  j["case"] = r.id;
  j["title"] = r.title;
  j["pass"] = r.pass();
  j["seconds"] = r.seconds;
  j["checks"] = nlohmann::json::array();
  for (const auto &c : r.checks)
  {
    nlohmann::json m = nlohmann::json::object();
    for (const auto &[k, v] : c.metrics)
    {
      m[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
    }
    nlohmann::json cj{{"name", c.name}, {"pass", c.pass}, {"metrics", m}};
    if (!c.note.empty())
    {
      cj["note"] = c.note;
    }
    j["checks"].push_back(cj);
  }
  return j;
}

struct VerifyOptions
{
  int threads = 1;
};

// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double> &x, const std::vector<double> &y)
{
  const int n = static_cast<int>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i)
  {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---------------------------------------------------------------------------
// Manufactured point-source problems on the unit square.

inline PolygonFrames unit_square()
{
  return build_polygon({{0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}, {-0.5, -0.5}});
}

// Largest per-edge relative discrete L2 error of the grid values.
inline double trace_error(const HsmSolutionPolygon &sol, Vec2 z)
{
  double worst = 0.0;
  for (int j = 0; j < sol.frames.size(); ++j)
  {
    const auto &tr = sol.traces[j];
    double e2 = 0.0, n2 = 0.0;
    for (int m = 0; m < tr.grid.nodes(); ++m)
    {
      const cplx ex = phi(sol.kp.k, sol.frames.sigma_point(j, tr.grid.node(m)), z);
      e2 += std::norm(tr.values[m] - ex);
      n2 += std::norm(ex);
    }
    worst = std::max(worst, std::sqrt(e2 / n2));
  }
  return worst;
}

// Largest relative error of the solved c+- against the point-source values.
inline double tail_error(const HsmSolutionPolygon &sol, Vec2 z)
{
  double worst = 0.0;
  for (int j = 0; j < sol.frames.size(); ++j)
  {
    const auto [cp, cm] = point_source_tails(sol.kp.k, sol.frames, j, z);
    worst = std::max({worst, std::abs(sol.traces[j].c_plus - cp) / std::abs(cp),
                      std::abs(sol.traces[j].c_minus - cm) / std::abs(cm)});
  }
  return worst;
}

// Points of the box [-L, L]^2 about the centroid at least `margin` outside O.
inline std::vector<Vec2> exterior_points(const PolygonFrames &frames, int count, double L,
                                         double margin, unsigned seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-L, L);
  std::vector<Vec2> pts;
  while (static_cast<int>(pts.size()) < count)
  {
    const Vec2 p = frames.centroid + Vec2{u(rng), u(rng)};
    double depth = -1e300;
    for (int j = 0; j < frames.size(); ++j)
    {
      depth = std::max(depth, to_local(frames, j, p).x1 - frames.a[j]);
    }
    if (depth >= margin)
    {
      pts.push_back(p);
    }
  }
  return pts;
}

inline double reconstruct_error(const HsmSolutionPolygon &sol, Vec2 z,
                                const std::vector<Vec2> &pts)
{
  std::vector<double> e(pts.size());
  parallel_for(pts.size(), sol.disc.threads,
               [&](std::size_t i)
               {
                 const cplx ex = phi(sol.kp.k, pts[i], z);
                 e[i] = std::abs(reconstruct(sol, pts[i]) - ex) / std::abs(ex);
               });
  return *std::max_element(e.begin(), e.end());
}

struct ManufacturedRun
{
  HsmSolutionPolygon sol;
  Vec2 z;
  double seconds = 0.0;
};

inline ManufacturedRun solve_manufactured(cplx k, Vec2 z, double A, double h, int threads)
{
  const KernelParams kp(k);
  const auto frames = unit_square();
  auto disc = make_discretization(frames, k, A, h);
  disc.threads = threads;
  const auto t0 = std::chrono::steady_clock::now();
  ManufacturedRun run{solve_polygon(kp, frames, point_source_data(kp.k, z), disc), z};
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

// The criterion-1 configuration: k = 1, z = centroid, A = 12 wavelengths,
// h = wavelength / 20. Shared by several cases, so solved once.
inline const ManufacturedRun &reference_run(int threads)
{
  static std::mutex mu;
  static std::unique_ptr<ManufacturedRun> run;
  std::lock_guard<std::mutex> lock(mu);
  if (!run)
  {
    const double lambda = 2.0 * pi;
    run = std::make_unique<ManufacturedRun>(
        solve_manufactured(1.0, {0.0, 0.0}, 12.0 * lambda, lambda / 20.0, threads));
  }
  return *run;
}

// ---------------------------------------------------------------------------
// Convergence studies.

struct ConvergenceReport
{
  std::string case_id;
  std::string parameter;
  std::vector<double> ladder;
  std::vector<double> errors;
  std::vector<double> slopes;  // d log(error) / d log(parameter), consecutive levels
  double fitted_slope = 0.0;
};

inline nlohmann::json to_json(const ConvergenceReport &r)
{
  return {{"case", r.case_id},       {"parameter", r.parameter}, {"ladder", r.ladder},
          {"errors", r.errors},      {"slopes", r.slopes},       {"fitted_slope", r.fitted_slope}};
}

// Registered ladders:
//   polygon-h        k = 1, z = centroid, A = 12 wavelengths; ladder of h;
//                    error = largest per-edge relative L2 trace error
//   polygon-A        k = 1, z = (0.2, 0.1), h = wavelength/20; ladder of A;
//                    error = largest relative error of c+-
//   dissipative-A    k = 1 + 0.5i, z = centroid, h = wavelength/40; ladder of
//                    A; error = max |u - Phi| / max |Phi| at 20 exterior points
//   bump-n           coupled problem, f = indicator of the disc of radius 0.2,
//                    k = 1, trace h = wavelength/40; ladder of the mesh size
//                    2/n; error = relative nodal l2 error of u_b
inline ConvergenceReport run_convergence(const std::string &id, const std::vector<double> &ladder,
                                         int threads = 1)
{
  if (ladder.size() < 3)
  {
    throw DomainError("a convergence ladder needs at least 3 levels");
  }
  ConvergenceReport rep;
  rep.case_id = id;
  rep.ladder = ladder;
  const double lambda = 2.0 * pi;
  for (double v : ladder)
  {
    if (id == "polygon-h")
    {
      rep.parameter = "h";
      const Vec2 z{0.0, 0.0};
      rep.errors.push_back(trace_error(solve_manufactured(1.0, z, 12.0 * lambda, v, threads).sol, z));
    }
    else if (id == "polygon-A")
    {
      rep.parameter = "A";
      const Vec2 z{0.2, 0.1};
      rep.errors.push_back(tail_error(solve_manufactured(1.0, z, v, lambda / 20.0, threads).sol, z));
    }
    else if (id == "dissipative-A")
    {
      rep.parameter = "A";
      const cplx k(1.0, 0.5);
      const Vec2 z{0.0, 0.0};
      const auto run = solve_manufactured(k, z, v, lambda / 40.0, threads);
      const auto pts = exterior_points(run.sol.frames, 20, 3.0, 0.2, 7);
      double e = 0.0, mag = 0.0;
      for (const auto &p : pts)
      {
        const cplx ex = phi(run.sol.kp.k, p, z);
        e = std::max(e, std::abs(reconstruct(run.sol, p) - ex));
        mag = std::max(mag, std::abs(ex));
      }
      rep.errors.push_back(e / mag);
    }
    else if (id == "bump-n")
    {
      rep.parameter = "mesh_h";
      const int n = static_cast<int>(std::lround(2.0 / v));
      const KernelParams kp(1.0);
      const auto frames = unit_square();
      auto mesh = build_square_ring_mesh(2.0, 0.0, n);
      const DiscBump bump{{0.0, 0.0}, 0.2, 1.0};
      apply_bumps(mesh, {}, {bump});
      auto disc = make_discretization(frames, kp.k, 0.0, lambda / 40.0);
      disc.threads = threads;
      const auto sol = solve_coupled(kp, frames, mesh, disc);
      double e2 = 0.0, n2 = 0.0;
      for (int i = 0; i < static_cast<int>(mesh.nodes.size()); ++i)
      {
        const cplx ex = disc_convolution_exact(kp.k, bump, mesh.nodes[i]);
        e2 += std::norm(sol.u_b(i) - ex);
        n2 += std::norm(ex);
      }
      rep.errors.push_back(std::sqrt(e2 / n2));
    }
    else
    {
      throw DomainError("unknown convergence case '" + id + "'");
    }
  }
  for (std::size_t i = 0; i + 1 < ladder.size(); ++i)
  {
    rep.slopes.push_back(std::log(rep.errors[i + 1] / rep.errors[i]) /
                         std::log(ladder[i + 1] / ladder[i]));
  }
  rep.fitted_slope = loglog_slope(rep.ladder, rep.errors);
  return rep;
}

// ---------------------------------------------------------------------------
// Half-plane property battery. All checks use one half-plane with Sigma =
// {x1 = 0} and local coordinates.

struct BatteryOptions
{
  double amplitude = 1.0;  // scales every trace; 0 gives the trivial battery
  int threads = 1;
};

namespace detail
{

struct LocalField
{
  cplx u;
  cplx u1;  // d/dx1
  cplx u2;  // d/dx2
};

inline LocalField local_field(const KernelParams &kp, const RadiatingTrace &tr,
                              const QuadratureSpec &q, double x1, double x2)
{
  const auto F = build_functional<3>(kp.k, tr.a, tr.grid, tr.tails, q, x1, x2, tr.edge.get());
  const auto v = F.apply(tr);
  return {v[0], v[1], v[2]};
}

// Trace equal to psi on [-A, A] (integrated exactly, not interpolated).
inline RadiatingTrace function_trace(cplx k, double A, double h, std::function<cplx(double)> psi,
                                     bool tails)
{
  const auto grid = make_grid(A, 2.0 * A / std::ceil(2.0 * A / h - 1e-9));
  auto tr = zero_trace(0, 0.0, k, grid, tails);
  for (int m = 0; m < grid.nodes(); ++m)
  {
    tr.values[m] = psi(grid.node(m));
  }
  auto e = std::make_shared<EdgeData>();
  e->lo = -A;
  e->hi = A;
  e->g = std::move(psi);
  tr.edge = e;
  return tr;
}

inline std::vector<double> log_space(double a, double b, int n)
{
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i)
  {
    v[i] = a * std::pow(b / a, double(i) / (n - 1));
  }
  return v;
}

}  // namespace detail

inline constexpr double exponent_tolerance = 0.05;

// |H(k; x)| <= C (x1/|x|^2)(1 + |x|^{1/2}) e^{-Im k |x|}: the smallest C on a
// 100 x 100 polar log grid.
inline Check check_kernel_bound(const KernelParams &kp)
{
  Check c{"kernel_bound"};
  double C = 0.0;
  for (double r : detail::log_space(1e-3, 1e3, 100))
  {
    for (int i = 0; i < 100; ++i)
    {
      const double th = -0.5 * pi + pi * (i + 0.5) / 100.0;
      const double x1 = r * std::cos(th), x2 = r * std::sin(th);
      const double bound =
          x1 / (r * r) * (1.0 + std::sqrt(r)) * std::exp(-kp.k.imag() * r);
      C = std::max(C, std::abs(kernel_H(kp.k, x1, x2)) / bound);
    }
  }
  c.metric("C", C);
  c.pass = std::isfinite(C);
  return c;
}

// u(eps, t) -> psi(t) for psi = (1 - t^2)^4 on [-1, 1] (interpolated trace).
inline Check check_jump_relation(const KernelParams &kp, const BatteryOptions &opt)
{
  Check c{"jump_relation"};
  const double amp = opt.amplitude;
  auto psi = [amp](double t) { return std::abs(t) < 1.0 ? amp * std::pow(1.0 - t * t, 4) : 0.0; };
  auto tr = zero_trace(0, 0.0, kp.k, make_grid(4.0, 0.025), false);
  for (int m = 0; m < tr.grid.nodes(); ++m)
  {
    tr.values[m] = psi(tr.grid.node(m));
  }
  const QuadratureSpec q;
  std::vector<double> errs;
  for (double eps : {1e-1, 1e-2, 1e-3})
  {
    std::vector<double> e(61);
    parallel_for(e.size(), opt.threads,
                 [&](std::size_t i)
                 {
                   const double t = -1.5 + 3.0 * double(i) / 60.0;
                   e[i] = std::abs(halfplane_eval(kp, tr, q, {0, eps, t}) - psi(t));
                 });
    errs.push_back(*std::max_element(e.begin(), e.end()));
  }
  c.metric("err_eps_1e-1", errs[0]).metric("err_eps_1e-2", errs[1]).metric("err_eps_1e-3", errs[2]);
  const bool monotone = errs[1] < errs[0] && errs[2] < errs[1];
  c.pass = (amp == 0.0) ? errs[2] == 0.0 : (monotone && errs[2] <= 1e-2 * amp);
  return c;
}

namespace detail
{

// Fields of six compactly supported bumps on the points of a strip grid;
// L2 ratios for random combinations follow from the Gram matrices.
struct StripStudy
{
  double max_ratio = 0.0;
  double sup_ratio = 0.0;         // sup over all combinations (generalized eigenvalue)
  std::vector<double> slice_norms; // ||u(x1, .)|| of the first random combination
  std::vector<double> slice_x1;
};

inline StripStudy strip_study(const KernelParams &kp, double L, double X, double dx,
                              double amplitude, int threads)
{
  constexpr int nb = 6;
  const auto grid = make_grid(6.0, 0.05);
  std::vector<RadiatingTrace> basis;
  for (int b = 0; b < nb; ++b)
  {
    const double c0 = -3.0 + 1.2 * b, w = 1.0;
    auto tr = zero_trace(0, 0.0, kp.k, grid, false);
    for (int m = 0; m < grid.nodes(); ++m)
    {
      const double s = (grid.node(m) - c0) / w;
      tr.values[m] = std::abs(s) < 1.0 ? amplitude * std::pow(1.0 - s * s, 3) : 0.0;
    }
    basis.push_back(std::move(tr));
  }
  // Gram matrix of the traces (midpoint rule on a fine grid of the interpolant).
  Eigen::MatrixXcd Gphi = Eigen::MatrixXcd::Zero(nb, nb);
  for (double t = -6.0 + 0.005; t < 6.0; t += 0.01)
  {
    Eigen::VectorXcd v(nb);
    for (int b = 0; b < nb; ++b)
    {
      v(b) = trace_eval(basis[b], t);
    }
    Gphi += 0.01 * v.conjugate() * v.transpose();
  }
  const int n1 = static_cast<int>(std::round(L / dx));
  const int n2 = static_cast<int>(std::round(2.0 * X / dx));
  std::vector<Eigen::MatrixXcd> slices(n1, Eigen::MatrixXcd::Zero(nb, nb));
  const QuadratureSpec q;
  parallel_for(n1, threads,
               [&](std::size_t i)
               {
                 const double x1 = (i + 0.5) * dx;
                 for (int l = 0; l < n2; ++l)
                 {
                   const double x2 = -X + (l + 0.5) * dx;
                   const auto F = build_functional<1>(kp.k, 0.0, grid, false, q, x1, x2);
                   Eigen::VectorXcd v(nb);
                   for (int b = 0; b < nb; ++b)
                   {
                     v(b) = F.apply(basis[b])[0];
                   }
                   slices[i] += dx * v.conjugate() * v.transpose();
                 }
               });
  Eigen::MatrixXcd Gu = Eigen::MatrixXcd::Zero(nb, nb);
  for (const auto &s : slices)
  {
    Gu += dx * s;
  }
  StripStudy out;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g;
  for (int r = 0; r < 20; ++r)
  {
    Eigen::VectorXcd c(nb);
    for (int b = 0; b < nb; ++b)
    {
      c(b) = cplx(g(rng), g(rng));
    }
    const double num = (c.adjoint() * Gu * c)(0).real();
    const double den = (c.adjoint() * Gphi * c)(0).real();
    if (den > 0.0)
    {
      out.max_ratio = std::max(out.max_ratio, std::sqrt(num / den));
    }
    if (r == 0)
    {
      for (int i = 0; i < n1; ++i)
      {
        out.slice_x1.push_back((i + 0.5) * dx);
        out.slice_norms.push_back(std::sqrt(std::max(0.0, (c.adjoint() * slices[i] * c)(0).real())));
      }
    }
  }
  if (amplitude != 0.0)
  {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXcd> es(Gu, Gphi, Eigen::EigenvaluesOnly);
    out.sup_ratio = std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
  }
  return out;
}

}  // namespace detail

// ||u||_{L2(0 < x1 < L)} <= C_L ||phi||, L = 5 wavelengths, real k.
inline Check check_l2_bound_real(const KernelParams &kp, const BatteryOptions &opt)
{
  Check c{"l2_bound_real"};
  const KernelParams kr(kp.k.real());
  const auto s =
      detail::strip_study(kr, 5.0 * kr.wavelength(), 40.0, 0.5, opt.amplitude, opt.threads);
  c.metric("max_ratio", s.max_ratio).metric("sup_ratio", s.sup_ratio);
  c.pass = std::isfinite(s.max_ratio) && s.max_ratio <= s.sup_ratio * (1.0 + 1e-9) + 1e-300;
  return c;
}

// ||u||_{L2(R^2_+)} <= C ||phi|| for Im k = 0.5, with slice norms decaying
// exponentially in x1.
inline constexpr double dissipative_imag = 0.5;

inline Check check_l2_bound_dissipative(const KernelParams &kp, const BatteryOptions &opt)
{
  Check c{"l2_bound_dissipative"};
  const KernelParams kd(cplx(kp.k.real(), dissipative_imag));
  const auto s = detail::strip_study(kd, 20.0, 25.0, 0.5, opt.amplitude, opt.threads);
  c.metric("max_ratio", s.max_ratio).metric("sup_ratio", s.sup_ratio);
  if (opt.amplitude == 0.0)
  {
    c.pass = s.max_ratio == 0.0;
    return c;
  }
  // decay rate of the slice norms over 5 <= x1 <= 15
  std::vector<double> xs, ls;
  for (std::size_t i = 0; i < s.slice_x1.size(); ++i)
  {
    if (s.slice_x1[i] >= 5.0 && s.slice_x1[i] <= 15.0)
    {
      xs.push_back(s.slice_x1[i]);
      ls.push_back(std::log(s.slice_norms[i]));
    }
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i)
  {
    sx += xs[i];
    sy += ls[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ls[i];
  }
  const double n = double(xs.size());
  const double rate = -(n * sxy - sx * sy) / (n * sxx - sx * sx);
  c.metric("slice_decay_rate", rate);
  c.pass = std::isfinite(s.max_ratio) && rate >= 0.8 * dissipative_imag;
  return c;
}

// Decay of u (or of grad u, at distance >= 1 from Sigma) along rays for
// phi = (1 + |t|)^{-2}: sup |.| (1 + |x|)^{1/2} and the log-log slope over
// |x| in [100, 1000].
inline Check check_decay(const KernelParams &kp, const BatteryOptions &opt, bool gradient)
{
  Check c{gradient ? "decay_gradient" : "decay_value"};
  const KernelParams kr(kp.k.real());
  const double amp = opt.amplitude;
  const auto tr = detail::function_trace(
      kr.k, 2000.0, kr.wavelength() / 20.0,
      [amp](double t) { return amp / ((1.0 + std::abs(t)) * (1.0 + std::abs(t))); }, false);
  const QuadratureSpec q;
  const std::vector<double> rays{0.0, pi / 6.0, -pi / 4.0};
  const auto near = detail::log_space(2.0, 100.0, 12);
  const auto far = detail::log_space(100.0, 1000.0, 11);
  std::vector<std::pair<int, double>> pts;
  for (int r = 0; r < 3; ++r)
  {
    for (double R : near)
    {
      pts.emplace_back(r, R);
    }
    for (double R : far)
    {
      pts.emplace_back(r, R);
    }
  }
  std::vector<double> mag(pts.size());
  parallel_for(pts.size(), opt.threads,
               [&](std::size_t i)
               {
                 const double th = rays[pts[i].first], R = pts[i].second;
                 const auto f = detail::local_field(kr, tr, q, R * std::cos(th), R * std::sin(th));
                 mag[i] = gradient ? std::sqrt(std::norm(f.u1) + std::norm(f.u2)) : std::abs(f.u);
               });
  double C = 0.0, worst_dev = 0.0, slope_min = 0.0, slope_max = -1e300;
  for (int r = 0; r < 3; ++r)
  {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < pts.size(); ++i)
    {
      if (pts[i].first != r)
      {
        continue;
      }
      C = std::max(C, mag[i] * std::sqrt(1.0 + pts[i].second));
      if (pts[i].second >= 100.0)
      {
        xs.push_back(pts[i].second);
        ys.push_back(mag[i]);
      }
    }
    if (amp == 0.0)
    {
      continue;
    }
    const double s = loglog_slope(xs, ys);
    slope_min = std::min(slope_min == 0.0 ? s : slope_min, s);
    slope_max = std::max(slope_max, s);
    worst_dev = std::max(worst_dev, std::abs(s + 0.5));
    c.metric("slope_ray" + std::to_string(r), s);
  }
  c.metric("C", C);
  c.pass = amp == 0.0 ? C == 0.0 : (std::isfinite(C) && worst_dev <= exponent_tolerance);
  return c;
}

// M_{R,1} = R^{1/2} sup{|du/dr - iku| : x1 > 1, |x| = R} for the radiating
// trace of Phi(., (-1, 0)), R in {10, 20, 40, 80} wavelengths.
inline Check check_sommerfeld_halfplane(const KernelParams &kp, const BatteryOptions &opt)
{
  Check c{"sommerfeld_subhalfplane"};
  const KernelParams kr(kp.k.real());
  const Vec2 z{-1.0, 0.0};
  const double amp = opt.amplitude;
  auto tr = detail::function_trace(
      kr.k, 12.0 * kr.wavelength(), kr.wavelength() / 20.0,
      [&, amp](double t) { return amp * phi(kr.k, {0.0, t}, z); }, true);
  const cplx c0 = amp * std::exp(0.25 * pi * I) / std::sqrt(8.0 * pi * kr.k);
  tr.c_plus = tr.c_minus = c0;
  const QuadratureSpec q;
  constexpr int samples = 64;
  std::vector<double> M;
  for (double R : {10.0, 20.0, 40.0, 80.0})
  {
    R *= kr.wavelength();
    const double thmax = std::acos(1.0 / R);
    std::vector<double> v(samples);
    parallel_for(samples, opt.threads,
                 [&](std::size_t i)
                 {
                   const double th = -thmax + 2.0 * thmax * (i + 0.5) / samples;
                   const double x1 = R * std::cos(th), x2 = R * std::sin(th);
                   const auto f = detail::local_field(kr, tr, q, x1, x2);
                   const cplx ur = (x1 * f.u1 + x2 * f.u2) / R;
                   v[i] = std::abs(ur - I * kr.k * f.u);
                 });
    M.push_back(std::sqrt(R) * *std::max_element(v.begin(), v.end()));
  }
  bool decreasing = true;
  for (std::size_t i = 0; i < M.size(); ++i)
  {
    c.metric("M_" + std::to_string(10 << i) + "lambda", M[i]);
    if (i > 0 && !(M[i] < M[i - 1]))
    {
      decreasing = false;
    }
  }
  c.pass = amp == 0.0 ? M.back() == 0.0 : decreasing;
  return c;
}

inline Report property_battery_halfplane(const KernelParams &kp, const BatteryOptions &opt = {})
{
  const auto t0 = std::chrono::steady_clock::now();
  Report r{"halfplane-battery", "half-plane propagator properties"};
  r.checks.push_back(check_kernel_bound(kp));
  r.checks.push_back(check_jump_relation(kp, opt));
  r.checks.push_back(check_l2_bound_real(kp, opt));
  r.checks.push_back(check_l2_bound_dissipative(kp, opt));
  r.checks.push_back(check_decay(kp, opt, false));
  r.checks.push_back(check_decay(kp, opt, true));
  r.checks.push_back(check_sommerfeld_halfplane(kp, opt));
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// ---------------------------------------------------------------------------
// Acceptance cases.

namespace detail
{

inline double since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

inline Report acceptance_1(const VerifyOptions &o)
{
  const auto t0 = std::chrono::steady_clock::now();
  Report r{"acceptance-1", "manufactured polygon Dirichlet problem, real k"};
  const auto &run = reference_run(o.threads);
  Check tr{"trace_error"};
  tr.metric("rel_l2_max", trace_error(run.sol, run.z));
  tr.pass = tr.metrics[0].second <= 1e-4;
  Check rc{"reconstruct"};
  const auto pts = exterior_points(run.sol.frames, 100, 5.0, 0.1, 11);
  rc.metric("max_rel_error", reconstruct_error(run.sol, run.z, pts));
  rc.pass = rc.metrics[0].second <= 1e-4;
  Check rt{"runtime"};
  rt.metric("solve_seconds", run.seconds).metric("threads", run.sol.disc.threads);
  rt.pass = run.seconds <= 60.0;
  r.checks = {tr, rc, rt};
  r.seconds = detail::since(t0);
  return r;
}

inline Report acceptance_2(const VerifyOptions &o)
{
  const auto t0 = std::chrono::steady_clock::now();
  Report r{"acceptance-2", "tail coefficients of the solved traces"};
  const auto &run = reference_run(o.threads);
  const auto &sol = run.sol;
  double fit_err = 0.0;
  for (int j = 0; j < sol.frames.size(); ++j)
  {
    const auto &tr = sol.traces[j];
    std::vector<std::pair<double, cplx>> samples;
    for (int m = 0; m < tr.grid.nodes(); ++m)
    {
      const double t = tr.grid.node(m);
      if (std::abs(t) >= 0.5 * tr.grid.A)
      {
        samples.emplace_back(t, tr.values[m]);
      }
    }
    const auto fit = estimate_tail_coefficients(samples, sol.kp.k);
    const auto [cp, cm] = point_source_tails(sol.kp.k, sol.frames, j, run.z);
    fit_err = std::max({fit_err, std::abs(fit.c_plus - cp) / std::abs(cp),
                        std::abs(fit.c_minus - cm) / std::abs(cm)});
  }
  Check c{"fitted_tails"};
  c.metric("fitted_rel_error", fit_err).metric("solved_rel_error", tail_error(sol, run.z));
  c.pass = fit_err <= 1e-3;
  c.note = "fit of c(1 + b/|t|) e^{ik|t|}|t|^{-1/2} to the grid values with |t| >= A/2";
  r.checks = {c};
  r.seconds = detail::since(t0);
  return r;
}

inline Report acceptance_3(const VerifyOptions &o)
{
  const auto t0 = std::chrono::steady_clock::now();
  Report r{"acceptance-3", "dissipative regime, tails disabled, A = 30"};
  const cplx k(1.0, 0.5);
  const Vec2 z{0.0, 0.0};
  const double lambda = 2.0 * pi;
  const auto run = solve_manufactured(k, z, 30.0, lambda / 20.0, o.threads);
  Check te{"trace_error"};
  te.metric("rel_l2_max", trace_error(run.sol, z));
  te.pass = te.metrics[0].second <= 1e-6;
  // The same problem on a finer grid, for reference.
  const auto fine = solve_manufactured(k, z, 30.0, lambda / 50.0, o.threads);
  te.metric("rel_l2_max_h_lambda_over_50", trace_error(fine.sol, z));
  Check tm{"trace_at_A"};
  double mag = 0.0, exact = 0.0;
  for (int j = 0; j < run.sol.frames.size(); ++j)
  {
    const auto &tr = run.sol.traces[j];
    mag = std::max({mag, std::abs(tr.values.front()), std::abs(tr.values.back())});
    for (double t : {-tr.grid.A, tr.grid.A})
    {
      exact = std::max(exact, std::abs(phi(run.sol.kp.k, run.sol.frames.sigma_point(j, t), z)));
    }
  }
  tm.metric("max_abs_trace_at_A", mag).metric("max_abs_exact_at_A", exact);
  tm.pass = mag < 1e-8;
  r.checks = {te, tm};
  r.seconds = detail::since(t0);
  return r;
}

inline Report acceptance_4(const VerifyOptions &o)
{
  const auto t0 = std::chrono::steady_clock::now();
  Report r{"acceptance-4", "compatibility of neighbouring half-plane representations"};
  const auto &sol = reference_run(o.threads).sol;
  // 50 points of Omega^1 ∩ Omega^2 (the overlap at the first corner).
  const auto pts = overlap_samples(sol.frames, 0, 50, 2.0 * sol.kp.wavelength());
  double worst = 0.0;
  for (const auto &p : pts)
  {
    const cplx u1 = halfplane_eval(sol.kp, sol.traces[0], sol.disc.quad, to_local(sol.frames, 0, p));
    const cplx u2 = halfplane_eval(sol.kp, sol.traces[1], sol.disc.quad, to_local(sol.frames, 1, p));
    worst = std::max(worst, std::abs(u1 - u2));
  }
  Check rel{"relative_to_linear_residual"};
  rel.metric("overlap_residual", worst).metric("linear_residual", sol.report.linear_residual);
  rel.pass = worst <= 10.0 * sol.report.linear_residual;
  Check ab{"absolute"};
  ab.metric("overlap_residual", worst);
  ab.pass = worst <= 1e-4;
  r.checks = {rel, ab};
  r.seconds = detail::since(t0);
  return r;
}

inline Report acceptance_5(const VerifyOptions &o)
{
  const auto t0 = std::chrono::steady_clock::now();
  Report r{"acceptance-5", "Sommerfeld residual ladder"};
  const auto &sol = reference_run(o.threads).sol;
  const double k = sol.kp.k.real();
  std::vector<double> M;
  for (double R : {20.0, 40.0, 80.0})
  {
    M.push_back(sommerfeld_residual(sol, R / k, 128));
  }
  Check c{"ladder"};
  c.metric("M_20", M[0]).metric("M_40", M[1]).metric("M_80", M[2]);
  c.metric("ratio_40_20", M[1] / M[0]).metric("ratio_80_40", M[2] / M[1]);
  c.pass = M[1] < M[0] && M[2] < M[1] && M[1] / M[0] <= 0.7 && M[2] / M[1] <= 0.7;
  r.checks = {c};
  r.seconds = detail::since(t0);
  return r;
}

inline Report acceptance_6(const VerifyOptions &o)
{
  const auto t0 = std::chrono::steady_clock::now();
  Report r{"acceptance-6", "half-plane decay properties"};
  const KernelParams kp(1.0);
  const BatteryOptions bo{1.0, o.threads};
  r.checks.push_back(check_decay(kp, bo, false));
  r.checks.push_back(check_decay(kp, bo, true));
  r.checks.push_back(check_sommerfeld_halfplane(kp, bo));
  Check rt{"runtime"};
  rt.metric("seconds", detail::since(t0));
  rt.pass = rt.metrics[0].second <= 120.0;
  r.checks.push_back(rt);
  r.seconds = detail::since(t0);
  return r;
}

inline Report acceptance_7(const VerifyOptions &o)
{
  const auto t0 = std::chrono::steady_clock::now();
  Report r{"acceptance-7", "jump relation"};
  r.checks.push_back(check_jump_relation(KernelParams(1.0), {1.0, o.threads}));
  r.seconds = detail::since(t0);
  return r;
}

inline Report acceptance_8(const VerifyOptions &o)
{
  const auto t0 = std::chrono::steady_clock::now();
  Report r{"acceptance-8", "coupled problem with a bump source"};
  const KernelParams kp(1.0);
  const auto frames = unit_square();
  auto disc = make_discretization(frames, kp.k, 0.0, kp.wavelength() / 20.0);
  disc.threads = o.threads;
  auto mesh = build_square_ring_mesh(2.0, 0.0, 64);
  const std::vector<DiscBump> f{{{0.0, 0.0}, 0.2, 1.0}};
  apply_bumps(mesh, {}, f);
  const auto sol = solve_coupled(kp, frames, mesh, disc);
  // 10 points in Omega_b outside O, 10 outside Omega_b.
  std::vector<Vec2> pts;
  for (int i = 0; i < 20; ++i)
  {
    const double th = 2.0 * pi * i / 20.0 + 0.1;
    const double rr = i < 10 ? 0.8 : 1.6 + 0.15 * i;
    pts.push_back({rr * std::cos(th), rr * std::sin(th)});
  }
  double worst = 0.0;
  for (const auto &p : pts)
  {
    const cplx ex = convolution_oracle(kp.k, f, p);
    worst = std::max(worst, std::abs(eval_coupled(sol, p) - ex) / std::abs(ex));
  }
  Check c{"bump_source"};
  c.metric("max_rel_error", worst).metric("robin_residual", sol.exterior.report.robin);
  c.pass = worst <= 1e-2;

  auto zero_mesh = build_square_ring_mesh(2.0, 0.0, 64);
  const auto z = solve_coupled(kp, frames, zero_mesh, disc);
  double nrm = z.u_b.norm();
  for (const auto &tr : z.exterior.traces)
  {
    for (const auto &v : tr.values)
    {
      nrm = std::hypot(nrm, std::abs(v));
    }
    nrm = std::hypot(nrm, std::abs(tr.c_plus), std::abs(tr.c_minus));
  }
  Check u{"zero_data"};
  u.metric("solution_norm", nrm);
  u.pass = nrm <= 1e-10;
  r.checks = {c, u};
  r.seconds = detail::since(t0);
  return r;
}

// Super-algebraic decrease: the local log-log slopes steepen at every step
// and the last one is below -3.
inline bool superalgebraic(const ConvergenceReport &rep)
{
  for (std::size_t i = 1; i < rep.slopes.size(); ++i)
  {
    if (!(rep.slopes[i] < rep.slopes[i - 1]))
    {
      return false;
    }
  }
  return !rep.slopes.empty() && rep.slopes.back() < -3.0;
}

inline Report acceptance_9(const VerifyOptions &o)
{
  const auto t0 = std::chrono::steady_clock::now();
  Report r{"acceptance-9", "convergence orders"};
  const double lambda = 2.0 * pi;
  const auto hl = run_convergence("polygon-h", {lambda / 10.0, lambda / 20.0, lambda / 40.0}, o.threads);
  Check h{"h_ladder"};
  for (std::size_t i = 0; i < hl.errors.size(); ++i)
  {
    h.metric("error_" + std::to_string(i), hl.errors[i]);
  }
  h.metric("order_min", *std::min_element(hl.slopes.begin(), hl.slopes.end()));
  h.pass = h.metrics.back().second >= 3.0;

  const auto al = run_convergence("polygon-A", {4.0 * lambda, 8.0 * lambda, 16.0 * lambda}, o.threads);
  Check a{"A_ladder_real"};
  for (std::size_t i = 0; i < al.errors.size(); ++i)
  {
    a.metric("error_" + std::to_string(i), al.errors[i]);
  }
  a.metric("fitted_slope", al.fitted_slope);
  a.pass = std::abs(al.fitted_slope + 1.0) <= 0.3;

  const auto dl = run_convergence("dissipative-A", {2.0, 4.0, 6.0, 8.0}, o.threads);
  Check d{"A_ladder_dissipative"};
  for (std::size_t i = 0; i < dl.errors.size(); ++i)
  {
    d.metric("error_" + std::to_string(i), dl.errors[i]);
  }
  for (std::size_t i = 0; i < dl.slopes.size(); ++i)
  {
    d.metric("slope_" + std::to_string(i), dl.slopes[i]);
  }
  d.pass = superalgebraic(dl);
  r.checks = {h, a, d};
  r.seconds = detail::since(t0);
  return r;
}

inline Report acceptance_10(const VerifyOptions &)
{
  const auto t0 = std::chrono::steady_clock::now();
  Report r{"acceptance-10", "special functions"};
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.1, 50.0);
  double w = 0.0;
  for (int i = 0; i < 100; ++i)
  {
    const double x = u(rng);
    const auto h0 = specfun::hankel_h0(x), h1 = specfun::hankel_h1(x);
    w = std::max(w, std::abs(h0.real() * h1.imag() - h1.real() * h0.imag() + 2.0 / (pi * x)));
  }
  Check wr{"wronskian"};
  wr.metric("max_abs_error", w);
  wr.pass = w <= 1e-10;
  const auto s = bessel_series(1.0);
  const cplx h0 = specfun::hankel_h0(1.0), h1 = specfun::hankel_h1(1.0);
  const double e0 = std::abs(h0 - cplx(s.j0, s.y0)) / std::abs(cplx(s.j0, s.y0));
  const double e1 = std::abs(h1 - cplx(s.j1, s.y1)) / std::abs(cplx(s.j1, s.y1));
  Check tv{"table_values"};
  tv.metric("h0_rel_error", e0).metric("h1_rel_error", e1);
  tv.pass = e0 <= 1e-12 && e1 <= 1e-12;
  r.checks = {wr, tv};
  r.seconds = detail::since(t0);
  return r;
}

using CaseFn = std::function<Report(const VerifyOptions &)>;

inline const std::vector<std::pair<std::string, CaseFn>> &registered_cases()
{
  static const std::vector<std::pair<std::string, CaseFn>> cases{
      {"acceptance-1", acceptance_1},
      {"acceptance-2", acceptance_2},
      {"acceptance-3", acceptance_3},
      {"acceptance-4", acceptance_4},
      {"acceptance-5", acceptance_5},
      {"acceptance-6", acceptance_6},
      {"acceptance-7", acceptance_7},
      {"acceptance-8", acceptance_8},
      {"acceptance-9", acceptance_9},
      {"acceptance-10", acceptance_10},
      {"halfplane-battery",
       [](const VerifyOptions &o)
       { return property_battery_halfplane(KernelParams(1.0), {1.0, o.threads}); }},
  };
  return cases;
}

inline Report run_case(const std::string &id, const VerifyOptions &opt = {})
{
  for (const auto &[name, fn] : registered_cases())
  {
    if (name == id)
    {
      return fn(opt);
    }
  }
  throw DomainError("unknown verify case '" + id + "'");
}

}  // namespace hsm::verify

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsm/error.hpp"
#include "hsm/fem.hpp"
#include "hsm/hsm_core.hpp"
#include "hsm/verify.hpp"

namespace hsm::cli
{

using nlohmann::json;

inline constexpr int config_version = 1;

// Exit statuses of `run`.
enum Exit : int
{
  ok = 0,
  config_error = 2,
  solver_error = 3,
  io_error = 4,
};

struct FieldGrid
{
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  int nx = 0, ny = 0;
};

struct DirichletSpec
{
  enum class Type { point_source, edge_constant, sampled } type = Type::point_source;
  Vec2 z;
  std::vector<cplx> values;  // edge_constant
  std::string file;          // sampled
};

struct MeshSpec
{
  enum class Type { ring, file } type = Type::ring;
  double outer = 2.0, inner = 0.0;
  int cells = 32;
  Vec2 center;
  std::string file;
};

struct ConvergenceSpec
{
  std::string id;
  std::vector<double> ladder;
};

struct RunConfig
{
  std::string kind;
  cplx k{1.0, 0.0};
  std::vector<Vec2> polygon;
  DirichletSpec dirichlet;
  MeshSpec mesh;
  std::vector<DiscBump> rho, f;
  double A = 0.0;  // <= 0: default truncation
  double h = 0.0;  // <= 0: wavelength / 20
  int stencil = 10;
  QuadratureSpec quad;
  std::optional<bool> tails;
  int threads = 1;
  std::optional<FieldGrid> field;
  int farfield = 0;
  bool traces = false;
  bool residuals = true;
  std::vector<std::string> cases;
  std::vector<ConvergenceSpec> convergence;
  std::filesystem::path base;  // directory of the config file, for relative paths
};

// ---------------------------------------------------------------------------
// Parsing. Every object is checked against its list of allowed keys.

namespace detail
{

inline void allow(const json &j, const std::string &where, std::initializer_list<const char *> keys)
{
  if (!j.is_object())
  {
    throw ConfigError(where, "expected an object");
  }
  const std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto &[key, v] : j.items())
  {
    if (!ok.count(key))
    {
      throw ConfigError(where.empty() ? key : where + "." + key, "unknown key");
    }
  }
}

inline double number(const json &j, const std::string &where)
{
  if (!j.is_number())
  {
    throw ConfigError(where, "expected a number");
  }
  const double v = j.get<double>();
  if (!std::isfinite(v))
  {
    throw ConfigError(where, "expected a finite number");
  }
  return v;
}

inline int integer(const json &j, const std::string &where)
{
  if (!j.is_number_integer())
  {
    throw ConfigError(where, "expected an integer");
  }
  return j.get<int>();
}

// A complex number is a plain number or {"re": .., "im": ..}.
inline cplx complex(const json &j, const std::string &where)
{
  if (j.is_number())
  {
    return number(j, where);
  }
  allow(j, where, {"re", "im"});
  return {j.contains("re") ? number(j["re"], where + ".re") : 0.0,
          j.contains("im") ? number(j["im"], where + ".im") : 0.0};
}

inline Vec2 point(const json &j, const std::string &where)
{
  if (!j.is_array() || j.size() != 2)
  {
    throw ConfigError(where, "expected [x, y]");
  }
  return {number(j[0], where + "[0]"), number(j[1], where + "[1]")};
}

inline std::vector<DiscBump> bumps(const json &j, const std::string &where)
{
  if (!j.is_array())
  {
    throw ConfigError(where, "expected an array of bumps");
  }
  std::vector<DiscBump> out;
  for (std::size_t i = 0; i < j.size(); ++i)
  {
    const std::string w = where + "[" + std::to_string(i) + "]";
    allow(j[i], w, {"center", "radius", "value"});
    for (const char *key : {"center", "radius", "value"})
    {
      if (!j[i].contains(key))
      {
        throw ConfigError(w + "." + key, "missing");
      }
    }
    DiscBump b{point(j[i]["center"], w + ".center"), number(j[i]["radius"], w + ".radius"),
               complex(j[i]["value"], w + ".value")};
    if (!(b.radius > 0.0))
    {
      throw ConfigError(w + ".radius", "must be positive");
    }
    out.push_back(b);
  }
  return out;
}

inline const json &require(const json &j, const char *key, const std::string &where)
{
  if (!j.contains(key))
  {
    throw ConfigError(where.empty() ? key : where + "." + key, "missing");
  }
  return j[key];
}

}  // namespace detail

inline RunConfig parse_config(const json &j, const std::filesystem::path &base = {})
{
  using namespace detail;
  allow(j, "", {"version", "kind", "k", "polygon", "dirichlet", "mesh", "rho", "f",
                "discretization", "threads", "outputs", "verify"});
  RunConfig c;
  c.base = base;
  const auto &ver = require(j, "version", "");
  if (!ver.is_number_integer() || ver.get<int>() != config_version)
  {
    throw ConfigError("version", "unsupported config version (expected 1)");
  }
  const auto &kind = require(j, "kind", "");
  if (!kind.is_string())
  {
    throw ConfigError("kind", "expected a string");
  }
  c.kind = kind.get<std::string>();
  if (c.kind != "polygon-dirichlet" && c.kind != "general-coupled" && c.kind != "verify-battery")
  {
    throw ConfigError("kind", "expected polygon-dirichlet, general-coupled or verify-battery");
  }

  if (j.contains("threads"))
  {
    c.threads = integer(j["threads"], "threads");
    if (c.threads < 1)
    {
      throw ConfigError("threads", "must be at least 1");
    }
  }

  if (c.kind == "verify-battery")
  {
    for (const char *key : {"k", "polygon", "dirichlet", "mesh", "rho", "f", "discretization",
                            "outputs"})
    {
      if (j.contains(key))
      {
        throw ConfigError(key, "not used by verify-battery");
      }
    }
    if (j.contains("verify"))
    {
      const auto &v = j["verify"];
      allow(v, "verify", {"cases", "convergence"});
      if (v.contains("cases"))
      {
        if (!v["cases"].is_array())
        {
          throw ConfigError("verify.cases", "expected an array of case names");
        }
        for (const auto &s : v["cases"])
        {
          if (!s.is_string())
          {
            throw ConfigError("verify.cases", "expected an array of case names");
          }
          const auto name = s.get<std::string>();
          const auto &reg = verify::registered_cases();
          if (std::none_of(reg.begin(), reg.end(), [&](const auto &p) { return p.first == name; }))
          {
            throw ConfigError("verify.cases", "unknown case '" + name + "'");
          }
          c.cases.push_back(name);
        }
      }
      if (v.contains("convergence"))
      {
        if (!v["convergence"].is_array())
        {
          throw ConfigError("verify.convergence", "expected an array");
        }
        for (std::size_t i = 0; i < v["convergence"].size(); ++i)
        {
          const auto &e = v["convergence"][i];
          const std::string w = "verify.convergence[" + std::to_string(i) + "]";
          allow(e, w, {"case", "ladder"});
          const auto &id = require(e, "case", w);
          const auto &ladder = require(e, "ladder", w);
          if (!id.is_string())
          {
            throw ConfigError(w + ".case", "expected a string");
          }
          ConvergenceSpec cs{id.get<std::string>(), {}};
          if (cs.id != "polygon-h" && cs.id != "polygon-A" && cs.id != "dissipative-A" &&
              cs.id != "bump-n")
          {
            throw ConfigError(w + ".case", "unknown convergence case '" + cs.id + "'");
          }
          if (!ladder.is_array() || ladder.size() < 3)
          {
            throw ConfigError(w + ".ladder", "expected at least 3 positive numbers");
          }
          for (std::size_t l = 0; l < ladder.size(); ++l)
          {
            const double x = number(ladder[l], w + ".ladder");
            if (!(x > 0.0))
            {
              throw ConfigError(w + ".ladder", "expected at least 3 positive numbers");
            }
            cs.ladder.push_back(x);
          }
          c.convergence.push_back(cs);
        }
      }
    }
    if (c.cases.empty() && c.convergence.empty())
    {
      for (const auto &p : verify::registered_cases())
      {
        c.cases.push_back(p.first);
      }
    }
    return c;
  }

  if (j.contains("verify"))
  {
    throw ConfigError("verify", "only used by verify-battery");
  }
  c.k = complex(require(j, "k", ""), "k");
  if (!(c.k.real() > 0.0))
  {
    throw ConfigError("k.re", "must be positive");
  }
  if (c.k.imag() < 0.0)
  {
    throw ConfigError("k.im", "must be non-negative");
  }

  const auto &poly = require(j, "polygon", "");
  if (!poly.is_array() || poly.size() < 3)
  {
    throw ConfigError("polygon", "expected at least 3 vertices [x, y]");
  }
  for (std::size_t i = 0; i < poly.size(); ++i)
  {
    c.polygon.push_back(point(poly[i], "polygon[" + std::to_string(i) + "]"));
  }

  if (j.contains("discretization"))
  {
    const auto &d = j["discretization"];
    allow(d, "discretization",
          {"A", "h", "stencil", "order", "tolerance", "max_depth", "near_factor", "tails"});
    if (d.contains("A"))
    {
      c.A = number(d["A"], "discretization.A");
    }
    if (d.contains("h"))
    {
      c.h = number(d["h"], "discretization.h");
    }
    if (d.contains("stencil"))
    {
      c.stencil = integer(d["stencil"], "discretization.stencil");
    }
    if (d.contains("order"))
    {
      c.quad.order = integer(d["order"], "discretization.order");
    }
    if (d.contains("tolerance"))
    {
      c.quad.tolerance = number(d["tolerance"], "discretization.tolerance");
    }
    if (d.contains("max_depth"))
    {
      c.quad.max_depth = integer(d["max_depth"], "discretization.max_depth");
    }
    if (d.contains("near_factor"))
    {
      c.quad.near_factor = number(d["near_factor"], "discretization.near_factor");
    }
    if (d.contains("tails"))
    {
      if (!d["tails"].is_boolean())
      {
        throw ConfigError("discretization.tails", "expected true or false");
      }
      c.tails = d["tails"].get<bool>();
    }
    try
    {
      check_quadrature(c.quad);
    }
    catch (const DomainError &e)
    {
      throw ConfigError("discretization", e.what());
    }
  }

  if (c.kind == "polygon-dirichlet")
  {
    for (const char *key : {"mesh", "rho", "f"})
    {
      if (j.contains(key))
      {
        throw ConfigError(key, "not used by polygon-dirichlet");
      }
    }
    const auto &d = require(j, "dirichlet", "");
    allow(d, "dirichlet", {"type", "z", "values", "file"});
    const auto &type = require(d, "type", "dirichlet");
    const std::string t = type.is_string() ? type.get<std::string>() : "";
    if (t == "point-source")
    {
      c.dirichlet.type = DirichletSpec::Type::point_source;
      c.dirichlet.z = point(require(d, "z", "dirichlet"), "dirichlet.z");
    }
    else if (t == "edge-constant")
    {
      c.dirichlet.type = DirichletSpec::Type::edge_constant;
      const auto &v = require(d, "values", "dirichlet");
      if (!v.is_array() || v.size() != poly.size())
      {
        throw ConfigError("dirichlet.values", "expected one value per edge");
      }
      for (std::size_t i = 0; i < v.size(); ++i)
      {
        c.dirichlet.values.push_back(complex(v[i], "dirichlet.values[" + std::to_string(i) + "]"));
      }
    }
    else if (t == "sampled")
    {
      c.dirichlet.type = DirichletSpec::Type::sampled;
      const auto &fj = require(d, "file", "dirichlet");
      if (!fj.is_string())
      {
        throw ConfigError("dirichlet.file", "expected a path");
      }
      c.dirichlet.file = fj.get<std::string>();
    }
    else
    {
      throw ConfigError("dirichlet.type", "expected point-source, edge-constant or sampled");
    }
  }
  else
  {
    if (j.contains("dirichlet"))
    {
      throw ConfigError("dirichlet", "not used by general-coupled");
    }
    const auto &m = require(j, "mesh", "");
    allow(m, "mesh", {"type", "outer", "inner", "cells", "center", "file"});
    const auto &type = require(m, "type", "mesh");
    const std::string t = type.is_string() ? type.get<std::string>() : "";
    if (t == "ring")
    {
      c.mesh.type = MeshSpec::Type::ring;
      c.mesh.outer = number(require(m, "outer", "mesh"), "mesh.outer");
      if (m.contains("inner"))
      {
        c.mesh.inner = number(m["inner"], "mesh.inner");
      }
      c.mesh.cells = integer(require(m, "cells", "mesh"), "mesh.cells");
      if (m.contains("center"))
      {
        c.mesh.center = point(m["center"], "mesh.center");
      }
    }
    else if (t == "file")
    {
      c.mesh.type = MeshSpec::Type::file;
      const auto &fj = require(m, "file", "mesh");
      if (!fj.is_string())
      {
        throw ConfigError("mesh.file", "expected a path");
      }
      c.mesh.file = fj.get<std::string>();
    }
    else
    {
      throw ConfigError("mesh.type", "expected ring or file");
    }
    if (j.contains("rho"))
    {
      c.rho = bumps(j["rho"], "rho");
      for (std::size_t i = 0; i < c.rho.size(); ++i)
      {
        if (c.rho[i].value.imag() < 0.0)
        {
          throw ConfigError("rho[" + std::to_string(i) + "].value.im", "must be non-negative");
        }
      }
    }
    if (j.contains("f"))
    {
      c.f = bumps(j["f"], "f");
    }
  }

  if (j.contains("outputs"))
  {
    const auto &o = j["outputs"];
    allow(o, "outputs", {"field", "farfield", "traces", "residuals"});
    if (o.contains("field"))
    {
      const auto &g = o["field"];
      allow(g, "outputs.field", {"xmin", "xmax", "ymin", "ymax", "nx", "ny"});
      FieldGrid fg;
      fg.xmin = number(require(g, "xmin", "outputs.field"), "outputs.field.xmin");
      fg.xmax = number(require(g, "xmax", "outputs.field"), "outputs.field.xmax");
      fg.ymin = number(require(g, "ymin", "outputs.field"), "outputs.field.ymin");
      fg.ymax = number(require(g, "ymax", "outputs.field"), "outputs.field.ymax");
      fg.nx = integer(require(g, "nx", "outputs.field"), "outputs.field.nx");
      fg.ny = integer(require(g, "ny", "outputs.field"), "outputs.field.ny");
      if (fg.nx < 1 || fg.ny < 1)
      {
        throw ConfigError("outputs.field", "nx and ny must be at least 1");
      }
      c.field = fg;
    }
    if (o.contains("farfield"))
    {
      c.farfield = integer(o["farfield"], "outputs.farfield");
      if (c.farfield < 0)
      {
        throw ConfigError("outputs.farfield", "must be non-negative");
      }
      if (c.farfield > 0 && c.k.imag() != 0.0)
      {
        throw ConfigError("outputs.farfield", "far-field pattern needs a real wavenumber");
      }
    }
    for (const char *key : {"traces", "residuals"})
    {
      if (o.contains(key))
      {
        if (!o[key].is_boolean())
        {
          throw ConfigError(std::string("outputs.") + key, "expected true or false");
        }
        (key[0] == 't' ? c.traces : c.residuals) = o[key].get<bool>();
      }
    }
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path &path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw IoError("cannot open config file " + path.string());
  }
  json j;
  try
  {
    j = json::parse(in);
  }
  catch (const json::parse_error &e)
  {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// CSV files.

inline std::ofstream open_out(const std::filesystem::path &p)
{
  std::ofstream out(p);
  if (!out)
  {
    throw IoError("cannot write " + p.string());
  }
  out << std::setprecision(17);
  return out;
}

// Trace file: one '#' header line with the metadata, then "t,re,im" rows at
// the grid nodes.
inline void write_trace_csv(std::ostream &out, const RadiatingTrace &tr)
{
  out << std::setprecision(17);
  out << "# j=" << tr.j << " a=" << tr.a << " A=" << tr.grid.A << " h=" << tr.grid.h
      << " cells=" << tr.grid.cells << " stencil=" << tr.grid.stencil << " k_re=" << tr.k.real()
      << " k_im=" << tr.k.imag() << " tails=" << (tr.tails ? 1 : 0)
      << " c_plus_re=" << tr.c_plus.real() << " c_plus_im=" << tr.c_plus.imag()
      << " c_minus_re=" << tr.c_minus.real() << " c_minus_im=" << tr.c_minus.imag() << "\n";
  out << "t,re,im\n";
  for (int m = 0; m < tr.grid.nodes(); ++m)
  {
    out << tr.grid.node(m) << "," << tr.values[m].real() << "," << tr.values[m].imag() << "\n";
  }
}

inline RadiatingTrace read_trace_csv(std::istream &in)
{
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0)
  {
    throw IoError("trace file: missing '#' header line");
  }
  std::map<std::string, double> meta;
  std::istringstream hs(line.substr(2));
  std::string item;
  while (hs >> item)
  {
    const auto eq = item.find('=');
    if (eq == std::string::npos)
    {
      throw IoError("trace file: malformed header entry '" + item + "'");
    }
    try
    {
      meta[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
    }
    catch (const std::exception &)
    {
      throw IoError("trace file: malformed header entry '" + item + "'");
    }
  }
  for (const char *key : {"j", "a", "A", "h", "cells", "stencil", "k_re", "k_im", "tails",
                          "c_plus_re", "c_plus_im", "c_minus_re", "c_minus_im"})
  {
    if (!meta.count(key))
    {
      throw IoError(std::string("trace file: header lacks '") + key + "'");
    }
  }
  RadiatingTrace tr;
  tr.j = static_cast<int>(meta["j"]);
  tr.a = meta["a"];
  tr.k = {meta["k_re"], meta["k_im"]};
  tr.tails = meta["tails"] != 0.0;
  tr.c_plus = {meta["c_plus_re"], meta["c_plus_im"]};
  tr.c_minus = {meta["c_minus_re"], meta["c_minus_im"]};
  tr.grid.A = meta["A"];
  tr.grid.h = meta["h"];
  tr.grid.cells = static_cast<int>(meta["cells"]);
  tr.grid.stencil = static_cast<int>(meta["stencil"]);
  if (tr.grid.cells < 1 || tr.grid.stencil < 2 || tr.grid.stencil > tr.grid.nodes())
  {
    throw IoError("trace file: inconsistent grid header");
  }
  if (!std::getline(in, line) || line != "t,re,im")
  {
    throw IoError("trace file: expected column header 't,re,im'");
  }
  while (std::getline(in, line))
  {
    if (line.empty())
    {
      continue;
    }
    double t, re, im;
    char c1, c2;
    std::istringstream ls(line);
    if (!(ls >> t >> c1 >> re >> c2 >> im) || c1 != ',' || c2 != ',')
    {
      throw IoError("trace file: malformed row '" + line + "'");
    }
    tr.values.emplace_back(re, im);
  }
  if (static_cast<int>(tr.values.size()) != tr.grid.nodes())
  {
    throw IoError("trace file: expected " + std::to_string(tr.grid.nodes()) + " rows, got " +
                  std::to_string(tr.values.size()));
  }
  return tr;
}

// Sampled Dirichlet data: rows "edge,s,re,im" with edge = 1..N (edges
// numbered after counter-clockwise reordering, edge j from vertex j to j+1)
// and s in [0, 1] the fraction along the edge. Piecewise linear in s.
struct SampledData
{
  std::vector<std::vector<std::pair<double, cplx>>> edges;

  cplx operator()(int j, double s) const
  {
    const auto &e = edges[j];
    if (s <= e.front().first)
    {
      return e.front().second;
    }
    if (s >= e.back().first)
    {
      return e.back().second;
    }
    const auto it = std::upper_bound(e.begin(), e.end(), s,
                                     [](double v, const auto &p) { return v < p.first; });
    const auto &[s1, v1] = *it;
    const auto &[s0, v0] = *(it - 1);
    const double w = (s - s0) / (s1 - s0);
    return (1.0 - w) * v0 + w * v1;
  }
};

inline SampledData read_sampled_data(std::istream &in, int edges)
{
  SampledData d;
  d.edges.resize(edges);
  std::string line;
  int row = 0;
  while (std::getline(in, line))
  {
    ++row;
    if (line.empty() || line[0] == '#' || (row == 1 && line.rfind("edge", 0) == 0))
    {
      continue;
    }
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    int j;
    double s, re, im;
    if (!(ls >> j >> s >> re >> im))
    {
      throw IoError("sampled data: malformed row " + std::to_string(row));
    }
    if (j < 1 || j > edges || s < 0.0 || s > 1.0)
    {
      throw IoError("sampled data: row " + std::to_string(row) + " out of range");
    }
    d.edges[j - 1].emplace_back(s, cplx(re, im));
  }
  for (int j = 0; j < edges; ++j)
  {
    auto &e = d.edges[j];
    if (e.size() < 2)
    {
      throw IoError("sampled data: edge " + std::to_string(j + 1) + " needs at least 2 samples");
    }
    std::sort(e.begin(), e.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
  }
  return d;
}

// ---------------------------------------------------------------------------
// Runs.

struct RunOptions
{
  std::filesystem::path out = ".";
  std::optional<int> threads;
};

namespace detail
{

inline std::filesystem::path resolve(const RunConfig &c, const std::string &p)
{
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : c.base / path;
}

inline HsmDiscretization discretization(const RunConfig &c, const PolygonFrames &frames, int threads)
{
  auto disc = make_discretization(frames, c.k, c.A, c.h, c.stencil);
  disc.quad = c.quad;
  disc.threads = threads;
  if (c.tails)
  {
    if (*c.tails && c.k.imag() != 0.0)
    {
      throw ConfigError("discretization.tails", "tail unknowns need a real wavenumber");
    }
    disc.tails = *c.tails;
  }
  return disc;
}

inline DirichletData dirichlet(const RunConfig &c, const PolygonFrames &frames)
{
  const KernelParams kp(c.k);
  switch (c.dirichlet.type)
  {
    case DirichletSpec::Type::point_source:
    {
      const Vec2 z = c.dirichlet.z;
      for (int j = 0; j < frames.size(); ++j)
      {
        if (!(to_local(frames, j, z).x1 < frames.a[j]))
        {
          throw ConfigError("dirichlet.z", "the source must lie inside the polygon");
        }
      }
      return verify::point_source_data(kp.k, z);
    }
    case DirichletSpec::Type::edge_constant:
    {
      auto v = c.dirichlet.values;
      if (v.size() != std::size_t(frames.size()))
      {
        throw ConfigError("dirichlet.values", "expected one value per edge");
      }
      return [v](int j, Vec2) { return v[j]; };
    }
    case DirichletSpec::Type::sampled:
    {
      const auto path = resolve(c, c.dirichlet.file);
      std::ifstream in(path);
      if (!in)
      {
        throw IoError("cannot open sampled data file " + path.string());
      }
      auto data = std::make_shared<SampledData>(read_sampled_data(in, frames.size()));
      return [data, frames](int j, Vec2 p)
      {
        const Vec2 a = frames.vertices[j], b = frames.corner(j);
        const Vec2 e = b - a;
        return (*data)(j, std::clamp(dot(p - a, e) / dot(e, e), 0.0, 1.0));
      };
    }
  }
  return {};
}

inline FemMesh mesh(const RunConfig &c, const PolygonFrames &frames)
{
  FemMesh m;
  if (c.mesh.type == MeshSpec::Type::ring)
  {
    try
    {
      m = build_square_ring_mesh(c.mesh.outer, c.mesh.inner, c.mesh.cells);
    }
    catch (const Error &e)
    {
      throw ConfigError("mesh", e.what());
    }
    for (auto &p : m.nodes)
    {
      p = p + c.mesh.center;
    }
    assign_outer_parts(m, frames);
  }
  else
  {
    const auto path = resolve(c, c.mesh.file);
    std::ifstream in(path);
    if (!in)
    {
      throw IoError("cannot open mesh file " + path.string());
    }
    m = read_mesh(in);
  }
  apply_bumps(m, c.rho, c.f);
  return m;
}

inline json residual_json(const ResidualReport &r)
{
  return {{"rcond", r.rcond},     {"linear_residual", r.linear_residual},
          {"seam", r.seam},       {"compatibility", r.compatibility},
          {"matching", r.matching}, {"robin", r.robin}};
}

// Evaluates `eval` on the field grid; points where the field is undefined
// (inside the polygon or the obstacle) are written as nan.
template <class Eval>
inline std::vector<std::pair<Vec2, cplx>> sample_field(const FieldGrid &g, int threads, Eval &&eval)
{
  const int n = g.nx * g.ny;
  std::vector<std::pair<Vec2, cplx>> out(n);
  parallel_for(n, threads,
               [&](std::size_t i)
               {
                 const int ix = int(i) % g.nx, iy = int(i) / g.nx;
                 const Vec2 p{g.nx == 1 ? g.xmin : g.xmin + (g.xmax - g.xmin) * ix / (g.nx - 1),
                              g.ny == 1 ? g.ymin : g.ymin + (g.ymax - g.ymin) * iy / (g.ny - 1)};
                 cplx v(std::numeric_limits<double>::quiet_NaN(),
                        std::numeric_limits<double>::quiet_NaN());
                 try
                 {
                   v = eval(p);
                 }
                 catch (const DomainError &)
                 {
                 }
                 catch (const GeometryError &)
                 {
                 }
                 out[i] = {p, v};
               });
  return out;
}

inline void write_field(const std::filesystem::path &p, const std::vector<std::pair<Vec2, cplx>> &f)
{
  auto out = open_out(p);
  out << "x,y,re,im\n";
  for (const auto &[x, v] : f)
  {
    out << x.x << "," << x.y << "," << v.real() << "," << v.imag() << "\n";
  }
}

inline std::vector<std::pair<double, cplx>> sample_far_field(const HsmSolutionPolygon &sol, int n)
{
  std::vector<std::pair<double, cplx>> out(n);
  parallel_for(n, sol.disc.threads,
               [&](std::size_t i)
               {
                 const double th = 2.0 * pi * double(i) / n;
                 out[i] = {th, far_field(sol, {std::cos(th), std::sin(th)})};
               });
  return out;
}

inline void write_far_field(const std::filesystem::path &p,
                            const std::vector<std::pair<double, cplx>> &f)
{
  auto out = open_out(p);
  out << "theta,re,im,abs\n";
  for (const auto &[th, v] : f)
  {
    out << th << "," << v.real() << "," << v.imag() << "," << std::abs(v) << "\n";
  }
}

inline void write_traces(const std::filesystem::path &dir, const HsmSolutionPolygon &sol)
{
  for (const auto &tr : sol.traces)
  {
    auto out = open_out(dir / ("trace_" + std::to_string(tr.j + 1) + ".csv"));
    write_trace_csv(out, tr);
  }
}

inline json discretization_json(const HsmDiscretization &d)
{
  return {{"A", d.grid.A},          {"h", d.grid.h},
          {"cells", d.grid.cells},  {"stencil", d.grid.stencil},
          {"tails", d.tails},       {"threads", d.threads},
          {"order", d.quad.order},  {"tolerance", d.quad.tolerance}};
}

inline double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

inline json run_polygon(const RunConfig &c, const RunOptions &o, int threads)
{
  const auto t0 = std::chrono::steady_clock::now();
  const auto frames = build_polygon(c.polygon);
  const KernelParams kp(c.k);
  const auto disc = detail::discretization(c, frames, threads);
  const auto g = detail::dirichlet(c, frames);
  const auto sol = solve_polygon(kp, frames, g, disc);
  json rep{{"kind", c.kind}, {"discretization", detail::discretization_json(disc)}};
  rep["solve_seconds"] = detail::seconds_since(t0);
  if (c.residuals)
  {
    rep["residuals"] = detail::residual_json(sol.report);
  }
  json tails = json::array();
  for (const auto &tr : sol.traces)
  {
    tails.push_back({{"edge", tr.j + 1},
                     {"c_plus", {tr.c_plus.real(), tr.c_plus.imag()}},
                     {"c_minus", {tr.c_minus.real(), tr.c_minus.imag()}}});
  }
  rep["tails"] = tails;

  const bool manufactured = c.dirichlet.type == DirichletSpec::Type::point_source;
  json check;
  if (manufactured)
  {
    check["trace_rel_l2_max"] = verify::trace_error(sol, c.dirichlet.z);
  }
  if (c.field)
  {
    const auto f = detail::sample_field(*c.field, threads,
                                        [&](Vec2 p) { return reconstruct(sol, p); });
    detail::write_field(o.out / "field.csv", f);
    if (manufactured)
    {
      double e = 0.0;
      for (const auto &[p, v] : f)
      {
        if (!std::isnan(v.real()))
        {
          const cplx ex = verify::phi(kp.k, p, c.dirichlet.z);
          e = std::max(e, std::abs(v - ex) / std::abs(ex));
        }
      }
      check["field_rel_error_max"] = e;
    }
  }
  if (c.farfield > 0)
  {
    const auto ff = detail::sample_far_field(sol, c.farfield);
    detail::write_far_field(o.out / "farfield.csv", ff);
    if (manufactured)
    {
      double e = 0.0;
      for (const auto &[th, v] : ff)
      {
        const cplx ex = verify::point_source_far_field(kp.k, frames.centroid, c.dirichlet.z,
                                                       {std::cos(th), std::sin(th)});
        e = std::max(e, std::abs(v - ex) / std::abs(ex));
      }
      check["farfield_rel_error_max"] = e;
    }
  }
  if (c.traces)
  {
    detail::write_traces(o.out, sol);
  }
  if (manufactured)
  {
    rep["point_source_check"] = check;
  }
  rep["seconds"] = detail::seconds_since(t0);
  return rep;
}

inline json run_coupled(const RunConfig &c, const RunOptions &o, int threads)
{
  const auto t0 = std::chrono::steady_clock::now();
  const auto frames = build_polygon(c.polygon);
  const KernelParams kp(c.k);
  const auto disc = detail::discretization(c, frames, threads);
  const auto mesh = detail::mesh(c, frames);
  const auto sol = solve_coupled(kp, frames, mesh, disc);
  json rep{{"kind", c.kind},
           {"discretization", detail::discretization_json(sol.exterior.disc)},
           {"mesh", {{"nodes", mesh.nodes.size()}, {"triangles", mesh.triangles.size()}}}};
  rep["solve_seconds"] = detail::seconds_since(t0);
  if (c.residuals)
  {
    rep["residuals"] = detail::residual_json(sol.exterior.report);
  }
  {
    auto out = open_out(o.out / "ub.csv");
    out << "x,y,re,im\n";
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
    {
      out << mesh.nodes[i].x << "," << mesh.nodes[i].y << "," << sol.u_b(i).real() << ","
          << sol.u_b(i).imag() << "\n";
    }
  }
  if (c.field)
  {
    detail::write_field(o.out / "field.csv",
                        detail::sample_field(*c.field, threads,
                                             [&](Vec2 p) { return eval_coupled(sol, p); }));
  }
  if (c.farfield > 0)
  {
    detail::write_far_field(o.out / "farfield.csv", detail::sample_far_field(sol.exterior, c.farfield));
  }
  if (c.traces)
  {
    detail::write_traces(o.out, sol.exterior);
  }
  rep["seconds"] = detail::seconds_since(t0);
  return rep;
}

inline json run_verify(const RunConfig &c, int threads)
{
  const auto t0 = std::chrono::steady_clock::now();
  json rep{{"kind", c.kind}, {"cases", json::array()}, {"convergence", json::array()}};
  bool pass = true;
  for (const auto &id : c.cases)
  {
    const auto r = verify::run_case(id, {threads});
    pass = pass && r.pass();
    rep["cases"].push_back(verify::to_json(r));
  }
  for (const auto &cs : c.convergence)
  {
    rep["convergence"].push_back(verify::to_json(verify::run_convergence(cs.id, cs.ladder, threads)));
  }
  rep["pass"] = pass;
  rep["seconds"] = detail::seconds_since(t0);
  return rep;
}

inline json error_json(const std::string &kind, const std::string &message,
                       const std::string &field = {})
{
  json j{{"error", kind}, {"message", message}};
  if (!field.empty())
  {
    j["field"] = field;
  }
  return j;
}

// Runs `solve` (polygon-dirichlet, general-coupled) or `verify`
// (verify-battery); writes report.json and the requested files into o.out.
// On failure the error JSON is written to `err` and a nonzero status returned.
inline int run(const std::string &command, const std::filesystem::path &config,
               const RunOptions &o, std::ostream &err)
{
  try
  {
    const auto c = load_config(config);
    if (command == "verify" && c.kind != "verify-battery")
    {
      throw ConfigError("kind", "the verify command needs a verify-battery config");
    }
    if (command == "solve" && c.kind == "verify-battery")
    {
      throw ConfigError("kind", "use the verify command for verify-battery configs");
    }
    const int threads = o.threads.value_or(c.threads);
    if (threads < 1)
    {
      throw ConfigError("threads", "must be at least 1");
    }
    std::error_code ec;
    std::filesystem::create_directories(o.out, ec);
    if (ec)
    {
      throw IoError("cannot create output directory " + o.out.string() + ": " + ec.message());
    }
    json rep;
    if (c.kind == "verify-battery")
    {
      rep = run_verify(c, threads);
    }
    else if (c.kind == "polygon-dirichlet")
    {
      rep = run_polygon(c, o, threads);
    }
    else
    {
      rep = run_coupled(c, o, threads);
    }
    auto out = open_out(o.out / "report.json");
    out << rep.dump(2) << "\n";
    if (!out)
    {
      throw IoError("failed writing report.json");
    }
    return Exit::ok;
  }
  catch (const ConfigError &e)
  {
    const std::string msg = e.field().empty() ? e.what() : e.field() + ": " + e.what();
    err << error_json(e.kind(), msg, e.field()).dump() << "\n";
    return Exit::config_error;
  }
  catch (const IoError &e)
  {
    err << error_json(e.kind(), e.what()).dump() << "\n";
    return Exit::io_error;
  }
  catch (const Error &e)
  {
    err << error_json(e.kind(), e.what()).dump() << "\n";
    return Exit::solver_error;
  }
  catch (const std::filesystem::filesystem_error &e)
  {
    err << error_json("io", e.what()).dump() << "\n";
    return Exit::io_error;
  }
}

}  // namespace hsm::cli

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace hsm
{

// Base class for every failure raised by the library. `kind()` is a stable
// machine-readable tag used by the CLI error JSON.
class Error : public std::runtime_error
{
public:
  Error(std::string kind, const std::string &what)
    : std::runtime_error(what), kind_(std::move(kind))
  {
  }
  const std::string &kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

class DomainError : public Error
{
public:
  explicit DomainError(const std::string &what) : Error("domain", what) {}
};

class GeometryError : public Error
{
public:
  explicit GeometryError(const std::string &what) : Error("geometry", what) {}
};

class EstimationError : public Error
{
public:
  explicit EstimationError(const std::string &what) : Error("estimation", what) {}
};

class ConvergenceError : public Error
{
public:
  explicit ConvergenceError(const std::string &what) : Error("convergence", what) {}
};

class AssemblyError : public Error
{
public:
  explicit AssemblyError(const std::string &what) : Error("assembly", what) {}
};

class UnsupportedError : public Error
{
public:
  explicit UnsupportedError(const std::string &what) : Error("unsupported", what) {}
};

// Raised when the dense factorization is numerically singular. Carries the
// reciprocal condition estimate so callers can tell under-resolution apart
// from a genuine bug.
class SolveError : public Error
{
public:
  SolveError(const std::string &what, double condition)
    : Error("solve", what), condition_(condition)
  {
  }
  double condition() const noexcept { return condition_; }

private:
  double condition_;
};

class ConfigError : public Error
{
public:
  ConfigError(std::string field, const std::string &what)
    : Error("config", what), field_(std::move(field))
  {
  }
  const std::string &field() const noexcept { return field_; }

private:
  std::string field_;
};

class IoError : public Error
{
public:
  explicit IoError(const std::string &what) : Error("io", what) {}
};

}  // namespace hsm

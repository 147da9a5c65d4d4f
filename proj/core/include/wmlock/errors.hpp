#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace wmlock {

// Base of every error raised by the library. `kind()` is a stable short tag
// used in reports and CLI messages.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what);
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what) : Error("parameter", what) {}
};

class GeometryError : public Error {
 public:
  explicit GeometryError(const std::string& what) : Error("geometry", what) {}
};

class SingularInverseError : public Error {
 public:
  explicit SingularInverseError(const std::string& what)
      : Error("singular-inverse", what) {}
};

class DecodeError : public Error {
 public:
  explicit DecodeError(const std::string& what) : Error("decode", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class InfeasibleConstraintError : public Error {
 public:
  explicit InfeasibleConstraintError(const std::string& what)
      : Error("infeasible-constraint", what) {}
};

class AuthorizationError : public Error {
 public:
  explicit AuthorizationError(const std::string& what)
      : Error("authorization", what) {}
};

class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& what)
      : Error("undefined-metric", what) {}
};

// Failure talking to (or reported by) a score oracle. `request_id` is 0 when
// the failure is not tied to a single request.
class OracleIoError : public Error {
 public:
  OracleIoError(const std::string& what, std::uint64_t request_id = 0)
      : Error("oracle-io", what), request_id_(request_id) {}
  std::uint64_t request_id() const noexcept { return request_id_; }

 private:
  std::uint64_t request_id_;
};

}  // namespace wmlock

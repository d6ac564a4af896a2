#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fg {

enum class Errc {
  NonPositive,
  GeometryViolation,
  CapacityZero,
  UnknownKey,
  InvalidValue,
  InsufficientSamples,
  NoConvergence,
  DegenerateContactModel,
  UnstableSystem,
  CurveUnavailable,
  ModelMismatch,
  NotSubscribed,
  EmptyWindow,
  TooFewObservations,
  NoInstances,
  InsufficientRuns,
  AllUnstable,
  Io,
  Usage,
};

const char* errc_name(Errc code) noexcept;

/// Base exception for every recoverable failure in the library. `field()`
/// names the offending configuration key when there is one.
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string message, std::string field = {})
      : std::runtime_error(std::move(message)), code_(code), field_(std::move(field)) {}

  Errc code() const noexcept { return code_; }
  const std::string& field() const noexcept { return field_; }

 private:
  Errc code_;
  std::string field_;
};

/// Raised by the fixed-point solver; carries the last iterates so callers
/// can inspect the oscillation.
class NoConvergenceError : public Error {
 public:
  NoConvergenceError(std::string message, std::vector<double> trace)
      : Error(Errc::NoConvergence, std::move(message)), trace_(std::move(trace)) {}

  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

}  // namespace fg

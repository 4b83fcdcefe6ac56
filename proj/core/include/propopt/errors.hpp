#pragma once

#include <stdexcept>
#include <string>

namespace propopt {

/// Invalid user input: unknown names, bad shapes, out-of-range parameters,
/// malformed config files. Maps to CLI exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A matrix factorization failed (singular or otherwise unusable input).
class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The solver's system matrix is not positive definite, so the objective is
/// not a strictly convex quadratic (possible with precision-type or custom
/// similarities that carry negative weights).
class ConvexityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The linear system is singular: some unknowns are not determined by the
/// data (e.g. query points with no coupling path to any inducing point).
class RankError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A sampled design is unusable (rank-deficient regression, too few samples).
class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative solver hit its iteration cap before meeting its tolerance.
/// Carries the last measured convergence gap for diagnostics.
class IterationLimitError : public std::runtime_error {
 public:
  IterationLimitError(const std::string& message, double last_gap)
      : std::runtime_error(message), last_gap_(last_gap) {}
  double last_gap() const { return last_gap_; }

 private:
  double last_gap_;
};

/// Short machine-readable tag for an exception, used in sweep status columns.
inline std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config-error";
  if (dynamic_cast<const FactorizationError*>(&e)) return "factorization-error";
  if (dynamic_cast<const ConvexityError*>(&e)) return "convexity-error";
  if (dynamic_cast<const RankError*>(&e)) return "rank-error";
  if (dynamic_cast<const SamplingError*>(&e)) return "sampling-error";
  if (dynamic_cast<const IterationLimitError*>(&e)) return "iteration-limit";
  return "error";
}

}  // namespace propopt

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stablerelu {

// One entry per error family; the CLI maps each to its own exit status.
enum class ErrorKind {
  kInvalidConfig,
  kNotTwiceDifferentiable,
  kNoConvergence,
  kDiverged,
  kNotInterpolating,
  kMissingGroundTruth,
  kMissingSigma,
  kEmptyInterval,
  kNoInterval,
  kNotEquispaced,
  kInsufficientData,
  kMissingFile,
  kUnknownKey,
  kInvalidValue,
};

inline std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kNotTwiceDifferentiable: return "NotTwiceDifferentiable";
    case ErrorKind::kNoConvergence: return "NoConvergence";
    case ErrorKind::kDiverged: return "Diverged";
    case ErrorKind::kNotInterpolating: return "NotInterpolating";
    case ErrorKind::kMissingGroundTruth: return "MissingGroundTruth";
    case ErrorKind::kMissingSigma: return "MissingSigma";
    case ErrorKind::kEmptyInterval: return "EmptyInterval";
    case ErrorKind::kNoInterval: return "NoInterval";
    case ErrorKind::kNotEquispaced: return "NotEquispaced";
    case ErrorKind::kInsufficientData: return "InsufficientData";
    case ErrorKind::kMissingFile: return "MissingFile";
    case ErrorKind::kUnknownKey: return "UnknownKey";
    case ErrorKind::kInvalidValue: return "InvalidValue";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised when some pre-activation |w1_j x_i + b1_j| falls within diff_tol.
// datum is -1 when the check was made at a single point rather than a dataset.
class NotTwiceDifferentiable : public Error {
 public:
  NotTwiceDifferentiable(long datum, long neuron, double preactivation)
      : Error(ErrorKind::kNotTwiceDifferentiable,
              "pre-activation " + std::to_string(preactivation) +
                  " of neuron " + std::to_string(neuron) +
                  (datum >= 0 ? " at datum " + std::to_string(datum) : "")),
        datum_(datum),
        neuron_(neuron) {}

  long datum() const noexcept { return datum_; }
  long neuron() const noexcept { return neuron_; }

 private:
  long datum_;
  long neuron_;
};

class NoConvergence : public Error {
 public:
  NoConvergence(int iters, double rayleigh, double residual)
      : Error(ErrorKind::kNoConvergence,
              "power iteration stopped after " + std::to_string(iters) +
                  " iterations (rayleigh quotient " + std::to_string(rayleigh) +
                  ", residual " + std::to_string(residual) + ")"),
        rayleigh_(rayleigh),
        residual_(residual) {}

  double rayleigh() const noexcept { return rayleigh_; }
  double residual() const noexcept { return residual_; }

 private:
  double rayleigh_;
  double residual_;
};

}  // namespace stablerelu

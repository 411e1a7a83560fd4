#pragma once

#include <stdexcept>
#include <string>

namespace geoinpaint {

enum class ErrorCode {
  DimensionTooSmall,
  OutOfRange,
  InvalidArgument,
  LengthMismatch,
  ShapeMismatch,
  GridMismatch,
  SizeCapExceeded,
  NonpositiveConductivity,
  SingularSystem,
  NonConvergence,
  ConvergenceFailure,
  Divergence,
  InsufficientSamples,
  ConstantTruth,
  EmptyMeasurements,
  CountExceedsGrid,
  Config,
  Io,
};

/// Process exit code class a failure maps to in the CLI (2 config, 3 numerical).
enum class ErrorClass { Config, Numerical };

const char* to_string(ErrorCode code);
ErrorClass classify(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace geoinpaint

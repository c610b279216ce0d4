#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace latentiv {

enum class ErrorCode {
  InvalidConfig,
  DimensionMismatch,
  RankDeficient,
  NegativeScale,
  DegenerateTreatment,
  NonFiniteLoss,
  NonFiniteGradient,
  MissingColumn,
  RaggedPanel,
  UnparseableValue,
  AllMissingColumn,
  MissingCell,
  Io,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so that
// callers (the benchmark pool, the CLI, per-step series) can record it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace latentiv

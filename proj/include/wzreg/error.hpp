#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wzreg {

enum class ErrorCode {
  rejected_input,
  infeasible_distortion,
  unsupported_model,
  numerical_failure,
  insufficient_data,
  ill_conditioned,
  insufficient_samples,
  config_error,
  invariant_failure,
};

constexpr std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::rejected_input: return "rejected_input";
    case ErrorCode::infeasible_distortion: return "infeasible_distortion";
    case ErrorCode::unsupported_model: return "unsupported_model";
    case ErrorCode::numerical_failure: return "numerical_failure";
    case ErrorCode::insufficient_data: return "insufficient_data";
    case ErrorCode::ill_conditioned: return "ill_conditioned";
    case ErrorCode::insufficient_samples: return "insufficient_samples";
    case ErrorCode::config_error: return "config_error";
    case ErrorCode::invariant_failure: return "invariant_failure";
  }
  return "unknown";
}

/// Process exit status used by the CLI for an error of this kind.
constexpr int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::numerical_failure:
    case ErrorCode::ill_conditioned:
      return 3;
    case ErrorCode::invariant_failure:
      return 4;
    default:
      return 2;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace wzreg

#pragma once

#include <stdexcept>
#include <string>

namespace hydrotrack {

// Failure taxonomy for the whole pipeline. Codes map onto three CLI exit
// classes: config/parameter validation, bad or degenerate data, internal.
enum class errc {
  invalid_argument,
  invalid_band,
  invalid_window,
  invalid_config,
  zero_intensity,
  shape_mismatch,
  degenerate_reference,
  too_short,
  non_uniform_sampling,
  degenerate_data,
  version_mismatch,
  empty_test_set,
  too_few_groups,
  too_few_rows,
  model_too_large,
  corrupt_model,
  out_of_order_frame,
  parse_error,
  io_error,
};

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& message) {
  throw Error(code, message);
}

// Process exit class for a given failure. 1 = validation, 2 = data.
// Anything that is not an Error is an internal failure and exits 3.
inline int exit_class(errc code) noexcept {
  switch (code) {
    case errc::invalid_argument:
    case errc::invalid_band:
    case errc::invalid_window:
    case errc::invalid_config:
      return 1;
    default:
      return 2;
  }
}

inline constexpr int kExitInternal = 3;

}  // namespace hydrotrack

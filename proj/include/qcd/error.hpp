#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qcd {

enum class ErrorKind {
  invalid_argument,
  invalid_model,
  out_of_support,
  divergent_kl,
  window_too_large,
  unsupported_l,
  stream_ended,
  invalid_scenario,
  empty_range,
  no_root,
};

inline constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument: return "InvalidArgument";
    case ErrorKind::invalid_model: return "InvalidModel";
    case ErrorKind::out_of_support: return "OutOfSupport";
    case ErrorKind::divergent_kl: return "DivergentKl";
    case ErrorKind::window_too_large: return "WindowTooLarge";
    case ErrorKind::unsupported_l: return "UnsupportedL";
    case ErrorKind::stream_ended: return "StreamEnded";
    case ErrorKind::invalid_scenario: return "InvalidScenario";
    case ErrorKind::empty_range: return "EmptyRange";
    case ErrorKind::no_root: return "NoRoot";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` tells callers (the CLI in
/// particular) which contract was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace qcd

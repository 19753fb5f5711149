#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lsk {

enum class Errc {
  invalid_shape,
  invalid_range,
  shape_mismatch,
  invalid_layer,
  invalid_rank,
  invalid_argument,
  invalid_state,
  invalid_spec,
  io_error,
  unsupported_format,
  numeric_failure,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_shape: return "invalid-shape";
    case Errc::invalid_range: return "invalid-range";
    case Errc::shape_mismatch: return "shape-mismatch";
    case Errc::invalid_layer: return "invalid-layer";
    case Errc::invalid_rank: return "invalid-rank";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::invalid_state: return "invalid-state";
    case Errc::invalid_spec: return "invalid-spec";
    case Errc::io_error: return "io-error";
    case Errc::unsupported_format: return "unsupported-format";
    case Errc::numeric_failure: return "numeric-failure";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the Errc codes.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace lsk

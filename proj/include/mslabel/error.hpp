#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mslabel {

enum class ErrorCategory {
  invalid_input,
  invalid_spec,
  shape,
  degenerate_geometry,
  state,
  io,
  not_found,
  conflict,
  precondition,
};

std::string_view to_string(ErrorCategory category);

/// Library-wide exception. The category is stable and machine-readable; the
/// message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

inline void require(bool condition, ErrorCategory category, const std::string& message) {
  if (!condition) fail(category, message);
}

}  // namespace mslabel

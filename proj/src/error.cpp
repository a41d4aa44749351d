#include "mslabel/error.hpp"

namespace mslabel {

std::string_view to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::invalid_input: return "invalid_input";
    case ErrorCategory::invalid_spec: return "invalid_spec";
    case ErrorCategory::shape: return "shape";
    case ErrorCategory::degenerate_geometry: return "degenerate_geometry";
    case ErrorCategory::state: return "state";
    case ErrorCategory::io: return "io";
    case ErrorCategory::not_found: return "not_found";
    case ErrorCategory::conflict: return "conflict";
    case ErrorCategory::precondition: return "precondition";
  }
  return "unknown";
}

}  // namespace mslabel

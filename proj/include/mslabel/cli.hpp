#pragma once

#include <iosfwd>

namespace mslabel::cli {

/// Exit codes: 0 success, 1 I/O or validation failure, 2 usage error.
/// Failures print one line `error: <category>: <message>` to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace mslabel::cli

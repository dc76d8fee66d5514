#pragma once

#include <ostream>

namespace groundrag::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitBackend = 4;

// Entry point for the `groundrag` executable. Failures are reported on `err`
// as one JSON line {"error", "message"} and mapped to the exit codes above.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace groundrag::cli

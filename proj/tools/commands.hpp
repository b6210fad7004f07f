#pragma once

#include <stdexcept>

namespace vtseg::cli {

// Exit codes, documented in `vtseg --help`.
inline constexpr int kExitSuccess = 0;       // the run completed
inline constexpr int kExitRuntime = 1;       // I/O, data, or numerical failure
inline constexpr int kExitUsage = 2;         // unknown subcommand or malformed flags
inline constexpr int kExitConfig = 3;        // config parse/validation failure
inline constexpr int kExitMissingInput = 4;  // a named input does not exist

// Raised when a path the user named does not exist; mapped to
// kExitMissingInput.
struct MissingInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parses argv, runs the selected subcommand, and returns the process exit
// code. Never throws; failures are reported on stderr.
int run_cli(int argc, const char* const* argv);

}  // namespace vtseg::cli

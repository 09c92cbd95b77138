#pragma once

#include <ostream>
#include <stdexcept>
#include <string>

namespace stadv::cli {

enum ExitCode { kOk = 0, kUsage = 1, kRuntime = 2, kViolation = 3 };

// Bad flag values or combinations; mapped to kUsage.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
// Attack constraint or bound violated; mapped to kViolation.
struct InvariantViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parses argv, runs one subcommand and returns its exit code. Never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stadv::cli

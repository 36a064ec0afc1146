#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fspm_bridge::cli {

/// Exit codes of every subcommand.
enum ExitCode : int {
  kOk = 0,
  kDifference = 1,  // validation problems or a diff found
  kUsage = 2,
  kInputError = 3,  // I/O or parse error
  kRuntimeError = 4,
};

/// Runs the command line `args` (without the program name). Results go to
/// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fspm_bridge::cli

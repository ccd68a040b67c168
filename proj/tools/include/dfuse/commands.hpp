#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dfuse {

// Process exit codes, shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumerical = 4,
};

// Runs one `dfuse` invocation. args excludes the program name. Results go
// to out; logs and diagnostics to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dfuse

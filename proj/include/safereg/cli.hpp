#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace safereg {

/// Process exit codes of the `safereg` tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitRuntime = 1,
  kExitInput = 2,         // bad config, unreadable or malformed input
  kExitInconsistent = 3,  // validate-graph found a violated independence
  kExitNotIdentifiable = 4,
};

/// Runs the command line `args` (without the program name) in-process.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Maps an exception from the library to the exit code the tool reports for it.
int exit_code_for(const std::exception& ex);

}  // namespace safereg

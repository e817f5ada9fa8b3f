#pragma once

// Command-line entry point: synth, prepare, train, eval, diagnose.
//
// Exit codes:
//   0 success
//   1 any other failure (training divergence, I/O)
//   2 unknown flag or malformed command line
//   3 unknown config key
//   4 missing input path
//   5 config value violating an invariant (forbidden protocol/strategy, bad range)
//   6 malformed input data
// Failures print one line to stderr:
//   mccl: error kind=<kind> exit=<code> message="<text>"

#include <string>
#include <vector>

namespace mccl {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitUnknownKey = 3,
  kExitMissingPath = 4,
  kExitConfig = 5,
  kExitData = 6,
};

int run(int argc, char** argv);
int run(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace mccl

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gsa {

enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitConfig = 2,
  kExitDataFormat = 3,
  kExitDivergence = 4,
};

// Subcommands: gen, preprocess, train, gradcheck, sweep. `args` excludes the
// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gsa

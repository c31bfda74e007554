#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lidarsdf::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailure = 1,
  kUsage = 2,
  kInfeasibleStart = 3,
  kNoFeasibleStep = 4,
  kDiverged = 5,
};

/// Entry point shared by the executable and the tests; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lidarsdf::cli

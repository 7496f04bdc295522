#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mfrisk::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kInvalidParameters = 3,
  kIoFailure = 4,
  kNumericalFailure = 5,
};

/// Runs the command line `args` (without the program name). Results go to `out`,
/// a JSON error object to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mfrisk::cli

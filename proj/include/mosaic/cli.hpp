#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mosaic::cli {

enum ExitCode : int { kOk = 0, kDegenerate = 1, kInputError = 2, kInvariantViolation = 3 };

/// Runs the command line. Results go to `out` (or the --output file), and
/// diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mosaic::cli

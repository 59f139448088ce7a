#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ndnet {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitValidation = 2, kExitGate = 3 };

/// Runs the ndnet command line with `args` (program name excluded).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ndnet

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hrtfnorm {

// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitUsage = 2;

// Runs one `hrtfnorm` invocation. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hrtfnorm

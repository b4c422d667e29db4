#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dct::cli {

/// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Parses `args` (without the program name), runs the selected command and
/// returns its exit code. A `--config FILE` anywhere after the command name is
/// expanded in place before parsing, so explicit flags override file values.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, const char* const* argv);

}  // namespace dct::cli

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace stam {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 1;
inline constexpr int kExitViolations = 2;
inline constexpr int kExitNonConvergence = 3;

/// Runs the `stam` command line: check, fit, search, simulate, structure.
/// `args` excludes the program name. `--config file.json` reads option
/// values from an object per subcommand; flags on the command line win.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stam

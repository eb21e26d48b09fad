#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace prunecoder {

/// Exit codes of the command-line tool.
enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_data = 2, exit_numeric = 3 };

/// Runs one subcommand. `args` excludes the program name. Never throws; failures map to
/// exit codes and a message on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace prunecoder

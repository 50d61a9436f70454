#pragma once

#include <string>
#include <vector>

namespace psr {

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_data = 3, exit_internal = 4 };

/// Runs the command-line interface. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args);

int run_cli(int argc, char** argv);

} // namespace psr

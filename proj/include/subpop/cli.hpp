#pragma once
#include <string>
#include <vector>

namespace subpop {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 2,
    kExitNumeric = 3,
    kExitIo = 4,
    kExitBenchMismatch = 5,
};

/// Runs `subpop <subcommand> ...`; `args` excludes the program name.
int run_cli(const std::vector<std::string> &args);
int run_cli(int argc, const char *const *argv);

} // namespace subpop

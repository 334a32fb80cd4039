#pragma once

namespace taxoexpan {

// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

// Entry point of the `taxoexpan` tool; subcommands split, train, expand,
// eval, clean and gradcheck. Returns the process exit code.
int RunCli(int argc, char** argv);

}  // namespace taxoexpan

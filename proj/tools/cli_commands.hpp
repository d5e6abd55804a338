#pragma once

namespace bf::cli {

// Parses argv, runs the chosen subcommand and returns the process exit code:
// 0 success, 1 invalid input or usage, 2 runtime failure.
int run(int argc, char** argv);

} // namespace bf::cli

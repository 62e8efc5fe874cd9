#pragma once

#include <string>
#include <vector>

namespace topobench {

// Entry point behind main(): returns the process exit code. Errors print to
// stderr and yield a nonzero code; output files are written to a temporary
// sibling and renamed into place so interrupted runs never leave partial
// files at their final paths.
int run_cli(const std::vector<std::string>& args);

// Write-then-rename helper shared by the subcommands.
void atomic_write_file(const std::string& path, const std::string& contents);

}  // namespace topobench

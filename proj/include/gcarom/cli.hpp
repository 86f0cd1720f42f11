#pragma once

#include <ostream>
#include <string>

namespace gcarom {

/// Exit codes of the command-line driver.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

/// Build identifier recorded in run manifests.
std::string version_string();

/// Runs one `gcarom <subcommand> ...` invocation and returns its exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gcarom

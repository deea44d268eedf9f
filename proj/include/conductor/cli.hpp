#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace conductor {

/// Runs the command-line driver. `args` excludes the program name.
/// Subcommands: generate, render, serve, bench. Returns the exit status.
int cliRun(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace conductor

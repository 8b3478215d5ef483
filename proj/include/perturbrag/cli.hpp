#pragma once

#include "perturbrag/errors.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace perturbrag {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int usage = 1;
inline constexpr int data = 2;
inline constexpr int transport = 3;
} // namespace exit_code

int exit_code_for(ErrorKind kind);

/// Runs one command line. `args[0]` is the program name. Normal output goes
/// to `out`, diagnostics to `err`; the return value is the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace perturbrag

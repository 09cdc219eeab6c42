#pragma once

#include <string>
#include <vector>

namespace sdr {

// Entry point behind the binary: simulate / evaluate / spread subcommands.
// Returns 0 on success, 1 on pre-flight validation errors, 2 on runtime
// failures.
int cli_run(const std::vector<std::string>& args);

}  // namespace sdr

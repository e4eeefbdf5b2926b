#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gnnvault {

/// Runs one `gnnvault` command. `args` excludes the program name. Returns the
/// process exit code; failures print a one-line JSON error object to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Exit code used for each error category.
int exit_code_for(const std::exception& e);

}  // namespace gnnvault

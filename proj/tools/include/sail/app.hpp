#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sail::app {

/// Parses and runs one `sail` command. Returns the process exit status:
/// 0 success, 2 usage, 3 data, 4 numeric divergence, 5 service failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
/// Same, with `args` excluding the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sail::app

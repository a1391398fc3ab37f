#pragma once

#include <string>
#include <vector>

namespace synthpqa {

/// Entry point of the `synthpqa` tool. Returns the process exit status:
/// 0 on success, 1 when a stage fails, 2 on a usage error.
int run_cli(int argc, const char* const* argv);

/// Same, with the arguments after the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace synthpqa

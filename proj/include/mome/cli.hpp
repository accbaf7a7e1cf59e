#pragma once

#include <string>
#include <vector>

namespace mome {

// Routes argv to a subcommand. Returns the process exit code:
// 0 success, 1 domain/data error, 2 usage error.
int dispatch(int argc, const char* const* argv);

// Same dispatcher for an argument list without the program name.
int dispatch_args(const std::vector<std::string>& args);

}  // namespace mome

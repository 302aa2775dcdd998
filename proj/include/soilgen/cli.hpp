#pragma once

#include <string>
#include <vector>

namespace soilgen::cli {

/// Parses and runs one command line (arguments only, no program name).
/// Returns the process exit code: 0 success, 1 failure, 2 usage error.
int run(std::vector<std::string> args);

}  // namespace soilgen::cli

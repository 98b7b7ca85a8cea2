#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace emv {

/// Command-line entry point. Exit status: 0 success, 1 input or domain
/// error (message on `err`), 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace emv

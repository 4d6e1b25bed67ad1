#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace t23dqa::cli {

// Runs one command line (without the program name). Returns the exit code;
// errors are reported on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace t23dqa::cli

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace orthomom {

// Runs the command line given by args (program name excluded) and returns the
// process exit code: 0 success, 1 a failed check, 2 usage or input errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace orthomom

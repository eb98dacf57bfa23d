#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace geowarp::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericError = 3 };

// Runs one `geowarp` invocation; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace geowarp::cli

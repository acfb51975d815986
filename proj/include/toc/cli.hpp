#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace toc::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kConfig = 3,
  kData = 4,
};

// Runs one `toc` invocation. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace toc::cli

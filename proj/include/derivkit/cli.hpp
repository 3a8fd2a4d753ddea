#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace derivkit {

enum ExitCode : int {
  kExitOk = 0,
  kExitVerifyFailed = 1,
  kExitInput = 2,
  kExitDomain = 3,
  kExitExistence = 4,
  kExitFlatness = 5,
};

// Runs `derivkit analyze|frame|verify ...`; args excludes the program name.
// Reports go to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace derivkit

#pragma once

// Command-line front end: generate, train, evaluate, simulate, intervene.

#include <iosfwd>
#include <string>
#include <vector>

namespace scotch::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kParse = 2,
    kValidation = 3,
    kDivergence = 4,
    kMetric = 5,
};

// Environment variable naming the directory under which runs without --out
// write their outputs (default "scotch_runs").
inline constexpr const char* kOutputRootEnv = "SCOTCH_OUTPUT_ROOT";

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int main(int argc, char** argv);

}  // namespace scotch::cli

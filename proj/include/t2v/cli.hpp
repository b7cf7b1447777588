#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace t2v::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitTrainingFailure = 3;
inline constexpr int kExitEvaluationInput = 4;

// Runs the `t2v` command line (args exclude the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace t2v::cli

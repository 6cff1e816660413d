#ifndef JACKSON_CLI_HPP
#define JACKSON_CLI_HPP

#include <ostream>
#include <string>
#include <vector>

#include "jackson/error.hpp"

namespace jackson::cli {

inline constexpr const char* kToolVersion = "1.0.0";

// Process exit codes; see README for the table.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kIo = 2,
  kInvalidInput = 3,
  kUnstable = 4,
  kNumerical = 5,
  kPrecondition = 6,
  kInternal = 70,
};

int exit_code_for(ErrorCode code);

/// Runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace jackson::cli

#endif  // JACKSON_CLI_HPP

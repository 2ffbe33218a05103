#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "xloc/errors.hpp"

namespace xloc::cli {

// Exit codes of the xloc tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitMissingInput = 3;
inline constexpr int kExitSchema = 4;
inline constexpr int kExitVersion = 5;
inline constexpr int kExitCorrupt = 6;
inline constexpr int kExitTransport = 7;
inline constexpr int kExitOther = 8;

int exit_code(ErrorCategory category);

// Runs the tool on argv-style arguments (args[0] is the program name).
// Failures are reported on `err` as one JSON object
// {"error": {"category": ..., "message": ...}}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace xloc::cli

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fet::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kInternalError = 1;
inline constexpr int kUsageError = 2;
inline constexpr int kDataError = 3;
inline constexpr int kCapabilityError = 4;

// Runs one subcommand. `args` excludes the program name. Results go to
// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fet::cli

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace turnrl::cli {

// Exit statuses.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;  // work ran but failed (halted run, failing check)
inline constexpr int kUsage = 2;    // bad arguments, unreadable or invalid config

// Entry point for `turnrl <command> ...`. Data goes to `out` or to files,
// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace turnrl::cli

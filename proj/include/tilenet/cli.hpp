#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tilenet {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUserError = 1;
inline constexpr int kExitInternalError = 2;

// Entry point of the tilenet command line. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tilenet

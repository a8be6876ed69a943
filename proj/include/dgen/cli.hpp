#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dgen {

// Exit codes for typed failures.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitTransport = 4;
inline constexpr int kExitFixtureGap = 5;

// Entry point shared by the dgen binary and in-process tests. args[0] is the
// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dgen

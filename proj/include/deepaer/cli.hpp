#pragma once

#include <string>
#include <vector>

namespace deepaer::cli {

// Exit codes: 0 success, 1 usage error, 2 data error, 3 check failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitCheckFailed = 3;

int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args without the program name

}  // namespace deepaer::cli

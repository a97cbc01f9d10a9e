#pragma once

namespace deepaer {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace deepaer

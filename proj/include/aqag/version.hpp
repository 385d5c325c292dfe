#pragma once

namespace aqag {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace aqag

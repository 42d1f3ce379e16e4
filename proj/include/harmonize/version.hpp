#pragma once

namespace harmonize {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace harmonize

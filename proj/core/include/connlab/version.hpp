#pragma once

namespace connlab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace connlab

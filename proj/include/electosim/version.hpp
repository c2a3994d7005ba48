#pragma once

namespace electosim {

inline constexpr const char* kEngineVersion = "0.1.0";

}  // namespace electosim

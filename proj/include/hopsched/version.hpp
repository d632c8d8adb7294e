#pragma once

namespace hopsched {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hopsched

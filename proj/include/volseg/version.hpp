#pragma once

namespace volseg {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace volseg

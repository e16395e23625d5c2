#pragma once

namespace nextclip {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace nextclip

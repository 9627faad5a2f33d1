#pragma once

namespace rloc {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace rloc

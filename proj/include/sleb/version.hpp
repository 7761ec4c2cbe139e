#pragma once

namespace sleb {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace sleb

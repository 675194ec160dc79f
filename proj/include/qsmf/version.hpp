#pragma once

namespace qsmf {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace qsmf

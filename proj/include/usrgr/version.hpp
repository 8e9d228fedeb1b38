#pragma once

namespace usrgr {

inline constexpr const char* kVersion = "usrgr 0.1.0";

}  // namespace usrgr

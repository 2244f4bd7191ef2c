#pragma once

namespace tripletmetric {

inline constexpr const char* kVersion = "0.1.0";

} // namespace tripletmetric

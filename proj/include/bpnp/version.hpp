#pragma once

namespace bpnp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace bpnp

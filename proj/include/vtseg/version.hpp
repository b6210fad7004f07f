#pragma once

namespace vtseg {

// Recorded in provenance manifests and printed by `vtseg --version`; keep in
// sync with the CMake project version.
inline constexpr const char* kToolName = "vtseg";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace vtseg

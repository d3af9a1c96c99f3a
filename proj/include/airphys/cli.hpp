#pragma once

#include <string>
#include <vector>

namespace airphys::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Entry point behind the airphys binary; args excludes argv[0].
/// Exit codes: 0 ok, 1 configuration error, 2 data/artifact error,
/// 3 numerical divergence.
int run(const std::vector<std::string>& args);

}  // namespace airphys::cli

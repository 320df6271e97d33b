#pragma once

#include <string>

namespace openviewer {

inline constexpr const char* kVersion = "1.0.0";
// Bumped whenever the config or checkpoint JSON layout changes.
inline constexpr int kSchemaVersion = 1;

// "openviewer <semver> (schema <n>)"
std::string version_info();

}  // namespace openviewer

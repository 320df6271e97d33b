#include "openviewer/version.hpp"

namespace openviewer {

std::string version_info() {
  return std::string("openviewer ") + kVersion + " (schema " + std::to_string(kSchemaVersion) + ")";
}

}  // namespace openviewer

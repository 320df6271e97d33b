#include "openviewer/runtime.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <string>

namespace openviewer {

namespace {
std::atomic<bool> g_quiet{false};
}

void set_quiet(bool q) { g_quiet = q; }
bool quiet() { return g_quiet; }

void warn(std::string_view message) {
  if (!g_quiet) std::cerr << "warning: " << message << '\n';
}

void info(std::string_view message) {
  if (!g_quiet) std::cerr << message << '\n';
}

unsigned thread_cap() {
  const char* env = std::getenv("OPENVIEWER_THREADS");
  if (env == nullptr) return 1;
  try {
    const long v = std::stol(env);
    return v < 1 ? 1u : static_cast<unsigned>(v);
  } catch (...) {
    return 1;
  }
}

}  // namespace openviewer

#pragma once

#include <string_view>

namespace openviewer {

// Warnings go to stderr unless silenced (CLI --quiet).
void set_quiet(bool quiet);
bool quiet();
void warn(std::string_view message);
void info(std::string_view message);

// Cap on internal parallelism, from OPENVIEWER_THREADS (default 1).
unsigned thread_cap();

}  // namespace openviewer

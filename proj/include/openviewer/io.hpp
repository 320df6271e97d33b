#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "openviewer/matrix.hpp"

namespace openviewer::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// CSV without header: one row per line, comma-separated decimal floats.
Matrix read_matrix_csv(const fs::path& path);
void write_matrix_csv(const fs::path& path, const Matrix& m);
std::string matrix_to_csv(const Matrix& m);

// One integer per line.
std::vector<int> read_labels_csv(const fs::path& path);
void write_labels_csv(const fs::path& path, const std::vector<int>& labels);

std::string read_text(const fs::path& path);
// Writes to a sibling temporary file and renames it over the target.
void write_text_atomic(const fs::path& path, std::string_view text);

json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const json& j, const std::string& what);

}  // namespace openviewer::io

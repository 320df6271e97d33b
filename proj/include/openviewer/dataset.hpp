#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "openviewer/io.hpp"
#include "openviewer/matrix.hpp"

namespace openviewer {

// V views over the same N samples. Row i of every view describes sample i.
struct MultiViewDataset {
  std::string name;
  std::vector<Matrix> views;
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t view_count() const { return views.size(); }
  std::vector<std::size_t> view_dims() const;

  // Throws DataError when any invariant is broken (row counts, label range,
  // fewer than two samples in some class).
  void validate() const;
};

// Manifest: {"views": [paths], "labels": path, "name": string} with an
// optional "class_count". Relative paths resolve against the manifest's
// directory.
MultiViewDataset load_dataset(const std::filesystem::path& manifest_path);

// Writes view_<v>.csv, labels.csv and manifest.json into dir; returns the
// manifest path.
std::filesystem::path save_dataset(const MultiViewDataset& ds, const std::filesystem::path& dir);

struct NormalizationStats {
  std::vector<Vector> mean;
  std::vector<Vector> stddev;
};

// Standardizes each feature column with statistics taken from train_idx only.
// Columns whose std is below 1e-12 are centered but not scaled.
std::pair<MultiViewDataset, NormalizationStats> zscore_normalize(
    const MultiViewDataset& ds, const std::vector<std::size_t>& train_idx);

// 1 - sqrt(2 * known / (known + total)).
double openness_value(int known_classes, int total_classes);

struct OpennessSplit {
  std::vector<int> known_classes;    // sorted
  std::vector<int> unknown_classes;  // sorted
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
  std::vector<std::size_t> test_idx;
  double openness_requested = 0.0;
  double openness_achieved = 0.0;
  std::uint64_t seed = 0;

  // Position of a class in known_classes, or -1 for unknown classes.
  int known_index(int label) const;
  bool is_known(int label) const { return known_index(label) >= 0; }
};

using SplitRatios = std::array<double, 3>;  // train, val, test

OpennessSplit openness_split(const MultiViewDataset& ds, double openness,
                             SplitRatios ratios = {0.1, 0.1, 0.8}, std::uint64_t seed = 0);

io::json split_to_json(const OpennessSplit& split);
OpennessSplit split_from_json(const io::json& j);
void save_split(const OpennessSplit& split, const std::filesystem::path& path);
OpennessSplit load_split(const std::filesystem::path& path);

// Checks that split indices are in range and consistent with the dataset.
void validate_split(const MultiViewDataset& ds, const OpennessSplit& split);

struct Batch {
  std::vector<Matrix> views;        // B x D_v each
  std::vector<int> labels;          // known-class index; pseudo rows carry C
  std::vector<std::uint8_t> is_pseudo;
  std::vector<std::size_t> source;  // dataset row, or npos for pseudo rows

  std::size_t size() const { return labels.size(); }
  std::size_t pseudo_count() const;
};

// Rows of the dataset gathered into a batch, labels mapped to known-class
// indices (unknown classes map to C = known count).
Batch gather_batch(const MultiViewDataset& ds, const OpennessSplit& split,
                   const std::vector<std::size_t>& rows);

// Shuffled partition of split.train_idx, deterministic in (seed, epoch). The
// final short batch is kept.
std::vector<Batch> make_batches(const MultiViewDataset& ds, const OpennessSplit& split,
                                std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch);

}  // namespace openviewer

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "openviewer/dataset.hpp"

namespace openviewer {

// Planted multi-view data following X_v = Z D_v + E_v (+ optional jitter).
struct SynthSpec {
  int classes = 5;
  int samples_per_class = 40;
  int views = 2;
  std::vector<int> dims = {40, 40};
  double separation = 5.0;       // s: scale of the one-hot codes
  double noise_fraction = 0.1;   // fraction of noise columns in each E_v
  double noise_magnitude = 3.0;  // |entry| inside a noise column
  double jitter = 0.0;           // Gaussian std added to Z and X
  std::uint64_t seed = 0;

  void validate() const;
};

struct PlantedTruth {
  Matrix z;                        // N x C
  std::vector<Matrix> dictionary;  // per view, C x D_v with orthonormal rows
  std::vector<Matrix> noise;       // per view, N x D_v
  std::vector<std::vector<int>> noise_columns;  // sorted column indices per view
};

struct SynthResult {
  MultiViewDataset dataset;
  PlantedTruth truth;
};

SynthResult generate_synthetic(const SynthSpec& spec);

// Writes dataset CSVs + manifest plus planted Z/D/E CSVs and planted.json.
// Returns the manifest path.
std::filesystem::path save_synthetic(const SynthResult& result, const std::filesystem::path& dir);

}  // namespace openviewer

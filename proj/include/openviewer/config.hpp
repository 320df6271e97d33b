#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "openviewer/dataset.hpp"
#include "openviewer/eval.hpp"
#include "openviewer/io.hpp"
#include "openviewer/synthgen.hpp"
#include "openviewer/trainer.hpp"

namespace openviewer {

struct SplitConfig {
  double openness = 0.1;
  SplitRatios ratios = {0.1, 0.1, 0.8};
  bool normalize = false;  // z-score every view with train-row statistics
};

struct EvalConfig {
  std::vector<double> fpr_targets = {0.005, 0.01, 0.05, 0.1, 0.5};
  ScoreRule score = ScoreRule::softmax;
};

struct DiagConfig {
  std::size_t contraction_trials = 1000;
  std::size_t bound_batches = 100;
  ScalingSpec scaling;
};

// One file describes an experiment. Sections: seed, synth, split, admm, mix,
// loss, train, eval, diag. Unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  SynthSpec synth;
  SplitConfig split;
  AdmmConfig admm;
  MixConfig mix;
  LossConfig loss;
  TrainConfig train;  // mix/loss/admm/seed are filled from the sections above
  EvalConfig eval;
  DiagConfig diag;

  // Pushes seed and the shared sections into the nested records.
  void propagate();
  void validate() const;
};

RunConfig run_config_from_json(const io::json& j);
io::json to_json(const RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);

io::json to_json(const SynthSpec& s);
SynthSpec synth_spec_from_json(const io::json& j);

}  // namespace openviewer

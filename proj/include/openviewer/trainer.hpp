#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "openviewer/admm_oracle.hpp"
#include "openviewer/dataset.hpp"
#include "openviewer/io.hpp"
#include "openviewer/losses.hpp"
#include "openviewer/pseudo_gen.hpp"
#include "openviewer/unfold_net.hpp"

namespace openviewer {

enum class SnapshotRule { ema, last };

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 50;
  double learning_rate = 0.01;
  std::size_t layers = 1;
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::full;
  bool warm_start = false;  // closed-form layers unrolled from the solver dictionary of the training rows
  double ema_decay = 0.9;
  double grad_clip = 0.0;  // rescale the joint gradient to this norm when larger; 0 = off
  SnapshotRule snapshot = SnapshotRule::ema;
  MixConfig mix;
  LossConfig loss;
  AdmmConfig admm;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double total = 0.0;     // batch means
  double known = 0.0;
  double unknown = 0.0;
  double center = 0.0;
  std::vector<double> fusion_ema;
  double val_accuracy = 0.0;  // closed-set accuracy on val rows; NaN when there are none
  double max_bound_ratio = 0.0;  // max over batches of measured / bound
  std::size_t bound_violations = 0;
  std::size_t batches = 0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  std::size_t bound_checks = 0;
  std::size_t bound_violations = 0;
  double max_bound_ratio = 0.0;
  std::string checkpoint_path;

  // CSV with one row per epoch; the seconds column is omitted when
  // include_time is false.
  std::string to_csv(bool include_time = true) const;
};

struct TrainResult {
  UnfoldParams params;
  CenterState centers;
  TrainLog log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train(const MultiViewDataset& ds, const OpennessSplit& split, const TrainConfig& config,
                  const EpochCallback& on_epoch = nullptr);

// theta <- theta - eta * g for every parameter, then thresholds clamped at 0.
void sgd_step(UnfoldParams& params, std::span<const Matrix> grads, double eta);

struct Checkpoint {
  UnfoldParams params;
  CenterState centers;
  io::json config;  // echo of the run configuration
  std::vector<int> known_classes;
};

io::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const io::json& j);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace openviewer

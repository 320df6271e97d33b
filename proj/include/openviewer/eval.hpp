#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "openviewer/dataset.hpp"
#include "openviewer/io.hpp"
#include "openviewer/losses.hpp"
#include "openviewer/unfold_net.hpp"

namespace openviewer {

// softmax: max softmax probability. logit_norm: ||z|| / (1 + ||z||).
enum class ScoreRule { softmax, logit_norm };

std::string to_string(ScoreRule r);
ScoreRule score_rule_from_string(const std::string& s);

struct ScoredPrediction {
  std::size_t index = 0;  // dataset row
  int predicted = 0;      // known-class index
  double confidence = 0.0;
  int truth = 0;          // known-class index, or C for unknown classes
  bool unknown = false;
};

// Inference-mode forward over split.test_idx.
std::vector<ScoredPrediction> score_test_set(const UnfoldParams& params, const MultiViewDataset& ds,
                                             const OpennessSplit& split,
                                             Ablation ablation = Ablation::full,
                                             ScoreRule rule = ScoreRule::softmax,
                                             Matrix* fused = nullptr);

struct OscrPoint {
  double threshold = 0.0;
  double ccr = 0.0;
  double fpr = 0.0;
};

// Points sorted by threshold descending, one per distinct confidence.
struct OscrCurve {
  std::vector<OscrPoint> points;
};

OscrCurve oscr_curve(std::span<const ScoredPrediction> preds);

// Largest CCR among points with FPR <= target; 0 when there is none.
double ccr_at_fpr(const OscrCurve& curve, double target_fpr);

struct ContractionReport {
  double r_norm = 0.0;
  bool contractive = false;  // r_norm < 1
  double max_ratio = 0.0;    // max ||phi(Z) - phi(Z')|| / ||Z - Z'||
  std::size_t trials = 0;
  bool bound_holds = false;  // max_ratio <= r_norm + 1e-9
};

// Iterates the RF map phi(Z) = S_theta(Z R + X D^T U) of one view and layer on
// random pairs (Z, Z') with a fixed random X.
ContractionReport contraction_diagnostic(const UnfoldParams& params, std::size_t view,
                                         std::size_t layer, std::size_t trials,
                                         std::uint64_t seed = 0);

struct ScalingRow {
  std::size_t n = 0;
  double seconds = 0.0;  // min over repeats of one forward + backward
  double ratio = 0.0;    // seconds / seconds of the previous row (0 for the first)
};

struct ScalingSpec {
  std::vector<std::size_t> n = {512, 1024, 2048};
  int classes = 5;
  std::size_t dim = 40;
  std::size_t views = 2;
  std::size_t layers = 1;
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
};

std::vector<ScalingRow> scaling_benchmark(const ScalingSpec& spec);

struct GradcheckSpec {
  std::uint64_t seed = 7;
  std::size_t layers = 2;
  double eps = 1e-5;
  Ablation ablation = Ablation::full;
};

struct GradcheckResult {
  ad::GradCheckReport report;
  std::vector<std::string> names;  // flatten_names() order
  std::size_t rows = 0;            // batch rows (known + pseudo)
  double seconds = 0.0;
};

// Central differences against the tape on a 10-row synthetic batch (V = 2,
// C = 5, 7 known rows plus 3 mixtures). The base point is the solver-derived
// parameter set for the batch, randomly perturbed.
// Fusion weights are held at their base-point values.
GradcheckResult gradient_check(const GradcheckSpec& spec);

struct BoundCheckReport {
  std::size_t checked = 0;
  std::size_t violations = 0;
  double max_ratio = 0.0;  // measured / bound
};

// Random logit batches of mixed scale: ||dL_total/dZ||_F against gradient_bound.
BoundCheckReport bound_spot_check(std::size_t batches, const LossConfig& loss, std::uint64_t seed);

struct EvalSummary {
  std::vector<double> targets;
  std::vector<double> ccr;
  std::size_t known = 0;
  std::size_t unknown = 0;
  double closed_set_accuracy = 0.0;
};

EvalSummary summarize(std::span<const ScoredPrediction> preds, const OscrCurve& curve,
                      std::span<const double> targets);
io::json summary_to_json(const EvalSummary& s);
std::string curve_to_csv(const OscrCurve& curve);

// oscr.csv, summary.json, predictions.csv, fused.csv and similarity.csv (Z Z^T).
void write_eval_report(const std::filesystem::path& dir, std::span<const ScoredPrediction> preds,
                       const OscrCurve& curve, const EvalSummary& summary, const Matrix& fused);

}  // namespace openviewer

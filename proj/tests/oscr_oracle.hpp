#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "openviewer/eval.hpp"

namespace testutil {

struct BrutePoint {
  double threshold, ccr, fpr;
};

// Counts directly at each distinct confidence, no sorting pass.
inline std::vector<BrutePoint> brute_oscr(const std::vector<openviewer::ScoredPrediction>& preds) {
  std::set<double, std::greater<double>> taus;
  double known = 0, unknown = 0;
  for (const auto& p : preds) {
    taus.insert(p.confidence);
    (p.unknown ? unknown : known) += 1;
  }
  std::vector<BrutePoint> out;
  for (double t : taus) {
    double correct = 0, fp = 0;
    for (const auto& p : preds) {
      if (p.confidence < t) continue;
      if (p.unknown) fp += 1;
      else if (p.predicted == p.truth) correct += 1;
    }
    out.push_back({t, correct / known, fp / unknown});
  }
  return out;
}

inline double brute_ccr_at(const std::vector<BrutePoint>& pts, double target) {
  double best = 0.0;
  for (const auto& p : pts)
    if (p.fpr <= target) best = std::max(best, p.ccr);
  return best;
}

// Random prediction set with at least one known and one unknown row; confidences
// drawn from a small grid so ties occur.
inline std::vector<openviewer::ScoredPrediction> random_predictions(std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_int_distribution<int> size(2, 60), cls(0, 3), grid(0, 20);
  std::bernoulli_distribution unk(0.3);
  const int n = size(g);
  std::vector<openviewer::ScoredPrediction> v;
  for (int i = 0; i < n; ++i) {
    openviewer::ScoredPrediction p;
    p.index = static_cast<std::size_t>(i);
    p.unknown = i == 0 ? false : (i == 1 ? true : unk(g));
    p.truth = p.unknown ? 4 : cls(g);
    p.predicted = cls(g);
    p.confidence = 0.25 + 0.75 * grid(g) / 20.0;
    v.push_back(p);
  }
  return v;
}

}  // namespace testutil

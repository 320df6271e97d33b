#pragma once

#include <cstddef>
#include <vector>

#include "openviewer/dataset.hpp"
#include "openviewer/errors.hpp"
#include "openviewer/rng.hpp"

namespace openviewer {

struct MixConfig {
  double omega = 2.0;         // Beta(omega, omega) shape
  double pseudo_ratio = 1.0;  // N_e / N_o, in (0, 1]
  bool per_view_zeta = false;
  int unknown_label = -1;     // label given to pseudo rows; -1 = known count

  void validate() const;
};

class PseudoGenerationError : public Error {
 public:
  using Error::Error;
};

// Beta(omega, omega) via two Gamma(omega, 1) draws.
double sample_beta(double omega, Rng& rng);

struct MixRecord {
  std::size_t first;   // row of the batch weighted by zeta
  std::size_t second;  // row weighted by 1 - zeta; different label
  std::vector<double> zeta;  // one per view (all equal unless per_view_zeta)
};

// Appends ceil(pseudo_ratio * B) convex mixtures of cross-class row pairs to
// the batch. Throws PseudoGenerationError if the batch has a single class.
Batch generate_pseudo(const Batch& batch, const MixConfig& config, Rng& rng,
                      std::vector<MixRecord>* mixes = nullptr);

}  // namespace openviewer

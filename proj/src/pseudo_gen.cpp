#include "openviewer/pseudo_gen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace openviewer {

void MixConfig::validate() const {
  if (!(omega > 0.0)) throw ConfigError("mix: omega must be > 0");
  if (!(pseudo_ratio > 0.0 && pseudo_ratio <= 1.0)) {
    throw ConfigError("mix: pseudo_ratio must lie in (0, 1]");
  }
}

double sample_beta(double omega, Rng& rng) {
  if (!(omega > 0.0)) throw DomainError("sample_beta: omega must be > 0");
  std::gamma_distribution<double> gamma(omega, 1.0);
  const double g1 = gamma(rng);
  const double g2 = gamma(rng);
  const double s = g1 + g2;
  // Both draws underflowing is only possible for tiny omega; fall back to a
  // fair coin, which is the omega -> 0 limit of Beta(omega, omega).
  if (!(s > 0.0)) return std::bernoulli_distribution(0.5)(rng) ? 1.0 : 0.0;
  return g1 / s;
}

Batch generate_pseudo(const Batch& batch, const MixConfig& config, Rng& rng,
                      std::vector<MixRecord>* mixes) {
  config.validate();
  std::vector<std::size_t> known_rows;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch.is_pseudo[i]) known_rows.push_back(i);
  }
  std::map<int, std::vector<std::size_t>> buckets;
  for (std::size_t i : known_rows) buckets[batch.labels[i]].push_back(i);
  if (buckets.size() < 2) {
    throw PseudoGenerationError("pseudo-unknown generation needs at least two classes in the batch");
  }
  int unknown = config.unknown_label;
  if (unknown < 0) unknown = buckets.rbegin()->first + 1;

  const std::size_t base = known_rows.size();
  const auto count = static_cast<std::size_t>(std::ceil(config.pseudo_ratio * double(base) - 1e-9));
  const std::size_t nviews = batch.views.size();

  Batch out = batch;
  for (std::size_t v = 0; v < nviews; ++v) {
    out.views[v].conservativeResize(static_cast<Eigen::Index>(batch.size() + count),
                                    Eigen::NoChange);
  }
  std::uniform_int_distribution<std::size_t> pick_first(0, base - 1);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = known_rows[pick_first(rng)];
    const int li = batch.labels[i];
    // j uniform over rows with a different label, via class buckets.
    const std::size_t others = base - buckets[li].size();
    std::size_t r = std::uniform_int_distribution<std::size_t>(0, others - 1)(rng);
    std::size_t j = 0;
    for (const auto& [label, rows] : buckets) {
      if (label == li) continue;
      if (r < rows.size()) {
        j = rows[r];
        break;
      }
      r -= rows.size();
    }

    MixRecord rec{i, j, {}};
    const double shared = sample_beta(config.omega, rng);
    const auto row = static_cast<Eigen::Index>(batch.size() + k);
    for (std::size_t v = 0; v < nviews; ++v) {
      const double zeta = config.per_view_zeta && v > 0 ? sample_beta(config.omega, rng) : shared;
      rec.zeta.push_back(zeta);
      const Matrix& x = batch.views[v];
      out.views[v].row(row) = zeta * x.row(static_cast<Eigen::Index>(i)) +
                              (1.0 - zeta) * x.row(static_cast<Eigen::Index>(j));
    }
    out.labels.push_back(unknown);
    out.is_pseudo.push_back(1);
    out.source.push_back(static_cast<std::size_t>(-1));
    if (mixes != nullptr) mixes->push_back(std::move(rec));
  }
  return out;
}

}  // namespace openviewer

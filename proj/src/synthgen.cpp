#include "openviewer/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "openviewer/errors.hpp"
#include "openviewer/io.hpp"
#include "openviewer/rng.hpp"

namespace openviewer {

void SynthSpec::validate() const {
  if (classes < 3) throw ConfigError("synth: classes must be >= 3");
  if (samples_per_class < 2) throw ConfigError("synth: samples_per_class must be >= 2");
  if (views < 1) throw ConfigError("synth: views must be >= 1");
  if (static_cast<int>(dims.size()) != views) {
    throw ConfigError("synth: dims has " + std::to_string(dims.size()) + " entries for " +
                      std::to_string(views) + " views");
  }
  for (int d : dims) {
    if (d < classes) {
      throw ConfigError("synth: every view dimension must be >= classes (" +
                        std::to_string(d) + " < " + std::to_string(classes) + ")");
    }
  }
  if (!(noise_fraction >= 0.0 && noise_fraction <= 0.5)) {
    throw ConfigError("synth: noise_fraction must lie in [0, 0.5]");
  }
  if (!(separation > 0.0) || !(noise_magnitude > 0.0) || !(jitter >= 0.0)) {
    throw ConfigError("synth: separation and noise_magnitude must be > 0, jitter >= 0");
  }
}

namespace {

Matrix orthonormal_rows(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> normal;
  Matrix g(cols, rows);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(cols, rows);
  return q.transpose();
}

}  // namespace

SynthResult generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  const int c = spec.classes;
  const int n = c * spec.samples_per_class;

  SynthResult out;
  MultiViewDataset& ds = out.dataset;
  ds.name = "synthetic";
  ds.class_count = c;
  ds.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ds.labels[static_cast<std::size_t>(i)] = i / spec.samples_per_class;

  Rng zrng = make_rng(spec.seed, "synth-z");
  std::normal_distribution<double> normal;
  Matrix z = Matrix::Zero(n, c);
  for (int i = 0; i < n; ++i) z(i, ds.labels[static_cast<std::size_t>(i)]) = spec.separation;
  if (spec.jitter > 0.0) {
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] += spec.jitter * normal(zrng);
  }
  out.truth.z = z;

  for (int v = 0; v < spec.views; ++v) {
    Rng rng = make_rng(spec.seed, "synth-view", static_cast<std::uint64_t>(v));
    const int dim = spec.dims[static_cast<std::size_t>(v)];
    Matrix d = orthonormal_rows(c, dim, rng);

    const int noisy = static_cast<int>(std::floor(spec.noise_fraction * dim + 0.5));
    std::vector<int> cols(static_cast<std::size_t>(dim));
    std::iota(cols.begin(), cols.end(), 0);
    for (int k = 0; k < noisy; ++k) {
      std::uniform_int_distribution<int> pick(k, dim - 1);
      std::swap(cols[static_cast<std::size_t>(k)], cols[static_cast<std::size_t>(pick(rng))]);
    }
    std::vector<int> noise_cols(cols.begin(), cols.begin() + noisy);
    std::sort(noise_cols.begin(), noise_cols.end());

    Matrix e = Matrix::Zero(n, dim);
    std::bernoulli_distribution coin(0.5);
    for (int col : noise_cols) {
      for (int i = 0; i < n; ++i) e(i, col) = coin(rng) ? spec.noise_magnitude : -spec.noise_magnitude;
    }

    Matrix x = z * d + e;
    if (spec.jitter > 0.0) {
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += spec.jitter * normal(rng);
    }
    ds.views.push_back(std::move(x));
    out.truth.dictionary.push_back(std::move(d));
    out.truth.noise.push_back(std::move(e));
    out.truth.noise_columns.push_back(std::move(noise_cols));
  }
  return out;
}

std::filesystem::path save_synthetic(const SynthResult& result, const std::filesystem::path& dir) {
  const auto manifest = save_dataset(result.dataset, dir);
  io::json planted;
  io::write_matrix_csv(dir / "planted_z.csv", result.truth.z);
  planted["z"] = "planted_z.csv";
  planted["dictionaries"] = io::json::array();
  planted["noise"] = io::json::array();
  for (std::size_t v = 0; v < result.truth.dictionary.size(); ++v) {
    const std::string dname = "planted_d_" + std::to_string(v) + ".csv";
    const std::string ename = "planted_e_" + std::to_string(v) + ".csv";
    io::write_matrix_csv(dir / dname, result.truth.dictionary[v]);
    io::write_matrix_csv(dir / ename, result.truth.noise[v]);
    planted["dictionaries"].push_back(dname);
    planted["noise"].push_back(ename);
  }
  planted["noise_columns"] = result.truth.noise_columns;
  io::write_text_atomic(dir / "planted.json", planted.dump(2) + "\n");
  return manifest;
}

}  // namespace openviewer

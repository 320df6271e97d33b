#include "openviewer/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "openviewer/errors.hpp"
#include "openviewer/rng.hpp"

namespace openviewer {

namespace fs = std::filesystem;

std::vector<std::size_t> MultiViewDataset::view_dims() const {
  std::vector<std::size_t> dims;
  for (const Matrix& v : views) dims.push_back(static_cast<std::size_t>(v.cols()));
  return dims;
}

void MultiViewDataset::validate() const {
  if (views.empty()) throw DataError("dataset '" + name + "' has no views");
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (static_cast<std::size_t>(views[v].rows()) != labels.size()) {
      throw DataError("dataset '" + name + "': view " + std::to_string(v) + " has " +
                      std::to_string(views[v].rows()) + " rows but there are " +
                      std::to_string(labels.size()) + " labels");
    }
    if (!views[v].allFinite()) {
      throw DataError("dataset '" + name + "': view " + std::to_string(v) +
                      " contains non-finite values");
    }
  }
  std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(class_count, 0)), 0);
  for (int l : labels) {
    if (l < 0 || l >= class_count) {
      throw DataError("dataset '" + name + "': label " + std::to_string(l) +
                      " outside [0, " + std::to_string(class_count) + ")");
    }
    ++counts[static_cast<std::size_t>(l)];
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] < 2) {
      throw DataError("dataset '" + name + "': class " + std::to_string(c) + " has " +
                      std::to_string(counts[c]) + " samples, need at least 2");
    }
  }
}

MultiViewDataset load_dataset(const fs::path& manifest_path) {
  io::json manifest;
  try {
    manifest = io::json::parse(io::read_text(manifest_path));
  } catch (const io::json::exception& e) {
    throw DataError("manifest '" + manifest_path.string() + "' is not valid JSON: " + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("views") || !manifest.contains("labels")) {
    throw DataError("manifest '" + manifest_path.string() + "' needs \"views\" and \"labels\"");
  }
  const fs::path base = manifest_path.parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
  };

  MultiViewDataset ds;
  ds.name = manifest.value("name", manifest_path.stem().string());
  for (const auto& v : manifest.at("views")) {
    ds.views.push_back(io::read_matrix_csv(resolve(v.get<std::string>())));
  }
  const fs::path label_path = resolve(manifest.at("labels").get<std::string>());
  ds.labels = io::read_labels_csv(label_path);

  for (std::size_t v = 0; v < ds.views.size(); ++v) {
    if (static_cast<std::size_t>(ds.views[v].rows()) != ds.labels.size()) {
      throw DataError("row-count mismatch: view file '" +
                      resolve(manifest.at("views")[v].get<std::string>()).string() + "' has " +
                      std::to_string(ds.views[v].rows()) + " rows, label file '" +
                      label_path.string() + "' has " + std::to_string(ds.labels.size()));
    }
  }
  if (manifest.contains("class_count")) {
    ds.class_count = manifest.at("class_count").get<int>();
  } else {
    ds.class_count =
        ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  }
  for (int l : ds.labels) {
    if (l < 0 || l >= ds.class_count) {
      throw DataError("label file '" + label_path.string() + "': label " + std::to_string(l) +
                      " out of range [0, " + std::to_string(ds.class_count) + ")");
    }
  }
  ds.validate();
  return ds;
}

fs::path save_dataset(const MultiViewDataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  io::json manifest;
  manifest["name"] = ds.name;
  manifest["views"] = io::json::array();
  for (std::size_t v = 0; v < ds.views.size(); ++v) {
    const std::string file = "view_" + std::to_string(v) + ".csv";
    io::write_matrix_csv(dir / file, ds.views[v]);
    manifest["views"].push_back(file);
  }
  io::write_labels_csv(dir / "labels.csv", ds.labels);
  manifest["labels"] = "labels.csv";
  manifest["class_count"] = ds.class_count;
  const fs::path path = dir / "manifest.json";
  io::write_text_atomic(path, manifest.dump(2) + "\n");
  return path;
}

std::pair<MultiViewDataset, NormalizationStats> zscore_normalize(
    const MultiViewDataset& ds, const std::vector<std::size_t>& train_idx) {
  if (train_idx.empty()) throw DataError("zscore_normalize: train_idx is empty");
  MultiViewDataset out = ds;
  NormalizationStats stats;
  const double n = static_cast<double>(train_idx.size());
  for (std::size_t v = 0; v < ds.views.size(); ++v) {
    const Matrix& x = ds.views[v];
    Vector mean = Vector::Zero(x.cols());
    for (std::size_t i : train_idx) mean += x.row(static_cast<Eigen::Index>(i)).transpose();
    mean /= n;
    Vector var = Vector::Zero(x.cols());
    for (std::size_t i : train_idx) {
      var += (x.row(static_cast<Eigen::Index>(i)).transpose() - mean).cwiseAbs2();
    }
    Vector sd = (var / n).cwiseSqrt();
    Matrix& y = out.views[v];
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      y.col(c).array() -= mean(c);
      if (sd(c) >= 1e-12) y.col(c) /= sd(c);
    }
    stats.mean.push_back(std::move(mean));
    stats.stddev.push_back(std::move(sd));
  }
  return {std::move(out), std::move(stats)};
}

double openness_value(int known_classes, int total_classes) {
  return 1.0 - std::sqrt(2.0 * known_classes / double(known_classes + total_classes));
}

int OpennessSplit::known_index(int label) const {
  const auto it = std::lower_bound(known_classes.begin(), known_classes.end(), label);
  if (it == known_classes.end() || *it != label) return -1;
  return static_cast<int>(it - known_classes.begin());
}

namespace {

template <typename T>
void fisher_yates(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

}  // namespace

OpennessSplit openness_split(const MultiViewDataset& ds, double openness, SplitRatios ratios,
                             std::uint64_t seed) {
  if (!(openness >= 0.0 && openness < 1.0)) {
    throw ConfigError("openness must lie in [0, 1), got " + std::to_string(openness));
  }
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be non-negative");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  const int total = ds.class_count;
  if (total < 2) throw DataError("infeasible split: need at least 2 classes");

  int best_known = -1;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int k = total; k >= 2; --k) {
    const double gap = std::abs(openness - openness_value(k, total));
    if (gap < best_gap) {
      best_gap = gap;
      best_known = k;
    }
  }
  if (best_known < 2) throw DataError("infeasible split: fewer than 2 known classes");

  OpennessSplit split;
  split.openness_requested = openness;
  split.openness_achieved = openness_value(best_known, total);
  split.seed = seed;

  Rng rng = make_rng(seed, "split");
  std::vector<int> classes(static_cast<std::size_t>(total));
  for (int c = 0; c < total; ++c) classes[static_cast<std::size_t>(c)] = c;
  fisher_yates(classes, rng);
  split.known_classes.assign(classes.begin(), classes.begin() + best_known);
  split.unknown_classes.assign(classes.begin() + best_known, classes.end());
  std::sort(split.known_classes.begin(), split.known_classes.end());
  std::sort(split.unknown_classes.begin(), split.unknown_classes.end());

  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < ds.labels.size(); ++i) members[ds.labels[i]].push_back(i);

  for (int c : split.known_classes) {
    std::vector<std::size_t> idx = members[c];
    fisher_yates(idx, rng);
    const std::size_t n = idx.size();
    std::size_t n_train = static_cast<std::size_t>(std::floor(ratios[0] * double(n) + 1e-9));
    std::size_t n_val = static_cast<std::size_t>(std::floor(ratios[1] * double(n) + 1e-9));
    if (ratios[0] > 0.0 && n_train == 0) n_train = 1;
    // Test keeps at least one sample per known class.
    while (n_train + n_val >= n && n_val > 0) --n_val;
    while (n_train + n_val >= n && n_train > 1) --n_train;
    split.train_idx.insert(split.train_idx.end(), idx.begin(), idx.begin() + n_train);
    split.val_idx.insert(split.val_idx.end(), idx.begin() + n_train,
                         idx.begin() + n_train + n_val);
    split.test_idx.insert(split.test_idx.end(), idx.begin() + n_train + n_val, idx.end());
  }
  for (int c : split.unknown_classes) {
    const auto& idx = members[c];
    split.test_idx.insert(split.test_idx.end(), idx.begin(), idx.end());
  }
  std::sort(split.train_idx.begin(), split.train_idx.end());
  std::sort(split.val_idx.begin(), split.val_idx.end());
  std::sort(split.test_idx.begin(), split.test_idx.end());
  return split;
}

io::json split_to_json(const OpennessSplit& s) {
  io::json j;
  j["known_classes"] = s.known_classes;
  j["unknown_classes"] = s.unknown_classes;
  j["train_idx"] = s.train_idx;
  j["val_idx"] = s.val_idx;
  j["test_idx"] = s.test_idx;
  j["openness_requested"] = s.openness_requested;
  j["openness_achieved"] = s.openness_achieved;
  j["seed"] = s.seed;
  return j;
}

OpennessSplit split_from_json(const io::json& j) {
  OpennessSplit s;
  try {
    s.known_classes = j.at("known_classes").get<std::vector<int>>();
    s.unknown_classes = j.at("unknown_classes").get<std::vector<int>>();
    s.train_idx = j.at("train_idx").get<std::vector<std::size_t>>();
    s.val_idx = j.at("val_idx").get<std::vector<std::size_t>>();
    s.test_idx = j.at("test_idx").get<std::vector<std::size_t>>();
    s.openness_requested = j.at("openness_requested").get<double>();
    s.openness_achieved = j.at("openness_achieved").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const io::json::exception& e) {
    throw DataError(std::string("malformed split file: ") + e.what());
  }
  std::sort(s.known_classes.begin(), s.known_classes.end());
  std::sort(s.unknown_classes.begin(), s.unknown_classes.end());
  return s;
}

void save_split(const OpennessSplit& split, const fs::path& path) {
  io::write_text_atomic(path, split_to_json(split).dump(2) + "\n");
}

OpennessSplit load_split(const fs::path& path) {
  try {
    return split_from_json(io::json::parse(io::read_text(path)));
  } catch (const io::json::parse_error& e) {
    throw DataError("split file '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void validate_split(const MultiViewDataset& ds, const OpennessSplit& split) {
  std::vector<int> all = split.known_classes;
  all.insert(all.end(), split.unknown_classes.begin(), split.unknown_classes.end());
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
    throw DataError("split: known and unknown class sets overlap");
  }
  if (static_cast<int>(all.size()) != ds.class_count) {
    throw DataError("split covers " + std::to_string(all.size()) + " classes, dataset has " +
                    std::to_string(ds.class_count));
  }
  auto check = [&](const std::vector<std::size_t>& idx, const char* what, bool known_only) {
    for (std::size_t i : idx) {
      if (i >= ds.size()) {
        throw DataError(std::string("split: ") + what + " index " + std::to_string(i) +
                        " out of range");
      }
      if (known_only && !split.is_known(ds.labels[i])) {
        throw DataError(std::string("split: ") + what + " contains an unknown-class sample");
      }
    }
  };
  check(split.train_idx, "train", true);
  check(split.val_idx, "val", true);
  check(split.test_idx, "test", false);
}

std::size_t Batch::pseudo_count() const {
  return static_cast<std::size_t>(std::count(is_pseudo.begin(), is_pseudo.end(), 1));
}

Batch gather_batch(const MultiViewDataset& ds, const OpennessSplit& split,
                   const std::vector<std::size_t>& rows) {
  Batch b;
  const int unknown_label = static_cast<int>(split.known_classes.size());
  for (const Matrix& x : ds.views) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      m.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(rows[k]));
    }
    b.views.push_back(std::move(m));
  }
  for (std::size_t r : rows) {
    const int k = split.known_index(ds.labels[r]);
    b.labels.push_back(k >= 0 ? k : unknown_label);
    b.is_pseudo.push_back(0);
    b.source.push_back(r);
  }
  return b;
}

std::vector<Batch> make_batches(const MultiViewDataset& ds, const OpennessSplit& split,
                                std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  std::vector<std::size_t> order = split.train_idx;
  Rng rng = make_rng(seed, "batch-shuffle", epoch);
  fisher_yates(order, rng);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                  order.begin() + static_cast<std::ptrdiff_t>(end));
    batches.push_back(gather_batch(ds, split, rows));
  }
  return batches;
}

}  // namespace openviewer

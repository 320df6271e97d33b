#include "openviewer/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "openviewer/errors.hpp"
#include "openviewer/rng.hpp"
#include "openviewer/runtime.hpp"
#include "openviewer/version.hpp"

namespace openviewer {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning_rate must be finite and >= 0");
  }
  if (layers < 1 || layers > 8) throw ConfigError("train: layers must lie in [1, 8]");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("train: ema_decay must lie in [0, 1)");
  if (!(grad_clip >= 0.0) || !std::isfinite(grad_clip)) {
    throw ConfigError("train: grad_clip must be finite and >= 0");
  }
  mix.validate();
  loss.validate();
  admm.validate();
}

std::string TrainLog::to_csv(bool include_time) const {
  std::ostringstream out;
  const std::size_t views = epochs.empty() ? 0 : epochs.front().fusion_ema.size();
  out << "epoch,total,known,unknown,center,val_accuracy,max_bound_ratio,bound_violations";
  for (std::size_t v = 0; v < views; ++v) out << ",w" << v;
  if (include_time) out << ",seconds";
  out << '\n';
  for (const EpochLog& e : epochs) {
    out << e.epoch << ',' << io::format_double(e.total) << ',' << io::format_double(e.known) << ','
        << io::format_double(e.unknown) << ',' << io::format_double(e.center) << ','
        << io::format_double(e.val_accuracy) << ',' << io::format_double(e.max_bound_ratio) << ','
        << e.bound_violations;
    for (double w : e.fusion_ema) out << ',' << io::format_double(w);
    if (include_time) out << ',' << io::format_double(e.seconds);
    out << '\n';
  }
  return out.str();
}

void sgd_step(UnfoldParams& params, std::span<const Matrix> grads, double eta) {
  std::vector<Matrix> flat = flatten(params);
  if (grads.size() != flat.size()) {
    throw DimensionError("sgd_step: expected " + std::to_string(flat.size()) +
                         " gradients, got " + std::to_string(grads.size()));
  }
  for (std::size_t k = 0; k < flat.size(); ++k) {
    if (grads[k].rows() != flat[k].rows() || grads[k].cols() != flat[k].cols()) {
      throw DimensionError("sgd_step: gradient " + std::to_string(k) + " is " +
                           shape_str(grads[k]) + ", parameter is " + shape_str(flat[k]));
    }
    flat[k] -= eta * grads[k];
  }
  UnfoldParams next = unflatten(params, flat);
  for (ViewParams& vp : next.views) {
    for (LayerParams& lp : vp.layers) {
      lp.theta = std::max(lp.theta, 0.0);
      lp.rho = std::max(lp.rho, 0.0);
    }
  }
  params = std::move(next);
}

namespace {

std::vector<double> normalized(std::vector<double> w) {
  double s = 0.0;
  for (double x : w) s += x;
  for (double& x : w) x /= s;
  return w;
}

double val_accuracy(const MultiViewDataset& ds, const OpennessSplit& split,
                    const UnfoldParams& params, const std::vector<double>& weights,
                    Ablation ablation) {
  if (split.val_idx.empty()) return std::numeric_limits<double>::quiet_NaN();
  const Batch b = gather_batch(ds, split, split.val_idx);
  ForwardOptions opt;
  opt.ablation = ablation;
  opt.weights = WeightsMode::fixed;
  opt.fixed_weights = weights;
  const std::vector<Prediction> pred = predict(forward_values(params, b.views, opt));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i].label == b.labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

std::vector<std::size_t> known_rows_of(const Batch& b) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!b.is_pseudo[i]) rows.push_back(i);
  }
  return rows;
}

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(rows[k]));
  }
  return out;
}

// Solver dictionary on the training rows, then the closed-form layers of
// `layers` solver iterations restarted from Z = 0, E = 0 at that dictionary on
// a batch shaped like the training batches (first batch plus pseudo rows).
UnfoldParams warm_start_params(const MultiViewDataset& ds, const OpennessSplit& split,
                               const TrainConfig& config, const MixConfig& mix) {
  const Batch rows = gather_batch(ds, split, split.train_idx);
  AdmmConfig ac = config.admm;
  ac.rank = static_cast<int>(split.known_classes.size());
  ac.seed = config.seed;
  const AdmmState warm = solve(rows.views, ac);

  Batch shape = make_batches(ds, split, config.batch_size, config.seed, 0).front();
  Rng rng = make_rng(config.seed, "warm-start");
  try {
    shape = generate_pseudo(shape, mix, rng);
  } catch (const PseudoGenerationError&) {
  }
  std::vector<ViewFactors> start;
  for (std::size_t v = 0; v < warm.views.size(); ++v) {
    ViewFactors f;
    f.d = warm.views[v].d;
    f.z = Matrix::Zero(shape.views[v].rows(), f.d.rows());
    f.e = Matrix::Zero(shape.views[v].rows(), shape.views[v].cols());
    start.push_back(std::move(f));
  }
  AdmmConfig unroll = ac;
  unroll.max_iter = config.layers;
  unroll.tol = std::numeric_limits<double>::min();
  AdmmHistory history;
  solve_from(std::move(start), shape.views, unroll, &history);
  return analytic_params(history, ac, config.layers);
}

}  // namespace

TrainResult train(const MultiViewDataset& ds, const OpennessSplit& split, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  validate_split(ds, split);
  const int classes = static_cast<int>(split.known_classes.size());
  if (classes < 2) throw ConfigError("train: split needs at least 2 known classes");
  if (split.train_idx.size() < 2) throw DataError("train: fewer than 2 training rows");

  const std::vector<std::size_t> dims = ds.view_dims();
  MixConfig mix = config.mix;
  mix.unknown_label = classes;

  TrainResult result;
  if (config.warm_start) {
    result.params = warm_start_params(ds, split, config, mix);
  } else {
    result.params = init_params(dims, classes, config.layers, config.admm, config.seed);
  }
  Rng beta_rng = make_rng(config.seed, "beta");

  std::vector<double> ema;
  std::vector<double> last_weights;
  bool centers_ready = false;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<Batch> batches =
        make_batches(ds, split, config.batch_size, config.seed, epoch);
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch& raw = batches[bi];
      if (!centers_ready) {
        ForwardOptions opt;
        opt.ablation = config.ablation;
        opt.labels = raw.labels;
        const Matrix z = forward_values(result.params, raw.views, opt);
        result.centers.centers = init_centers(z, raw.labels, classes);
        centers_ready = true;
      }
      Batch batch;
      try {
        batch = generate_pseudo(raw, mix, beta_rng);
      } catch (const PseudoGenerationError& err) {
        warn(std::string(err.what()) + " (epoch " + std::to_string(epoch) + ", batch " +
             std::to_string(bi) + "); training on known rows only");
        batch = raw;
      }

      ad::Tape tape;
      std::vector<ad::Var> leaves;
      for (Matrix& m : flatten(result.params)) leaves.push_back(tape.leaf(std::move(m)));
      const ParamNodes nodes = bind_params(result.params, leaves);
      ForwardOptions opt;
      opt.ablation = config.ablation;
      opt.labels = batch.labels;
      const ForwardResult fwd = forward(tape, result.params, nodes, batch.views, opt);
      const TotalLoss loss = total_loss(fwd.z_fused, batch.labels, batch.is_pseudo,
                                        result.centers.centers, config.loss);
      const double value = loss.total.scalar();
      if (!std::isfinite(value)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(bi) + " (" +
                           std::to_string(batch.size()) + " rows)");
      }
      tape.backward(loss.total);

      const Matrix& z = fwd.z_fused.value();
      const double measured = fwd.z_fused.grad().norm();
      const double bound =
          gradient_bound(z, batch.labels, batch.is_pseudo, result.centers.centers, config.loss);
      const double ratio = measured / bound;
      log.max_bound_ratio = std::max(log.max_bound_ratio, ratio);
      if (!(measured <= bound)) ++log.bound_violations;

      std::vector<Matrix> grads;
      grads.reserve(leaves.size());
      for (const ad::Var& l : leaves) {
        if (!all_finite(l.grad())) {
          throw NumericError("train: non-finite gradient at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(bi));
        }
        grads.push_back(l.grad());
      }
      if (config.grad_clip > 0.0) {
        double sq = 0.0;
        for (const Matrix& g : grads) sq += g.squaredNorm();
        const double norm = std::sqrt(sq);
        if (norm > config.grad_clip) {
          for (Matrix& g : grads) g *= config.grad_clip / norm;
        }
      }
      sgd_step(result.params, grads, config.learning_rate);

      const std::vector<std::size_t> known = known_rows_of(batch);
      std::vector<int> known_labels;
      for (std::size_t i : known) known_labels.push_back(batch.labels[i]);
      result.centers.centers = update_centers(result.centers.centers, gather_rows(z, known),
                                              known_labels, config.loss.center_lr);

      last_weights = fwd.weights;
      if (ema.empty()) {
        ema = fwd.weights;
      } else {
        for (std::size_t v = 0; v < ema.size(); ++v) {
          ema[v] = config.ema_decay * ema[v] + (1.0 - config.ema_decay) * fwd.weights[v];
        }
      }

      log.total += value;
      log.known += loss.known.scalar();
      log.unknown += loss.unknown_value();
      log.center += loss.center.scalar();
      ++log.batches;
    }
    const double nb = static_cast<double>(log.batches);
    log.total /= nb;
    log.known /= nb;
    log.unknown /= nb;
    log.center /= nb;
    log.fusion_ema = normalized(ema);
    const std::vector<double> current =
        config.snapshot == SnapshotRule::ema ? log.fusion_ema : normalized(last_weights);
    log.val_accuracy = val_accuracy(ds, split, result.params, current, config.ablation);
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    result.log.bound_checks += log.batches;
    result.log.bound_violations += log.bound_violations;
    result.log.max_bound_ratio = std::max(result.log.max_bound_ratio, log.max_bound_ratio);
    result.log.epochs.push_back(log);
    if (on_epoch) on_epoch(result.log.epochs.back());
  }
  result.params.fusion_snapshot =
      config.snapshot == SnapshotRule::ema ? normalized(ema) : normalized(last_weights);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

io::json checkpoint_to_json(const Checkpoint& ckpt) {
  const UnfoldParams& p = ckpt.params;
  io::json j;
  j["format"] = "openviewer-checkpoint";
  j["schema_version"] = kSchemaVersion;
  j["classes"] = p.classes;
  j["layers"] = p.layer_count();
  j["view_dims"] = p.view_dims();
  j["group_axis"] = p.group_axis == GroupAxis::columns ? "columns" : "rows";
  j["known_classes"] = ckpt.known_classes;
  io::json views = io::json::array();
  for (const ViewParams& vp : p.views) {
    io::json v;
    v["D_init"] = io::matrix_to_json(vp.d_init);
    io::json layers = io::json::array();
    for (const LayerParams& lp : vp.layers) {
      io::json l;
      l["R"] = io::matrix_to_json(lp.r);
      l["U"] = io::matrix_to_json(lp.u);
      l["M"] = io::matrix_to_json(lp.m);
      l["theta"] = lp.theta;
      l["rho"] = lp.rho;
      layers.push_back(std::move(l));
    }
    v["layers"] = std::move(layers);
    views.push_back(std::move(v));
  }
  j["views"] = std::move(views);
  j["fusion_weights_snapshot"] = p.fusion_snapshot;
  j["centers"] = io::matrix_to_json(ckpt.centers.centers);
  j["config"] = ckpt.config;
  return j;
}

Checkpoint checkpoint_from_json(const io::json& j) {
  try {
    if (j.value("format", std::string()) != "openviewer-checkpoint") {
      throw DataError("checkpoint: not an openviewer checkpoint");
    }
    const int schema = j.at("schema_version").get<int>();
    if (schema != kSchemaVersion) {
      throw DataError("checkpoint: schema version " + std::to_string(schema) +
                      " is not supported by " + version_info());
    }
    Checkpoint c;
    c.params.classes = j.at("classes").get<int>();
    const std::string axis = j.at("group_axis").get<std::string>();
    if (axis != "columns" && axis != "rows") throw DataError("checkpoint: bad group_axis");
    c.params.group_axis = axis == "columns" ? GroupAxis::columns : GroupAxis::rows;
    c.known_classes = j.at("known_classes").get<std::vector<int>>();
    for (const io::json& v : j.at("views")) {
      ViewParams vp;
      vp.d_init = io::matrix_from_json(v.at("D_init"), "D_init");
      for (const io::json& l : v.at("layers")) {
        LayerParams lp;
        lp.r = io::matrix_from_json(l.at("R"), "R");
        lp.u = io::matrix_from_json(l.at("U"), "U");
        lp.m = io::matrix_from_json(l.at("M"), "M");
        lp.theta = l.at("theta").get<double>();
        lp.rho = l.at("rho").get<double>();
        vp.layers.push_back(std::move(lp));
      }
      c.params.views.push_back(std::move(vp));
    }
    c.params.fusion_snapshot = j.at("fusion_weights_snapshot").get<std::vector<double>>();
    c.centers.centers = io::matrix_from_json(j.at("centers"), "centers");
    c.config = j.at("config");
    c.params.validate();
    if (c.params.layer_count() != j.at("layers").get<std::size_t>() ||
        c.params.view_dims() != j.at("view_dims").get<std::vector<std::size_t>>()) {
      throw DimensionError("checkpoint: recorded dims disagree with stored matrices");
    }
    if (c.centers.centers.rows() != c.params.classes ||
        c.centers.centers.cols() != c.params.classes) {
      throw DimensionError("checkpoint: centers must be " + std::to_string(c.params.classes) +
                           "x" + std::to_string(c.params.classes));
    }
    if (static_cast<int>(c.known_classes.size()) != c.params.classes) {
      throw DimensionError("checkpoint: known_classes length disagrees with classes");
    }
    return c;
  } catch (const io::json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  io::write_text_atomic(path, checkpoint_to_json(ckpt).dump(1) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  io::json j;
  try {
    j = io::json::parse(io::read_text(path));
  } catch (const io::json::parse_error& e) {
    throw DataError("checkpoint '" + path.string() + "' could not be parsed: " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace openviewer

#include "openviewer/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "openviewer/errors.hpp"
#include "openviewer/pseudo_gen.hpp"
#include "openviewer/rng.hpp"
#include "openviewer/spectral.hpp"
#include "openviewer/synthgen.hpp"

namespace openviewer {

std::string to_string(ScoreRule r) { return r == ScoreRule::softmax ? "softmax" : "logit_norm"; }

ScoreRule score_rule_from_string(const std::string& s) {
  if (s == "softmax") return ScoreRule::softmax;
  if (s == "logit_norm") return ScoreRule::logit_norm;
  throw ConfigError("unknown score rule '" + s + "' (expected softmax or logit_norm)");
}

std::vector<ScoredPrediction> score_test_set(const UnfoldParams& params, const MultiViewDataset& ds,
                                             const OpennessSplit& split, Ablation ablation,
                                             ScoreRule rule, Matrix* fused) {
  validate_split(ds, split);
  if (static_cast<int>(split.known_classes.size()) != params.classes) {
    throw DimensionError("score_test_set: parameters have " + std::to_string(params.classes) +
                         " classes, split has " + std::to_string(split.known_classes.size()) +
                         " known classes");
  }
  if (params.view_dims() != ds.view_dims()) {
    throw DimensionError("score_test_set: parameter view dims do not match the dataset");
  }
  const Batch b = gather_batch(ds, split, split.test_idx);
  ForwardOptions opt;
  opt.ablation = ablation;
  opt.weights = WeightsMode::snapshot;
  const Matrix z = forward_values(params, b.views, opt);
  const std::vector<Prediction> pred = predict(z);
  std::vector<ScoredPrediction> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ScoredPrediction& s = out[i];
    s.index = b.source[i];
    s.predicted = pred[i].label;
    if (rule == ScoreRule::softmax) {
      s.confidence = pred[i].confidence;
    } else {
      const double n = z.row(static_cast<Eigen::Index>(i)).norm();
      s.confidence = n / (1.0 + n);
    }
    s.truth = b.labels[i];
    s.unknown = b.labels[i] == params.classes;
  }
  if (fused != nullptr) *fused = z;
  return out;
}

OscrCurve oscr_curve(std::span<const ScoredPrediction> preds) {
  std::size_t known = 0, unknown = 0;
  for (const ScoredPrediction& p : preds) (p.unknown ? unknown : known) += 1;
  if (known == 0 || unknown == 0) {
    throw DomainError("oscr_curve: need at least one known and one unknown sample");
  }
  std::vector<std::size_t> order(preds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].confidence > preds[b].confidence;
  });
  OscrCurve curve;
  std::size_t correct = 0, false_pos = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double tau = preds[order[k]].confidence;
    for (; k < order.size() && preds[order[k]].confidence == tau; ++k) {
      const ScoredPrediction& p = preds[order[k]];
      if (p.unknown) {
        ++false_pos;
      } else if (p.predicted == p.truth) {
        ++correct;
      }
    }
    curve.points.push_back({tau, static_cast<double>(correct) / static_cast<double>(known),
                            static_cast<double>(false_pos) / static_cast<double>(unknown)});
  }
  return curve;
}

double ccr_at_fpr(const OscrCurve& curve, double target_fpr) {
  if (!(target_fpr > 0.0 && target_fpr <= 1.0)) {
    throw DomainError("ccr_at_fpr: target must lie in (0, 1]");
  }
  double best = 0.0;
  for (const OscrPoint& p : curve.points) {
    if (p.fpr <= target_fpr) best = std::max(best, p.ccr);
  }
  return best;
}

ContractionReport contraction_diagnostic(const UnfoldParams& params, std::size_t view,
                                         std::size_t layer, std::size_t trials,
                                         std::uint64_t seed) {
  if (trials < 1) throw DomainError("contraction_diagnostic: trials must be >= 1");
  if (view >= params.view_count() || layer >= params.layer_count()) {
    throw DimensionError("contraction_diagnostic: view/layer out of range");
  }
  const ViewParams& vp = params.views[view];
  const LayerParams& lp = vp.layers[layer];
  Rng rng = make_rng(seed, "contraction", view * 64 + layer);
  std::normal_distribution<double> normal;
  const Eigen::Index n = 16, c = params.classes;
  Matrix x(n, vp.d_init.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  const Matrix injected = x * vp.d_init.transpose() * lp.u;

  ContractionReport r;
  r.r_norm = spectral_norm(lp.r);
  r.contractive = r.r_norm < 1.0;
  r.trials = trials;
  std::uniform_real_distribution<double> log_scale(-3.0, 1.0);
  for (std::size_t t = 0; t < trials; ++t) {
    const double s1 = std::pow(10.0, log_scale(rng)), s2 = std::pow(10.0, log_scale(rng));
    Matrix z1(n, c), z2(n, c);
    for (Eigen::Index i = 0; i < z1.size(); ++i) z1.data()[i] = s1 * normal(rng);
    for (Eigen::Index i = 0; i < z2.size(); ++i) z2.data()[i] = z1.data()[i] + s2 * normal(rng);
    const double dz = (z1 - z2).norm();
    if (dz == 0.0) continue;
    const Matrix p1 = soft_threshold(z1 * lp.r + injected, lp.theta);
    const Matrix p2 = soft_threshold(z2 * lp.r + injected, lp.theta);
    r.max_ratio = std::max(r.max_ratio, (p1 - p2).norm() / dz);
  }
  r.bound_holds = r.max_ratio <= r.r_norm + 1e-9;
  return r;
}

std::vector<ScalingRow> scaling_benchmark(const ScalingSpec& spec) {
  if (spec.n.empty() || spec.repeats < 1) throw DomainError("scaling_benchmark: empty grid");
  AdmmConfig admm;
  const std::vector<std::size_t> dims(spec.views, spec.dim);
  const UnfoldParams params = init_params(dims, spec.classes, spec.layers, admm, spec.seed);
  const LossConfig loss;
  std::vector<ScalingRow> rows;
  for (std::size_t n : spec.n) {
    Rng rng = make_rng(spec.seed, "scaling", n);
    std::normal_distribution<double> normal;
    std::vector<Matrix> views;
    for (std::size_t v = 0; v < spec.views; ++v) {
      Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.dim));
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
      views.push_back(std::move(x));
    }
    std::vector<int> labels(n);
    std::vector<std::uint8_t> pseudo(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
    }
    const Matrix centers = Matrix::Zero(spec.classes, spec.classes);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < spec.repeats; ++r) {
      const auto start = std::chrono::steady_clock::now();
      ad::Tape tape;
      const ParamNodes nodes = bind_leaves(tape, params);
      ForwardOptions opt;
      opt.labels = labels;
      const ForwardResult fwd = forward(tape, params, nodes, views, opt);
      const TotalLoss l = total_loss(fwd.z_fused, labels, pseudo, centers, loss);
      tape.backward(l.total);
      best = std::min(best,
                      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    ScalingRow row;
    row.n = n;
    row.seconds = best;
    row.ratio = rows.empty() ? 0.0 : best / rows.back().seconds;
    rows.push_back(row);
  }
  return rows;
}

GradcheckResult gradient_check(const GradcheckSpec& spec) {
  const auto start = std::chrono::steady_clock::now();
  constexpr int kClasses = 5;
  SynthSpec synth;
  synth.classes = kClasses;
  synth.samples_per_class = 2;
  synth.views = 2;
  synth.dims = {12, 10};
  synth.jitter = 0.3;
  synth.seed = spec.seed;
  const MultiViewDataset ds = generate_synthetic(synth).dataset;

  Batch known;
  const std::vector<std::size_t> rows = {0, 2, 4, 6, 8, 1, 3};
  for (std::size_t v = 0; v < ds.view_count(); ++v) {
    Matrix x(static_cast<Eigen::Index>(rows.size()), ds.views[v].cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      x.row(static_cast<Eigen::Index>(k)) = ds.views[v].row(static_cast<Eigen::Index>(rows[k]));
    }
    known.views.push_back(std::move(x));
  }
  for (std::size_t r : rows) {
    known.labels.push_back(ds.labels[r]);
    known.is_pseudo.push_back(0);
    known.source.push_back(r);
  }
  MixConfig mix;
  mix.pseudo_ratio = 3.0 / 7.0;
  mix.unknown_label = kClasses;
  Rng rng = make_rng(spec.seed, "gradcheck");
  const Batch batch = generate_pseudo(known, mix, rng);

  AdmmConfig admm;
  admm.rank = kClasses;
  admm.max_iter = spec.layers;
  admm.tol = 1e-300;
  admm.seed = spec.seed;
  AdmmHistory history;
  solve(batch.views, admm, &history);
  UnfoldParams params = analytic_params(history, admm, spec.layers);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.05, 0.3);
  for (ViewParams& vp : params.views) {
    for (Eigen::Index i = 0; i < vp.d_init.size(); ++i) vp.d_init.data()[i] += 0.05 * normal(rng);
    for (LayerParams& lp : vp.layers) {
      for (Matrix* m : {&lp.r, &lp.u, &lp.m}) {
        for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] += 0.05 * normal(rng);
      }
      lp.theta = unit(rng);
      lp.rho = unit(rng);
    }
  }
  Matrix centers(kClasses, kClasses);
  for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = normal(rng);

  ForwardOptions base;
  base.ablation = spec.ablation;
  base.labels = batch.labels;
  std::vector<LayerState> trace;
  forward_values(params, batch.views, base, &trace);
  ForwardOptions fixed;
  fixed.ablation = spec.ablation;
  fixed.weights = WeightsMode::fixed;
  fixed.fixed_weights = trace.back().weights;

  LossConfig loss;
  const ad::LossBuilder builder = [&](ad::Tape& tape, std::span<const ad::Var> leaves) {
    const ParamNodes nodes = bind_params(params, leaves);
    const ForwardResult fwd = forward(tape, params, nodes, batch.views, fixed);
    return total_loss(fwd.z_fused, batch.labels, batch.is_pseudo, centers, loss).total;
  };
  GradcheckResult out;
  out.report = ad::finite_diff_check(builder, flatten(params), spec.eps);
  out.names = flatten_names(params);
  out.rows = batch.size();
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

BoundCheckReport bound_spot_check(std::size_t batches, const LossConfig& loss, std::uint64_t seed) {
  constexpr int kClasses = 5;
  Rng rng = make_rng(seed, "bound-check");
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> size(4, 60), label(0, kClasses - 1);
  std::uniform_real_distribution<double> log_scale(-2.0, 1.5), unit(0.0, 1.0);
  BoundCheckReport r;
  for (std::size_t b = 0; b < batches; ++b) {
    const int n = size(rng);
    const double s = std::pow(10.0, log_scale(rng));
    Matrix z(n, kClasses), centers(kClasses, kClasses);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = s * normal(rng);
    for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = s * normal(rng);
    std::vector<int> labels(static_cast<std::size_t>(n));
    std::vector<std::uint8_t> pseudo(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      pseudo[k] = i > 0 && unit(rng) < 0.3;
      labels[k] = pseudo[k] ? kClasses : label(rng);
    }
    ad::Tape tape;
    const ad::Var zv = tape.leaf(z);
    const TotalLoss l = total_loss(zv, labels, pseudo, centers, loss);
    tape.backward(l.total);
    const double measured = zv.grad().norm();
    const double bound = gradient_bound(z, labels, pseudo, centers, loss);
    r.max_ratio = std::max(r.max_ratio, measured / bound);
    if (!(measured <= bound)) ++r.violations;
    ++r.checked;
  }
  return r;
}

EvalSummary summarize(std::span<const ScoredPrediction> preds, const OscrCurve& curve,
                      std::span<const double> targets) {
  EvalSummary s;
  std::size_t correct = 0;
  for (const ScoredPrediction& p : preds) {
    if (p.unknown) {
      ++s.unknown;
    } else {
      ++s.known;
      correct += p.predicted == p.truth;
    }
  }
  s.closed_set_accuracy = s.known ? static_cast<double>(correct) / static_cast<double>(s.known) : 0.0;
  for (double t : targets) {
    s.targets.push_back(t);
    s.ccr.push_back(ccr_at_fpr(curve, t));
  }
  return s;
}

io::json summary_to_json(const EvalSummary& s) {
  io::json j;
  io::json ccr = io::json::object();
  for (std::size_t k = 0; k < s.targets.size(); ++k) ccr[io::format_double(s.targets[k])] = s.ccr[k];
  j["ccr_at_fpr"] = std::move(ccr);
  j["known_test"] = s.known;
  j["unknown_test"] = s.unknown;
  j["closed_set_accuracy"] = s.closed_set_accuracy;
  return j;
}

std::string curve_to_csv(const OscrCurve& curve) {
  std::ostringstream out;
  out << "threshold,ccr,fpr\n";
  for (const OscrPoint& p : curve.points) {
    out << io::format_double(p.threshold) << ',' << io::format_double(p.ccr) << ','
        << io::format_double(p.fpr) << '\n';
  }
  return out.str();
}

void write_eval_report(const std::filesystem::path& dir, std::span<const ScoredPrediction> preds,
                       const OscrCurve& curve, const EvalSummary& summary, const Matrix& fused) {
  io::write_text_atomic(dir / "oscr.csv", curve_to_csv(curve));
  io::write_text_atomic(dir / "summary.json", summary_to_json(summary).dump(2) + "\n");
  std::ostringstream p;
  p << "index,predicted,confidence,truth,unknown\n";
  for (const ScoredPrediction& s : preds) {
    p << s.index << ',' << s.predicted << ',' << io::format_double(s.confidence) << ','
      << s.truth << ',' << (s.unknown ? 1 : 0) << '\n';
  }
  io::write_text_atomic(dir / "predictions.csv", p.str());
  io::write_text_atomic(dir / "fused.csv", io::matrix_to_csv(fused));
  io::write_text_atomic(dir / "similarity.csv", io::matrix_to_csv(fused * fused.transpose()));
}

}  // namespace openviewer

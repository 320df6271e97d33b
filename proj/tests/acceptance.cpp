// One PASS/FAIL line per acceptance criterion. Exit status 0 iff all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "oscr_oracle.hpp"
#include "openviewer/admm_oracle.hpp"
#include "openviewer/config.hpp"
#include "openviewer/eval.hpp"
#include "openviewer/io.hpp"
#include "openviewer/runtime.hpp"
#include "openviewer/synthgen.hpp"
#include "openviewer/trainer.hpp"
#include "openviewer/unfold_net.hpp"

using namespace openviewer;

namespace {

// Tolerances.
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 30.0;
constexpr double kEquivTol = 1e-10;
constexpr double kReconTol = 0.05;
constexpr double kF1Min = 0.9;
constexpr std::size_t kOracleIters = 300;
constexpr double kOracleSeconds = 60.0;
constexpr double kAblationGap = 0.05;
constexpr double kAblationSeconds = 300.0;
constexpr std::size_t kContractionTrials = 1000;
constexpr double kContractionSlack = 1e-9;
constexpr std::size_t kOscrSets = 1000;
constexpr double kScalingRatio = 2.6;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) { return io::format_double(v); }

// The default experiment: synth, split and train with every default.
struct DefaultRun {
  SynthResult synth;
  OpennessSplit split;
  TrainResult result;
  std::string checkpoint;
  std::string log;
  std::string summary;
};

DefaultRun default_run() {
  RunConfig cfg;
  cfg.propagate();
  DefaultRun r;
  r.synth = generate_synthetic(cfg.synth);
  r.split = openness_split(r.synth.dataset, cfg.split.openness, cfg.split.ratios, cfg.seed);
  r.result = train(r.synth.dataset, r.split, cfg.train);
  Checkpoint ck{r.result.params, r.result.centers, to_json(cfg), r.split.known_classes};
  r.checkpoint = checkpoint_to_json(ck).dump(2);
  r.log = r.result.log.to_csv(false);
  auto preds = score_test_set(r.result.params, r.synth.dataset, r.split, cfg.train.ablation,
                              cfg.eval.score);
  auto curve = oscr_curve(preds);
  r.summary = summary_to_json(summarize(preds, curve, cfg.eval.fpr_targets)).dump(2);
  return r;
}

Outcome gradcheck() {
  auto t = Clock::now();
  GradcheckSpec spec;
  auto g = gradient_check(spec);
  const double s = since(t);
  return {g.report.max_rel_error < kGradTol && s < kGradSeconds,
          "max rel error " + fmt(g.report.max_rel_error) + " over " +
              std::to_string(g.report.checked) + " entries, " + fmt(s) + " s"};
}

Outcome equivalence() {
  auto r = generate_synthetic(SynthSpec{});
  const auto& x = r.dataset.views;
  AdmmConfig cfg;
  cfg.rank = 5;
  cfg.tol = std::numeric_limits<double>::min();
  double worst_step = 0.0, worst_stack = 0.0;

  // single modules against single solver steps from a mid-run state
  {
    cfg.max_iter = 3;
    AdmmHistory h;
    solve(x, cfg, &h);
    for (std::size_t v = 0; v < 2; ++v) {
      const ViewFactors& f = h[2][v];
      const double l = f.lipschitz;
      const Matrix i5 = Matrix::Identity(5, 5);
      ad::Tape t;
      auto X = t.constant(x[v]);
      Matrix z = rf_forward(t.constant(f.z), X, t.constant(f.e), t.constant(f.d),
                            t.constant(i5 - f.d * f.d.transpose() / l), t.constant(i5 / l),
                            t.leaf_scalar(cfg.alpha / l)).value();
      ViewFactors g = f;
      g.z = z_step(f, x[v], cfg);
      Matrix m = (g.z.transpose() * g.z + cfg.beta * i5).llt().solve(i5);
      Matrix d = cd_forward(t.constant(z), X, t.constant(f.e), t.constant(m)).value();
      Matrix d_ref = d_step(g, x[v], cfg);
      g.d = d_ref;
      g.lipschitz = lipschitz(d_ref);
      Matrix e = dn_forward(X, t.constant(z), t.constant(d), t.leaf_scalar(cfg.gamma / g.lipschitz)).value();
      worst_step = std::max({worst_step, (z - g.z).cwiseAbs().maxCoeff(),
                             (d - d_ref).cwiseAbs().maxCoeff(),
                             (e - e_step(g, x[v], cfg)).cwiseAbs().maxCoeff()});
    }
  }
  for (std::size_t layers : {1u, 2u, 4u}) {
    cfg.max_iter = layers;
    AdmmHistory h;
    solve(x, cfg, &h);
    auto p = analytic_params(h, cfg, layers);
    ForwardOptions opt;
    opt.weights = WeightsMode::fixed;
    opt.fixed_weights = {0.5, 0.5};
    std::vector<LayerState> trace;
    forward_values(p, x, opt, &trace);
    for (std::size_t l = 0; l < layers; ++l)
      for (std::size_t v = 0; v < 2; ++v)
        worst_stack = std::max({worst_stack, (trace[l].z[v] - h[l + 1][v].z).cwiseAbs().maxCoeff(),
                                (trace[l].d[v] - h[l + 1][v].d).cwiseAbs().maxCoeff(),
                                (trace[l].e[v] - h[l + 1][v].e).cwiseAbs().maxCoeff()});
  }
  return {worst_step <= kEquivTol && worst_stack <= kEquivTol,
          "module max diff " + fmt(worst_step) + ", L in {1,2,4} max diff " + fmt(worst_stack)};
}

Outcome oracle() {
  auto t = Clock::now();
  auto r = generate_synthetic(SynthSpec{});
  AdmmConfig cfg;
  cfg.rank = 5;
  auto st = solve(r.dataset.views, cfg);
  const double s = since(t);
  const double rel = relative_reconstruction_error(st.views, r.dataset.views);
  double f1 = 1.0;
  for (std::size_t v = 0; v < 2; ++v)
    f1 = std::min(f1, support_f1(group_support(st.views[v].e, cfg.group_axis), r.truth.noise_columns[v]));
  const bool down = st.objective_trace.back() <= st.objective_trace.front();
  return {rel <= kReconTol && f1 >= kF1Min && st.iterations <= kOracleIters && down && s < kOracleSeconds,
          "rel error " + fmt(rel) + ", min F1 " + fmt(f1) + ", " + std::to_string(st.iterations) +
              " iterations, objective " + fmt(st.objective_trace.front()) + " -> " +
              fmt(st.objective_trace.back()) + ", " + fmt(s) + " s"};
}

// Fixed benchmark: 7 classes, openness 0.1, seeds 0..4; two-layer warm-started
// networks trained with a clipped step.
Outcome ablation() {
  auto t = Clock::now();
  double mean[3] = {0, 0, 0};
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    SynthSpec sp;
    sp.classes = 7;
    sp.seed = static_cast<std::uint64_t>(s);
    auto r = generate_synthetic(sp);
    auto split = openness_split(r.dataset, 0.1, {0.5, 0.1, 0.4}, sp.seed);
    for (int k = 0; k < 3; ++k) {
      TrainConfig c;
      c.seed = sp.seed;
      c.layers = 2;
      c.warm_start = true;
      c.grad_clip = 1.0;
      c.batch_size = 8;
      if (k == 1) c.loss.lambda1 = 0.0;
      if (k == 2) c.ablation = Ablation::no_dn;
      auto res = train(r.dataset, split, c);
      auto preds = score_test_set(res.params, r.dataset, split, c.ablation);
      mean[k] += ccr_at_fpr(oscr_curve(preds), 0.1) / seeds;
    }
  }
  const double s = since(t);
  const double a = mean[0] - mean[1], b = mean[0] - mean[2];
  return {a >= kAblationGap && b >= kAblationGap && s < kAblationSeconds,
          "CCR@0.1 full " + fmt(mean[0]) + ", lambda1=0 " + fmt(mean[1]) + ", no_dn " +
              fmt(mean[2]) + " (gaps " + fmt(a) + ", " + fmt(b) + "), " + fmt(s) + " s"};
}

Outcome bound(const DefaultRun& r) {
  const auto& log = r.result.log;
  return {log.bound_checks > 0 && log.bound_violations == 0,
          std::to_string(log.bound_violations) + " violations in " +
              std::to_string(log.bound_checks) + " batches, max ratio " + fmt(log.max_bound_ratio)};
}

Outcome contraction(const DefaultRun& r) {
  const auto& p = r.result.params;
  std::size_t checked = 0;
  bool ok = true;
  double worst = -1.0;
  std::vector<UnfoldParams> cases = {p};
  // a contractive configuration: the closed-form initialization
  cases.push_back(init_params(r.synth.dataset.view_dims(), 3, 2, AdmmConfig{}, 1));
  for (const auto& params : cases)
    for (std::size_t v = 0; v < params.view_count(); ++v)
      for (std::size_t l = 0; l < params.layer_count(); ++l) {
        auto c = contraction_diagnostic(params, v, l, kContractionTrials, 0);
        if (!c.contractive) continue;
        ++checked;
        ok = ok && c.max_ratio <= c.r_norm + kContractionSlack;
        worst = std::max(worst, c.max_ratio - c.r_norm);
      }
  return {ok && checked > 0, std::to_string(checked) + " contractive layers x " +
                                 std::to_string(kContractionTrials) +
                                 " trials, max(ratio - ||R||) " + fmt(worst)};
}

Outcome stabilization(const DefaultRun& r) {
  const auto& e = r.result.log.epochs;
  if (e.size() < 20) return {false, "fewer than 20 epochs"};
  bool finite = true;
  for (const auto& x : e)
    finite = finite && std::isfinite(x.total) && std::isfinite(x.known) &&
             std::isfinite(x.unknown) && std::isfinite(x.center);
  double first = 0, last = 0;
  for (std::size_t k = 0; k < 10; ++k) {
    first += e[k].total / 10;
    last += e[e.size() - 10 + k].total / 10;
  }
  return {finite && last < first,
          "first-10 mean " + fmt(first) + ", last-10 mean " + fmt(last) + (finite ? "" : ", non-finite loss")};
}

Outcome oscr() {
  std::size_t mismatch = 0, nonmono = 0;
  for (std::size_t s = 0; s < kOscrSets; ++s) {
    auto p = testutil::random_predictions(1000 + s);
    auto c = oscr_curve(p);
    auto b = testutil::brute_oscr(p);
    bool same = c.points.size() == b.size();
    for (std::size_t k = 0; same && k < b.size(); ++k)
      same = c.points[k].threshold == b[k].threshold && c.points[k].ccr == b[k].ccr &&
             c.points[k].fpr == b[k].fpr;
    for (double t : {0.005, 0.01, 0.05, 0.1, 0.5, 1.0})
      same = same && ccr_at_fpr(c, t) == testutil::brute_ccr_at(b, t);
    mismatch += !same;
    for (std::size_t k = 1; k < c.points.size(); ++k) {
      const auto &a = c.points[k - 1], &q = c.points[k];
      if (q.threshold >= a.threshold || q.ccr < a.ccr || q.fpr < a.fpr || q.ccr > 1 || q.fpr > 1) {
        ++nonmono;
        break;
      }
    }
  }
  return {mismatch == 0 && nonmono == 0,
          std::to_string(kOscrSets) + " sets, " + std::to_string(mismatch) + " mismatches, " +
              std::to_string(nonmono) + " monotonicity violations"};
}

Outcome scaling() {
  auto rows = scaling_benchmark(ScalingSpec{});
  bool ok = rows.size() == 3;
  std::string d;
  for (const auto& r : rows) {
    d += "n=" + std::to_string(r.n) + " " + fmt(r.seconds) + "s";
    if (r.ratio > 0) {
      d += " (x" + fmt(r.ratio) + ")";
      ok = ok && r.ratio <= kScalingRatio;
    }
    d += "; ";
  }
  return {ok, d};
}

Outcome determinism(const DefaultRun& a) {
  DefaultRun b = default_run();
  const bool ck = a.checkpoint == b.checkpoint, lg = a.log == b.log, sm = a.summary == b.summary;
  return {ck && lg && sm, std::string("checkpoint ") + (ck ? "identical" : "differs") + ", log " +
                              (lg ? "identical" : "differs") + ", eval summary " +
                              (sm ? "identical" : "differs")};
}

}  // namespace

int main() {
  set_quiet(true);
  report(1, "gradient check", gradcheck);
  report(2, "unfolded/solver equivalence", equivalence);
  report(3, "solver planted recovery", oracle);
  report(4, "open-set ablation trend", ablation);

  DefaultRun run;
  bool have_run = true;
  std::string run_error;
  try {
    run = default_run();
  } catch (const std::exception& e) {
    have_run = false;
    run_error = e.what();
  }
  auto with_run = [&](Outcome (*f)(const DefaultRun&)) {
    return [&, f]() -> Outcome {
      if (!have_run) return {false, "default run failed: " + run_error};
      return f(run);
    };
  };
  report(5, "gradient bound on every batch", with_run(bound));
  report(6, "contraction diagnostic", with_run(contraction));
  report(7, "loss stabilization", with_run(stabilization));
  report(8, "OSCR against brute force", oscr);
  report(9, "complexity scaling", scaling);
  report(10, "determinism", with_run(determinism));
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

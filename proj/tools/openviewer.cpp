// openviewer command-line entry point.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error (or a failed check).

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "openviewer/admm_oracle.hpp"
#include "openviewer/config.hpp"
#include "openviewer/dataset.hpp"
#include "openviewer/errors.hpp"
#include "openviewer/eval.hpp"
#include "openviewer/io.hpp"
#include "openviewer/runtime.hpp"
#include "openviewer/synthgen.hpp"
#include "openviewer/trainer.hpp"
#include "openviewer/version.hpp"

namespace fs = std::filesystem;
using namespace openviewer;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig c = g.config.empty() ? RunConfig{} : load_run_config(g.config);
  if (g.seed) c.seed = *g.seed;
  c.propagate();
  c.validate();
  return c;
}

fs::path require_out(const Globals& g, const char* command) {
  if (g.out.empty()) throw ConfigError(std::string(command) + ": --out is required");
  fs::create_directories(g.out);
  return g.out;
}

MultiViewDataset prepared(const std::string& manifest, const OpennessSplit& split, bool normalize) {
  MultiViewDataset ds = load_dataset(manifest);
  validate_split(ds, split);
  if (normalize) ds = zscore_normalize(ds, split.train_idx).first;
  return ds;
}

int cmd_synth(const Globals& g, const std::string& spec_path) {
  const RunConfig cfg = resolve_config(g);
  SynthSpec spec = cfg.synth;
  if (!spec_path.empty()) {
    spec = synth_spec_from_json(io::json::parse(io::read_text(spec_path)));
    if (g.seed) spec.seed = *g.seed;
  }
  spec.validate();
  const fs::path out = require_out(g, "synth");
  const fs::path manifest = save_synthetic(generate_synthetic(spec), out);
  std::cout << manifest.string() << "\n";
  return 0;
}

int cmd_split(const Globals& g, const std::string& manifest, std::optional<double> openness) {
  const RunConfig cfg = resolve_config(g);
  const MultiViewDataset ds = load_dataset(manifest);
  const OpennessSplit split =
      openness_split(ds, openness.value_or(cfg.split.openness), cfg.split.ratios, cfg.seed);
  const fs::path out = require_out(g, "split");
  save_split(split, out / "split.json");
  std::cout << "known classes " << split.known_classes.size() << ", unknown "
            << split.unknown_classes.size() << ", openness "
            << io::format_double(split.openness_achieved) << " -> " << (out / "split.json").string()
            << "\n";
  return 0;
}

int cmd_train(const Globals& g, const std::string& manifest, const std::string& split_path) {
  const RunConfig cfg = resolve_config(g);
  const OpennessSplit split = load_split(split_path);
  const MultiViewDataset ds = prepared(manifest, split, cfg.split.normalize);
  const fs::path out = require_out(g, "train");
  TrainResult r = train(ds, split, cfg.train, [](const EpochLog& e) {
    if (!quiet()) {
      std::ostringstream line;
      line << "epoch " << e.epoch << " loss " << io::format_double(e.total) << " val_acc "
           << io::format_double(e.val_accuracy);
      info(line.str());
    }
  });
  Checkpoint ckpt;
  ckpt.params = r.params;
  ckpt.centers = r.centers;
  ckpt.config = to_json(cfg);
  ckpt.known_classes = split.known_classes;
  const fs::path ckpt_path = out / "checkpoint.json";
  save_checkpoint(ckpt, ckpt_path);
  r.log.checkpoint_path = ckpt_path.string();
  io::write_text_atomic(out / "train_log.csv", r.log.to_csv(true));
  io::json w;
  w["fusion_weights"] = r.params.fusion_snapshot;
  w["bound_checks"] = r.log.bound_checks;
  w["bound_violations"] = r.log.bound_violations;
  io::write_text_atomic(out / "fusion_weights.json", w.dump(2) + "\n");
  std::cout << "checkpoint " << ckpt_path.string() << ", final loss "
            << io::format_double(r.log.epochs.back().total) << ", bound violations "
            << r.log.bound_violations << "/" << r.log.bound_checks << "\n";
  return 0;
}

int cmd_eval(const Globals& g, const std::string& ckpt_path, const std::string& manifest,
             const std::string& split_path) {
  const RunConfig cfg = resolve_config(g);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const RunConfig trained = run_config_from_json(ckpt.config);
  const OpennessSplit split = load_split(split_path);
  if (split.known_classes != ckpt.known_classes) {
    throw DimensionError("eval: checkpoint known classes do not match the split");
  }
  const MultiViewDataset ds = prepared(manifest, split, trained.split.normalize);
  Matrix fused;
  const std::vector<ScoredPrediction> preds =
      score_test_set(ckpt.params, ds, split, trained.train.ablation, cfg.eval.score, &fused);
  const OscrCurve curve = oscr_curve(preds);
  const EvalSummary summary = summarize(preds, curve, cfg.eval.fpr_targets);
  const fs::path out = require_out(g, "eval");
  write_eval_report(out, preds, curve, summary, fused);
  std::cout << summary_to_json(summary).dump(2) << "\n";
  return 0;
}

int cmd_oracle(const Globals& g, const std::string& manifest, const std::string& planted_path) {
  const RunConfig cfg = resolve_config(g);
  const MultiViewDataset ds = load_dataset(manifest);
  AdmmConfig ac = cfg.admm;
  if (ac.rank == 0) ac.rank = ds.class_count;
  const AdmmState state = solve(ds.views, ac);
  const fs::path out = require_out(g, "oracle");
  std::ostringstream trace;
  trace << "iteration,objective\n";
  for (std::size_t k = 0; k < state.objective_trace.size(); ++k) {
    trace << k << ',' << io::format_double(state.objective_trace[k]) << '\n';
  }
  io::write_text_atomic(out / "objective_trace.csv", trace.str());
  io::json summary;
  summary["iterations"] = state.iterations;
  summary["objective_initial"] = state.objective_trace.front();
  summary["objective_final"] = state.objective_trace.back();
  summary["relative_reconstruction_error"] = relative_reconstruction_error(state.views, ds.views);
  for (std::size_t v = 0; v < state.views.size(); ++v) {
    const std::string s = std::to_string(v);
    io::write_matrix_csv(out / ("z_" + s + ".csv"), state.views[v].z);
    io::write_matrix_csv(out / ("d_" + s + ".csv"), state.views[v].d);
    io::write_matrix_csv(out / ("e_" + s + ".csv"), state.views[v].e);
  }
  if (!planted_path.empty()) {
    const io::json planted = io::json::parse(io::read_text(planted_path));
    const auto truth = planted.at("noise_columns").get<std::vector<std::vector<int>>>();
    io::json f1 = io::json::array();
    for (std::size_t v = 0; v < state.views.size() && v < truth.size(); ++v) {
      f1.push_back(support_f1(group_support(state.views[v].e, ac.group_axis), truth[v]));
    }
    summary["noise_support_f1"] = f1;
  }
  io::write_text_atomic(out / "oracle_summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_gradcheck(const Globals& g, std::size_t layers, double eps, const std::string& ablation) {
  GradcheckSpec spec;
  spec.seed = g.seed.value_or(7);
  spec.layers = layers;
  spec.eps = eps;
  spec.ablation = ablation_from_string(ablation);
  const GradcheckResult r = gradient_check(spec);
  for (std::size_t k = 0; k < r.names.size(); ++k) {
    std::cout << r.names[k] << " " << io::format_double(r.report.per_param_max[k]) << "\n";
  }
  std::cout << "checked " << r.report.checked << ", skipped (kink) " << r.report.skipped_kink
            << ", rows " << r.rows << "\n";
  std::cout << "max relative error " << io::format_double(r.report.max_rel_error) << "\n";
  return r.report.max_rel_error < 1e-4 ? 0 : 2;
}

int cmd_diag(const Globals& g, const std::string& ckpt_path) {
  const RunConfig cfg = resolve_config(g);
  UnfoldParams params;
  if (!ckpt_path.empty()) {
    params = load_checkpoint(ckpt_path).params;
  } else {
    params = init_params(std::vector<std::size_t>{40, 40}, 5, cfg.train.layers, cfg.admm, cfg.seed);
  }
  io::json report;
  bool ok = true;
  io::json contraction = io::json::array();
  for (std::size_t v = 0; v < params.view_count(); ++v) {
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
      const ContractionReport c =
          contraction_diagnostic(params, v, l, cfg.diag.contraction_trials, cfg.seed);
      contraction.push_back({{"view", v},
                             {"layer", l},
                             {"r_norm", c.r_norm},
                             {"contractive", c.contractive},
                             {"max_ratio", c.max_ratio},
                             {"bound_holds", c.bound_holds}});
      std::cout << "contraction view " << v << " layer " << l << ": ||R|| "
                << io::format_double(c.r_norm) << ", max ratio " << io::format_double(c.max_ratio)
                << (c.contractive ? "" : " (not contractive)") << "\n";
      ok = ok && (!c.contractive || c.bound_holds);
    }
  }
  report["contraction"] = std::move(contraction);
  const BoundCheckReport b = bound_spot_check(cfg.diag.bound_batches, cfg.loss, cfg.seed);
  report["gradient_bound"] = {
      {"checked", b.checked}, {"violations", b.violations}, {"max_ratio", b.max_ratio}};
  std::cout << "gradient bound: " << b.violations << " violations in " << b.checked
            << " batches, max ratio " << io::format_double(b.max_ratio) << "\n";
  ok = ok && b.violations == 0;
  const std::vector<ScalingRow> rows = scaling_benchmark(cfg.diag.scaling);
  io::json scaling = io::json::array();
  for (const ScalingRow& r : rows) {
    scaling.push_back({{"n", r.n}, {"seconds", r.seconds}, {"ratio", r.ratio}});
    std::cout << "scaling n=" << r.n << " " << io::format_double(r.seconds) << "s ratio "
              << io::format_double(r.ratio) << "\n";
  }
  report["scaling"] = std::move(scaling);
  if (!g.out.empty()) {
    fs::create_directories(g.out);
    io::write_text_atomic(fs::path(g.out) / "diag.json", report.dump(2) + "\n");
  }
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Openness-aware multi-view learning with an unfolded network"};
  app.set_version_flag("--version", version_info());
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "Run configuration JSON")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Experiment seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--quiet", g.quiet, "Suppress warnings and progress");

  std::string spec, manifest, split_path, checkpoint, planted, ablation = "full";
  std::optional<double> openness;
  std::size_t layers = 2;
  double eps = 1e-5;

  auto* synth = app.add_subcommand("synth", "Generate a planted synthetic dataset");
  synth->add_option("--spec", spec, "Synthetic spec JSON")->check(CLI::ExistingFile);

  auto* split = app.add_subcommand("split", "Openness-based known/unknown split");
  split->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  split->add_option("--openness", openness);

  auto* trn = app.add_subcommand("train", "Train the unfolded network");
  trn->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  trn->add_option("--split", split_path)->required()->check(CLI::ExistingFile);

  auto* evl = app.add_subcommand("eval", "Open-set evaluation of a checkpoint");
  evl->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  evl->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  evl->add_option("--split", split_path)->required()->check(CLI::ExistingFile);

  auto* oracle = app.add_subcommand("oracle", "Run the alternating solver on a dataset");
  oracle->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  oracle->add_option("--planted", planted, "planted.json for noise-support F1")
      ->check(CLI::ExistingFile);

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  grad->add_option("--layers", layers)->check(CLI::Range(1, 8));
  grad->add_option("--eps", eps)->check(CLI::Range(1e-7, 1e-3));
  grad->add_option("--ablation", ablation)->check(CLI::IsMember({"full", "no_dn", "no_cd_dn"}));

  auto* diag = app.add_subcommand("diag", "Contraction, gradient bound and scaling diagnostics");
  diag->add_option("--checkpoint", checkpoint)->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    return 1;
  }
  set_quiet(g.quiet);

  try {
    if (synth->parsed()) return cmd_synth(g, spec);
    if (split->parsed()) return cmd_split(g, manifest, openness);
    if (trn->parsed()) return cmd_train(g, manifest, split_path);
    if (evl->parsed()) return cmd_eval(g, checkpoint, manifest, split_path);
    if (oracle->parsed()) return cmd_oracle(g, manifest, planted);
    if (grad->parsed()) return cmd_gradcheck(g, layers, eps, ablation);
    if (diag->parsed()) return cmd_diag(g, checkpoint);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "openviewer/admm_oracle.hpp"
#include "openviewer/config.hpp"
#include "openviewer/errors.hpp"
#include "openviewer/eval.hpp"
#include "openviewer/runtime.hpp"
#include "openviewer/synthgen.hpp"
#include "openviewer/trainer.hpp"
#include "openviewer/version.hpp"

namespace py = pybind11;
using namespace openviewer;

namespace {

MultiViewDataset make_dataset(const std::vector<Matrix>& views, const std::vector<int>& labels,
                              int class_count) {
  MultiViewDataset ds;
  ds.name = "python";
  ds.views = views;
  ds.labels = labels;
  ds.class_count = class_count;
  if (ds.class_count == 0)
    for (int l : labels) ds.class_count = std::max(ds.class_count, l + 1);
  ds.validate();
  return ds;
}

py::dict split_dict(const OpennessSplit& s) {
  py::dict d;
  d["known_classes"] = s.known_classes;
  d["unknown_classes"] = s.unknown_classes;
  d["train_idx"] = s.train_idx;
  d["val_idx"] = s.val_idx;
  d["test_idx"] = s.test_idx;
  d["openness"] = s.openness_achieved;
  return d;
}

py::dict run_experiment(const std::string& config_json) {
  RunConfig cfg = run_config_from_json(io::json::parse(config_json.empty() ? "{}" : config_json));
  SynthResult synth = generate_synthetic(cfg.synth);
  OpennessSplit split = openness_split(synth.dataset, cfg.split.openness, cfg.split.ratios, cfg.seed);
  MultiViewDataset ds = synth.dataset;
  if (cfg.split.normalize) ds = zscore_normalize(ds, split.train_idx).first;
  TrainResult r = train(ds, split, cfg.train);
  auto preds = score_test_set(r.params, ds, split, cfg.train.ablation, cfg.eval.score);
  auto curve = oscr_curve(preds);
  auto summary = summarize(preds, curve, cfg.eval.fpr_targets);
  std::vector<double> losses;
  for (const auto& e : r.log.epochs) losses.push_back(e.total);
  py::dict ccr;
  for (std::size_t k = 0; k < summary.targets.size(); ++k) ccr[py::float_(summary.targets[k])] = summary.ccr[k];
  py::dict out;
  out["ccr_at_fpr"] = ccr;
  out["closed_set_accuracy"] = summary.closed_set_accuracy;
  out["epoch_loss"] = losses;
  out["fusion_weights"] = r.params.fusion_snapshot;
  out["bound_violations"] = r.log.bound_violations;
  out["bound_checks"] = r.log.bound_checks;
  Checkpoint ck{r.params, r.centers, to_json(cfg), split.known_classes};
  out["checkpoint"] = checkpoint_to_json(ck).dump();
  return out;
}

}  // namespace

PYBIND11_MODULE(_openviewer, m) {
  m.doc() = "Openness-aware multi-view learning with an unfolded network";
  set_quiet(true);

  // Translators run newest first, so the base class goes in first.
  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());

  m.attr("__version__") = kVersion;
  m.def("version_info", &version_info);

  m.def("soft_threshold", &soft_threshold, py::arg("a"), py::arg("theta"));
  m.def(
      "group_soft_threshold",
      [](const Matrix& a, double rho, bool rows) {
        return group_soft_threshold(a, rho, rows ? GroupAxis::rows : GroupAxis::columns);
      },
      py::arg("a"), py::arg("rho"), py::arg("rows") = false);
  m.def("openness_value", &openness_value, py::arg("known"), py::arg("total"));

  m.def(
      "synthesize",
      [](int classes, int samples_per_class, std::vector<int> dims, double noise_fraction,
         double jitter, std::uint64_t seed) {
        SynthSpec s;
        s.classes = classes;
        s.samples_per_class = samples_per_class;
        s.views = static_cast<int>(dims.size());
        s.dims = std::move(dims);
        s.noise_fraction = noise_fraction;
        s.jitter = jitter;
        s.seed = seed;
        SynthResult r = generate_synthetic(s);
        py::dict d;
        d["views"] = r.dataset.views;
        d["labels"] = r.dataset.labels;
        d["z"] = r.truth.z;
        d["dictionaries"] = r.truth.dictionary;
        d["noise_columns"] = r.truth.noise_columns;
        return d;
      },
      py::arg("classes") = 5, py::arg("samples_per_class") = 40,
      py::arg("dims") = std::vector<int>{40, 40}, py::arg("noise_fraction") = 0.1,
      py::arg("jitter") = 0.0, py::arg("seed") = 0);

  m.def(
      "openness_split",
      [](const std::vector<Matrix>& views, const std::vector<int>& labels, double openness,
         std::array<double, 3> ratios, std::uint64_t seed) {
        return split_dict(openness_split(make_dataset(views, labels, 0), openness, ratios, seed));
      },
      py::arg("views"), py::arg("labels"), py::arg("openness") = 0.1,
      py::arg("ratios") = std::array<double, 3>{0.1, 0.1, 0.8}, py::arg("seed") = 0);

  m.def(
      "solve",
      [](const std::vector<Matrix>& views, int rank, double alpha, double beta, double gamma,
         std::size_t max_iter, double tol, std::uint64_t seed) {
        AdmmConfig c;
        c.rank = rank;
        c.alpha = alpha;
        c.beta = beta;
        c.gamma = gamma;
        c.max_iter = max_iter;
        c.tol = tol;
        c.seed = seed;
        AdmmState st;
        {
          py::gil_scoped_release release;
          st = solve(views, c);
        }
        py::list z, d, e;
        for (const auto& f : st.views) {
          z.append(f.z);
          d.append(f.d);
          e.append(f.e);
        }
        py::dict out;
        out["z"] = z;
        out["d"] = d;
        out["e"] = e;
        out["objective_trace"] = st.objective_trace;
        out["iterations"] = st.iterations;
        out["relative_error"] = relative_reconstruction_error(st.views, views);
        return out;
      },
      py::arg("views"), py::arg("rank"), py::arg("alpha") = AdmmConfig{}.alpha,
      py::arg("beta") = AdmmConfig{}.beta, py::arg("gamma") = AdmmConfig{}.gamma,
      py::arg("max_iter") = AdmmConfig{}.max_iter, py::arg("tol") = AdmmConfig{}.tol,
      py::arg("seed") = 0);

  m.def(
      "oscr_curve",
      [](const std::vector<double>& confidence, const std::vector<int>& predicted,
         const std::vector<int>& truth, const std::vector<bool>& unknown) {
        const std::size_t n = confidence.size();
        if (predicted.size() != n || truth.size() != n || unknown.size() != n)
          throw DimensionError("oscr_curve: inputs differ in length");
        std::vector<ScoredPrediction> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = {i, predicted[i], confidence[i], truth[i], unknown[i]};
        std::vector<std::tuple<double, double, double>> out;
        for (const auto& q : oscr_curve(p).points) out.emplace_back(q.threshold, q.ccr, q.fpr);
        return out;
      },
      py::arg("confidence"), py::arg("predicted"), py::arg("truth"), py::arg("unknown"));

  m.def(
      "gradcheck",
      [](std::size_t layers, std::uint64_t seed) {
        GradcheckSpec s;
        s.layers = layers;
        s.seed = seed;
        return gradient_check(s).report.max_rel_error;
      },
      py::arg("layers") = 2, py::arg("seed") = 7);

  m.def("run_experiment", &run_experiment, py::arg("config_json") = "{}",
        "Synthesize, split, train and evaluate from a run configuration (JSON text).");
}

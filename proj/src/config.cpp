#include "openviewer/config.hpp"

#include <set>
#include <string>

#include "openviewer/errors.hpp"
#include "openviewer/version.hpp"

namespace openviewer {

namespace {

class Section {
 public:
  Section(const io::json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config: '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const io::json::exception&) {
      throw ConfigError("config: '" + path(key) + "' has the wrong type");
    }
  }

  template <typename E, typename Parse>
  void get_enum(const char* key, E& out, Parse parse) {
    std::string s;
    bool present = j_.contains(key);
    get(key, s);
    if (present) out = parse(s);
  }

  const io::json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("config: unknown key '" + path(it.key()) + "'");
    }
  }

 private:
  std::string path(const std::string& key) const {
    return name_.empty() ? key : name_ + "." + key;
  }

  const io::json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

GroupAxis axis_from_string(const std::string& s) {
  if (s == "columns") return GroupAxis::columns;
  if (s == "rows") return GroupAxis::rows;
  throw ConfigError("config: group_axis must be 'columns' or 'rows'");
}

SnapshotRule snapshot_from_string(const std::string& s) {
  if (s == "ema") return SnapshotRule::ema;
  if (s == "last") return SnapshotRule::last;
  throw ConfigError("config: fusion_snapshot must be 'ema' or 'last'");
}

void read_synth(Section& s, SynthSpec& out, bool allow_seed) {
  s.get("classes", out.classes);
  s.get("samples_per_class", out.samples_per_class);
  s.get("views", out.views);
  s.get("dims", out.dims);
  s.get("separation", out.separation);
  s.get("noise_fraction", out.noise_fraction);
  s.get("noise_magnitude", out.noise_magnitude);
  s.get("jitter", out.jitter);
  if (allow_seed) s.get("seed", out.seed);
  s.finish();
}

io::json synth_json(const SynthSpec& s, bool with_seed) {
  io::json j;
  j["classes"] = s.classes;
  j["samples_per_class"] = s.samples_per_class;
  j["views"] = s.views;
  j["dims"] = s.dims;
  j["separation"] = s.separation;
  j["noise_fraction"] = s.noise_fraction;
  j["noise_magnitude"] = s.noise_magnitude;
  j["jitter"] = s.jitter;
  if (with_seed) j["seed"] = s.seed;
  return j;
}

}  // namespace

io::json to_json(const SynthSpec& s) { return synth_json(s, true); }

SynthSpec synth_spec_from_json(const io::json& j) {
  SynthSpec spec;
  Section s(j, "");
  read_synth(s, spec, true);
  spec.validate();
  return spec;
}

void RunConfig::propagate() {
  synth.seed = seed;
  admm.seed = seed;
  train.seed = seed;
  train.admm = admm;
  train.mix = mix;
  train.loss = loss;
  diag.scaling.seed = seed;
}

void RunConfig::validate() const {
  synth.validate();
  if (!(split.openness >= 0.0 && split.openness < 1.0)) {
    throw ConfigError("config: split.openness must lie in [0, 1)");
  }
  train.validate();
  for (double t : eval.fpr_targets) {
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError("config: eval.fpr_targets must lie in (0, 1]");
  }
  if (diag.contraction_trials < 1) throw ConfigError("config: diag.contraction_trials must be >= 1");
}

RunConfig run_config_from_json(const io::json& j) {
  RunConfig c;
  Section top(j, "");
  int schema = kSchemaVersion;
  top.get("schema_version", schema);
  if (schema != kSchemaVersion) {
    throw ConfigError("config: schema_version " + std::to_string(schema) + " is not supported by " +
                      version_info());
  }
  top.get("seed", c.seed);
  if (const io::json* s = top.child("synth")) {
    Section sec(*s, "synth");
    read_synth(sec, c.synth, false);
  }
  if (const io::json* s = top.child("split")) {
    Section sec(*s, "split");
    sec.get("openness", c.split.openness);
    std::vector<double> ratios(c.split.ratios.begin(), c.split.ratios.end());
    sec.get("ratios", ratios);
    if (ratios.size() != 3) throw ConfigError("config: split.ratios needs 3 entries");
    c.split.ratios = {ratios[0], ratios[1], ratios[2]};
    sec.get("normalize", c.split.normalize);
    sec.finish();
  }
  if (const io::json* s = top.child("admm")) {
    Section sec(*s, "admm");
    sec.get("alpha", c.admm.alpha);
    sec.get("beta", c.admm.beta);
    sec.get("gamma", c.admm.gamma);
    sec.get("max_iter", c.admm.max_iter);
    sec.get("tol", c.admm.tol);
    sec.get("exact_e_prox", c.admm.exact_e_prox);
    sec.get_enum("group_axis", c.admm.group_axis, axis_from_string);
    sec.get("rank", c.admm.rank);
    sec.finish();
  }
  if (const io::json* s = top.child("mix")) {
    Section sec(*s, "mix");
    sec.get("omega", c.mix.omega);
    sec.get("pseudo_ratio", c.mix.pseudo_ratio);
    sec.get("per_view_zeta", c.mix.per_view_zeta);
    sec.finish();
  }
  if (const io::json* s = top.child("loss")) {
    Section sec(*s, "loss");
    sec.get("xi", c.loss.xi);
    sec.get("lambda1", c.loss.lambda1);
    sec.get("lambda2", c.loss.lambda2);
    sec.get("center_lr", c.loss.center_lr);
    sec.finish();
  }
  if (const io::json* s = top.child("train")) {
    Section sec(*s, "train");
    sec.get("epochs", c.train.epochs);
    sec.get("batch_size", c.train.batch_size);
    sec.get("learning_rate", c.train.learning_rate);
    sec.get("layers", c.train.layers);
    sec.get_enum("ablation", c.train.ablation, ablation_from_string);
    sec.get("warm_start", c.train.warm_start);
    sec.get("ema_decay", c.train.ema_decay);
    sec.get("grad_clip", c.train.grad_clip);
    sec.get_enum("fusion_snapshot", c.train.snapshot, snapshot_from_string);
    sec.finish();
  }
  if (const io::json* s = top.child("eval")) {
    Section sec(*s, "eval");
    sec.get("fpr_targets", c.eval.fpr_targets);
    sec.get_enum("score", c.eval.score, score_rule_from_string);
    sec.finish();
  }
  if (const io::json* s = top.child("diag")) {
    Section sec(*s, "diag");
    sec.get("contraction_trials", c.diag.contraction_trials);
    sec.get("bound_batches", c.diag.bound_batches);
    sec.get("scaling_n", c.diag.scaling.n);
    sec.get("scaling_repeats", c.diag.scaling.repeats);
    sec.get("scaling_layers", c.diag.scaling.layers);
    sec.finish();
  }
  top.finish();
  c.propagate();
  c.validate();
  return c;
}

io::json to_json(const RunConfig& c) {
  io::json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = c.seed;
  j["synth"] = synth_json(c.synth, false);
  j["split"] = {{"openness", c.split.openness},
                {"ratios", std::vector<double>(c.split.ratios.begin(), c.split.ratios.end())},
                {"normalize", c.split.normalize}};
  j["admm"] = {{"alpha", c.admm.alpha},
               {"beta", c.admm.beta},
               {"gamma", c.admm.gamma},
               {"max_iter", c.admm.max_iter},
               {"tol", c.admm.tol},
               {"exact_e_prox", c.admm.exact_e_prox},
               {"group_axis", c.admm.group_axis == GroupAxis::columns ? "columns" : "rows"},
               {"rank", c.admm.rank}};
  j["mix"] = {{"omega", c.mix.omega},
              {"pseudo_ratio", c.mix.pseudo_ratio},
              {"per_view_zeta", c.mix.per_view_zeta}};
  j["loss"] = {{"xi", c.loss.xi},
               {"lambda1", c.loss.lambda1},
               {"lambda2", c.loss.lambda2},
               {"center_lr", c.loss.center_lr}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"layers", c.train.layers},
                {"ablation", to_string(c.train.ablation)},
                {"warm_start", c.train.warm_start},
                {"ema_decay", c.train.ema_decay},
                {"grad_clip", c.train.grad_clip},
                {"fusion_snapshot", c.train.snapshot == SnapshotRule::ema ? "ema" : "last"}};
  j["eval"] = {{"fpr_targets", c.eval.fpr_targets}, {"score", to_string(c.eval.score)}};
  j["diag"] = {{"contraction_trials", c.diag.contraction_trials},
               {"bound_batches", c.diag.bound_batches},
               {"scaling_n", c.diag.scaling.n},
               {"scaling_repeats", c.diag.scaling.repeats},
               {"scaling_layers", c.diag.scaling.layers}};
  return j;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  io::json j;
  try {
    j = io::json::parse(io::read_text(path));
  } catch (const io::json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace openviewer

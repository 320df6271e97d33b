#include "openviewer/unfold_net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "openviewer/rng.hpp"
#include "openviewer/runtime.hpp"
#include "openviewer/spectral.hpp"

namespace openviewer {

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_dn: return "no_dn";
    case Ablation::no_cd_dn: return "no_cd_dn";
  }
  return "full";
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "full") return Ablation::full;
  if (s == "no_dn") return Ablation::no_dn;
  if (s == "no_cd_dn") return Ablation::no_cd_dn;
  throw ConfigError("unknown ablation '" + s + "' (expected full, no_dn or no_cd_dn)");
}

std::vector<std::size_t> UnfoldParams::view_dims() const {
  std::vector<std::size_t> dims;
  for (const ViewParams& v : views) dims.push_back(static_cast<std::size_t>(v.d_init.cols()));
  return dims;
}

void UnfoldParams::validate() const {
  if (classes < 2) throw DimensionError("unfold params: need at least 2 classes");
  if (views.empty()) throw DimensionError("unfold params: no views");
  const Eigen::Index c = classes;
  const std::size_t layers = layer_count();
  if (layers < 1) throw DimensionError("unfold params: need at least 1 layer");
  for (std::size_t v = 0; v < views.size(); ++v) {
    const ViewParams& vp = views[v];
    if (vp.d_init.rows() != c) {
      throw DimensionError("unfold params: D_init of view " + std::to_string(v) + " is " +
                           shape_str(vp.d_init) + ", expected " + std::to_string(c) + " rows");
    }
    if (vp.layers.size() != layers) throw DimensionError("unfold params: ragged layer count");
    for (const LayerParams& lp : vp.layers) {
      for (const Matrix* m : {&lp.r, &lp.u, &lp.m}) {
        if (m->rows() != c || m->cols() != c) {
          throw DimensionError("unfold params: expected " + std::to_string(c) + "x" +
                               std::to_string(c) + " layer matrix, got " + shape_str(*m));
        }
      }
      if (!(lp.theta >= 0.0) || !(lp.rho >= 0.0)) {
        throw DomainError("unfold params: thresholds must be >= 0");
      }
    }
  }
  if (!fusion_snapshot.empty()) {
    if (fusion_snapshot.size() != views.size()) {
      throw DimensionError("unfold params: fusion snapshot length mismatch");
    }
    double s = 0.0;
    for (double w : fusion_snapshot) {
      if (!(w >= 0.0)) throw DomainError("unfold params: negative fusion weight");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-12) throw DomainError("unfold params: fusion weights must sum to 1");
  }
}

namespace {

LayerParams closed_form_layer(const Matrix& d, double l, double alpha, double beta,
                              double gamma) {
  const Eigen::Index c = d.rows();
  LayerParams lp;
  lp.r = Matrix::Identity(c, c) - (d * d.transpose()) / l;
  lp.u = Matrix::Identity(c, c) / l;
  lp.m = Matrix::Identity(c, c) / (beta + kInitRidge);
  lp.theta = alpha / l;
  lp.rho = gamma / l;
  return lp;
}

}  // namespace

UnfoldParams init_params(std::span<const std::size_t> dims, int classes, std::size_t layers,
                         const AdmmConfig& admm, std::uint64_t seed,
                         const AdmmState* warm_start) {
  admm.validate();
  if (classes < 2) throw DimensionError("init_params: need at least 2 classes");
  if (layers < 1) throw ConfigError("init_params: need at least 1 layer");
  if (dims.empty()) throw DimensionError("init_params: no views");
  if (warm_start != nullptr && warm_start->views.size() != dims.size()) {
    throw DimensionError("init_params: warm start view count mismatch");
  }
  UnfoldParams p;
  p.classes = classes;
  p.group_axis = admm.group_axis;
  for (std::size_t v = 0; v < dims.size(); ++v) {
    if (dims[v] < 1) throw DimensionError("init_params: zero-width view");
    ViewParams vp;
    if (warm_start != nullptr) {
      vp.d_init = warm_start->views[v].d;
      if (vp.d_init.rows() != classes || vp.d_init.cols() != static_cast<Eigen::Index>(dims[v])) {
        throw DimensionError("init_params: warm start dictionary is " + shape_str(vp.d_init));
      }
    } else {
      Rng rng = make_rng(seed, "init", v);
      std::normal_distribution<double> normal;
      vp.d_init.resize(classes, static_cast<Eigen::Index>(dims[v]));
      for (Eigen::Index i = 0; i < vp.d_init.size(); ++i) vp.d_init.data()[i] = normal(rng);
      for (Eigen::Index r = 0; r < vp.d_init.rows(); ++r) vp.d_init.row(r).normalize();
    }
    const double l = gram_spectral_norm(vp.d_init);
    if (!(l > 0.0)) throw NumericError("init_params: dictionary has zero spectral norm");
    const LayerParams lp = closed_form_layer(vp.d_init, l, admm.alpha, admm.beta, admm.gamma);
    vp.layers.assign(layers, lp);
    p.views.push_back(std::move(vp));
  }
  return p;
}

UnfoldParams analytic_params(const AdmmHistory& history, const AdmmConfig& admm,
                             std::size_t layers) {
  if (history.size() < layers + 1) {
    throw StateError("analytic_params: history has " + std::to_string(history.size()) +
                     " snapshots, need " + std::to_string(layers + 1));
  }
  const std::size_t views = history.front().size();
  UnfoldParams p;
  p.classes = static_cast<int>(history.front().front().d.rows());
  p.group_axis = admm.group_axis;
  p.views.resize(views);
  for (std::size_t v = 0; v < views; ++v) {
    p.views[v].d_init = history[0][v].d;
    for (std::size_t k = 0; k < layers; ++k) {
      const ViewFactors& cur = history[k][v];
      const ViewFactors& next = history[k + 1][v];
      const Eigen::Index c = cur.d.rows();
      LayerParams lp;
      lp.r = Matrix::Identity(c, c) - (cur.d * cur.d.transpose()) / cur.lipschitz;
      lp.u = Matrix::Identity(c, c) / cur.lipschitz;
      lp.theta = admm.alpha / cur.lipschitz;
      const Matrix gram = next.z.transpose() * next.z + admm.beta * Matrix::Identity(c, c);
      lp.m = gram.llt().solve(Matrix::Identity(c, c));
      lp.rho = admm.exact_e_prox ? admm.gamma : admm.gamma / next.lipschitz;
      p.views[v].layers.push_back(std::move(lp));
    }
  }
  return p;
}

ad::Var rf_forward(ad::Var z_prev, ad::Var x, ad::Var e_prev, ad::Var d_prev, ad::Var r,
                   ad::Var u, ad::Var theta) {
  const ad::Var propagated = ad::matmul(z_prev, r);
  const ad::Var injected = ad::matmul(ad::matmul(ad::sub(x, e_prev), ad::transpose(d_prev)), u);
  return ad::soft_threshold(ad::add(propagated, injected), theta);
}

ad::Var cd_forward(ad::Var z, ad::Var x, ad::Var e_prev, ad::Var m) {
  return ad::matmul(m, ad::matmul(ad::transpose(z), ad::sub(x, e_prev)));
}

ad::Var dn_forward(ad::Var x, ad::Var z, ad::Var d, ad::Var rho, GroupAxis axis) {
  return ad::group_soft_threshold(ad::sub(x, ad::matmul(z, d)), rho, axis);
}

std::vector<double> fusion_weights(std::span<const Matrix> z_views, std::span<const int> labels) {
  if (z_views.empty()) throw FusionError("fusion_weights: no views");
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  if (members.size() < 2) {
    throw FusionError("fusion_weights: need at least 2 distinct labels, got " +
                      std::to_string(members.size()));
  }
  const std::size_t vcount = z_views.size();
  std::vector<double> inv(vcount);
  for (std::size_t v = 0; v < vcount; ++v) {
    const Matrix& z = z_views[v];
    if (static_cast<std::size_t>(z.rows()) != labels.size()) {
      throw DimensionError("fusion_weights: view " + std::to_string(v) + " has " +
                           std::to_string(z.rows()) + " rows for " +
                           std::to_string(labels.size()) + " labels");
    }
    std::vector<Eigen::RowVectorXd> centroids;
    for (const auto& [label, rows] : members) {
      Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(z.cols());
      for (std::size_t i : rows) c += z.row(static_cast<Eigen::Index>(i));
      centroids.push_back(c / static_cast<double>(rows.size()));
    }
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < centroids.size(); ++a) {
      for (std::size_t b = a + 1; b < centroids.size(); ++b) {
        dmin = std::min(dmin, (centroids[a] - centroids[b]).norm());
      }
    }
    inv[v] = 1.0 / std::max(dmin, 1e-8);
  }
  double inv_sum = 0.0;
  for (double x : inv) inv_sum += x;
  std::vector<double> w(vcount);
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < vcount; ++v) {
    w[v] = -inv[v] / inv_sum;
    lo = std::min(lo, -w[v]);
  }
  double total = 0.0;
  for (double& x : w) {
    x = std::exp(x + lo);
    total += x;
  }
  for (double& x : w) x /= total;
  return w;
}

std::vector<Matrix> flatten(const UnfoldParams& p) {
  std::vector<Matrix> out;
  for (const ViewParams& vp : p.views) {
    out.push_back(vp.d_init);
    for (const LayerParams& lp : vp.layers) {
      out.push_back(lp.r);
      out.push_back(lp.u);
      out.push_back(lp.m);
      out.push_back(Matrix::Constant(1, 1, lp.theta));
      out.push_back(Matrix::Constant(1, 1, lp.rho));
    }
  }
  return out;
}

std::vector<std::string> flatten_names(const UnfoldParams& p) {
  std::vector<std::string> out;
  for (std::size_t v = 0; v < p.views.size(); ++v) {
    const std::string vs = "view" + std::to_string(v);
    out.push_back(vs + ".D_init");
    for (std::size_t l = 0; l < p.views[v].layers.size(); ++l) {
      const std::string ls = vs + ".layer" + std::to_string(l) + ".";
      for (const char* n : {"R", "U", "M", "theta", "rho"}) out.push_back(ls + n);
    }
  }
  return out;
}

namespace {

std::size_t flat_size(const UnfoldParams& p) {
  std::size_t n = 0;
  for (const ViewParams& vp : p.views) n += 1 + 5 * vp.layers.size();
  return n;
}

void check_shape(const Matrix& got, Eigen::Index rows, Eigen::Index cols, std::size_t index) {
  if (got.rows() != rows || got.cols() != cols) {
    throw DimensionError("parameter " + std::to_string(index) + " is " + shape_str(got) +
                         ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

}  // namespace

UnfoldParams unflatten(const UnfoldParams& shape, std::span<const Matrix> values) {
  if (values.size() != flat_size(shape)) {
    throw DimensionError("unflatten: expected " + std::to_string(flat_size(shape)) +
                         " parameter matrices, got " + std::to_string(values.size()));
  }
  UnfoldParams p = shape;
  std::size_t k = 0;
  for (ViewParams& vp : p.views) {
    check_shape(values[k], vp.d_init.rows(), vp.d_init.cols(), k);
    vp.d_init = values[k++];
    for (LayerParams& lp : vp.layers) {
      for (Matrix* m : {&lp.r, &lp.u, &lp.m}) {
        check_shape(values[k], m->rows(), m->cols(), k);
        *m = values[k++];
      }
      check_shape(values[k], 1, 1, k);
      lp.theta = values[k++](0, 0);
      check_shape(values[k], 1, 1, k);
      lp.rho = values[k++](0, 0);
    }
  }
  return p;
}

ParamNodes bind_params(const UnfoldParams& shape, std::span<const ad::Var> leaves) {
  if (leaves.size() != flat_size(shape)) {
    throw DimensionError("bind_params: expected " + std::to_string(flat_size(shape)) + " nodes, got " +
                         std::to_string(leaves.size()));
  }
  ParamNodes n;
  std::size_t k = 0;
  for (const ViewParams& vp : shape.views) {
    n.d_init.push_back(leaves[k++]);
    std::vector<LayerNodes> layers;
    for (std::size_t l = 0; l < vp.layers.size(); ++l) {
      LayerNodes ln;
      ln.r = leaves[k++];
      ln.u = leaves[k++];
      ln.m = leaves[k++];
      ln.theta = leaves[k++];
      ln.rho = leaves[k++];
      layers.push_back(ln);
    }
    n.layers.push_back(std::move(layers));
  }
  return n;
}

ParamNodes bind_leaves(ad::Tape& tape, const UnfoldParams& p) {
  std::vector<ad::Var> leaves;
  for (Matrix& m : flatten(p)) leaves.push_back(tape.leaf(std::move(m)));
  return bind_params(p, leaves);
}

namespace {

std::vector<double> uniform_weights(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

ad::Var fuse(std::span<const ad::Var> z, const std::vector<double>& w) {
  ad::Var out = ad::scale(z[0], w[0]);
  for (std::size_t v = 1; v < z.size(); ++v) out = ad::add(out, ad::scale(z[v], w[v]));
  return out;
}

}  // namespace

ForwardResult forward(ad::Tape& tape, const UnfoldParams& params, const ParamNodes& nodes,
                      std::span<const Matrix> views, const ForwardOptions& options,
                      std::vector<LayerState>* trace) {
  const std::size_t vcount = params.view_count();
  if (views.size() != vcount) {
    throw DimensionError("forward: expected " + std::to_string(vcount) + " views, got " +
                         std::to_string(views.size()));
  }
  const Eigen::Index n = views[0].rows();
  const Eigen::Index c = params.classes;
  for (std::size_t v = 0; v < vcount; ++v) {
    if (views[v].rows() != n) throw DimensionError("forward: views disagree on sample count");
    if (views[v].cols() != params.views[v].d_init.cols()) {
      throw DimensionError("forward: view " + std::to_string(v) + " has " +
                           std::to_string(views[v].cols()) + " features, parameters expect " +
                           std::to_string(params.views[v].d_init.cols()));
    }
  }

  std::vector<double> fixed;
  if (options.weights == WeightsMode::snapshot) {
    if (params.fusion_snapshot.size() != vcount) {
      throw StateError("forward: inference requires a fusion weight snapshot");
    }
    fixed = params.fusion_snapshot;
  } else if (options.weights == WeightsMode::fixed) {
    if (options.fixed_weights.size() != vcount) {
      throw DimensionError("forward: fixed weights length mismatch");
    }
    fixed = options.fixed_weights;
  } else if (options.labels.size() != static_cast<std::size_t>(n)) {
    throw DimensionError("forward: labels length does not match the batch");
  }

  const std::size_t layers = params.layer_count();
  std::vector<ad::Var> x(vcount), z(vcount), d(vcount), e(vcount);
  for (std::size_t v = 0; v < vcount; ++v) {
    x[v] = tape.constant(views[v]);
    z[v] = tape.constant(Matrix::Zero(n, c));
    e[v] = tape.constant(Matrix::Zero(n, views[v].cols()));
    d[v] = nodes.d_init[v];
  }

  ForwardResult result;
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t v = 0; v < vcount; ++v) {
      const LayerNodes& ln = nodes.layers[v][l];
      z[v] = rf_forward(z[v], x[v], e[v], d[v], ln.r, ln.u, ln.theta);
      if (options.ablation == Ablation::no_cd_dn) continue;
      d[v] = cd_forward(z[v], x[v], e[v], ln.m);
      if (options.ablation == Ablation::full) {
        e[v] = dn_forward(x[v], z[v], d[v], ln.rho, params.group_axis);
      }
    }
    const bool last = l + 1 == layers;
    if (!last && trace == nullptr) continue;

    std::vector<double> w = fixed;
    if (options.weights == WeightsMode::labels) {
      std::vector<Matrix> zv;
      for (const ad::Var& zz : z) zv.push_back(zz.value());
      try {
        w = fusion_weights(zv, options.labels);
      } catch (const FusionError& err) {
        if (last) {
          warn(std::string(err.what()) + "; using uniform fusion weights");
          result.fusion_fallback = true;
        }
        w = uniform_weights(vcount);
      }
    }
    if (trace != nullptr) {
      LayerState s;
      for (std::size_t v = 0; v < vcount; ++v) {
        s.z.push_back(z[v].value());
        s.d.push_back(d[v].value());
        s.e.push_back(e[v].value());
      }
      s.fused = Matrix::Zero(n, c);
      for (std::size_t v = 0; v < vcount; ++v) s.fused += w[v] * s.z[v];
      s.weights = w;
      trace->push_back(std::move(s));
    }
    if (last) {
      result.z_fused = fuse(z, w);
      result.weights = w;
    }
  }
  result.z_views = z;
  return result;
}

Matrix forward_values(const UnfoldParams& params, std::span<const Matrix> views,
                      const ForwardOptions& options, std::vector<LayerState>* trace) {
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  for (Matrix& m : flatten(params)) leaves.push_back(tape.constant(std::move(m)));
  const ParamNodes nodes = bind_params(params, leaves);
  return forward(tape, params, nodes, views, options, trace).z_fused.value();
}

Matrix softmax_rows(const Matrix& z) {
  Matrix p(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    p.row(i) = (z.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

std::vector<Prediction> predict(const Matrix& z_fused) {
  const Matrix p = softmax_rows(z_fused);
  std::vector<Prediction> out(static_cast<std::size_t>(z_fused.rows()));
  for (Eigen::Index i = 0; i < z_fused.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < z_fused.cols(); ++j) {
      if (z_fused(i, j) > z_fused(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = {static_cast<int>(best), p(i, best)};
  }
  return out;
}

}  // namespace openviewer

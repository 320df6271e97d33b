#pragma once

// L-layer unfolded network. Per view v and layer l:
//   RF: Z <- S_theta(Z R + (X - E) D^T U)
//   CD: D <- M Z^T (X - E)
//   DN: E <- P_rho(X - Z D)
// and the fused output Z = sum_v w_v Z_v after the last layer.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "openviewer/admm_oracle.hpp"
#include "openviewer/errors.hpp"
#include "openviewer/matrix.hpp"
#include "openviewer/tensor.hpp"

namespace openviewer {

enum class Ablation { full, no_dn, no_cd_dn };

std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

class FusionError : public Error {
 public:
  using Error::Error;
};

struct LayerParams {
  Matrix r;  // C x C
  Matrix u;  // C x C
  Matrix m;  // C x C
  double theta = 0.0;
  double rho = 0.0;
};

struct ViewParams {
  Matrix d_init;  // C x D_v
  std::vector<LayerParams> layers;
};

struct UnfoldParams {
  int classes = 0;
  std::vector<ViewParams> views;
  std::vector<double> fusion_snapshot;  // empty until training finishes
  GroupAxis group_axis = GroupAxis::columns;

  std::size_t view_count() const { return views.size(); }
  std::size_t layer_count() const { return views.empty() ? 0 : views.front().layers.size(); }
  std::vector<std::size_t> view_dims() const;
  void validate() const;
};

// Small ridge added to beta in the initial M = (beta + eps)^-1 I.
inline constexpr double kInitRidge = 1e-6;

// D_init from warm_start when given, otherwise Gaussian rows normalized to unit
// length. With L = ||D D^T||_2: R = I - D D^T / L, U = I / L,
// M = I / (beta + eps), theta = alpha / L, rho = gamma / L.
UnfoldParams init_params(std::span<const std::size_t> dims, int classes, std::size_t layers,
                         const AdmmConfig& admm, std::uint64_t seed,
                         const AdmmState* warm_start = nullptr);

// Per-layer closed forms taken from a solver history (snapshot k feeds layer
// k), so that a forward pass reproduces the solver iterates.
UnfoldParams analytic_params(const AdmmHistory& history, const AdmmConfig& admm,
                             std::size_t layers);

ad::Var rf_forward(ad::Var z_prev, ad::Var x, ad::Var e_prev, ad::Var d_prev, ad::Var r,
                   ad::Var u, ad::Var theta);
ad::Var cd_forward(ad::Var z, ad::Var x, ad::Var e_prev, ad::Var m);
ad::Var dn_forward(ad::Var x, ad::Var z, ad::Var d, ad::Var rho,
                   GroupAxis axis = GroupAxis::columns);

// Label-aware view weights from the minimum inter-centroid distance of each
// view. Throws FusionError when fewer than two labels are present.
std::vector<double> fusion_weights(std::span<const Matrix> z_views, std::span<const int> labels);

// Tape handles for every parameter, in flatten() order.
struct LayerNodes {
  ad::Var r, u, m, theta, rho;
};
struct ParamNodes {
  std::vector<ad::Var> d_init;
  std::vector<std::vector<LayerNodes>> layers;  // [view][layer]
};

// Per view: D_init, then for each layer R, U, M, theta (1x1), rho (1x1).
std::vector<Matrix> flatten(const UnfoldParams& p);
std::vector<std::string> flatten_names(const UnfoldParams& p);
UnfoldParams unflatten(const UnfoldParams& shape, std::span<const Matrix> values);
ParamNodes bind_params(const UnfoldParams& shape, std::span<const ad::Var> leaves);
ParamNodes bind_leaves(ad::Tape& tape, const UnfoldParams& p);

enum class WeightsMode { labels, snapshot, fixed };

struct ForwardOptions {
  Ablation ablation = Ablation::full;
  WeightsMode weights = WeightsMode::labels;
  std::span<const int> labels;         // WeightsMode::labels
  std::vector<double> fixed_weights;   // WeightsMode::fixed
};

struct LayerState {
  std::vector<Matrix> z, d, e;  // per view
  Matrix fused;
  std::vector<double> weights;
};

struct ForwardResult {
  ad::Var z_fused;
  std::vector<ad::Var> z_views;
  std::vector<double> weights;
  bool fusion_fallback = false;  // labels mode fell back to uniform weights
};

ForwardResult forward(ad::Tape& tape, const UnfoldParams& params, const ParamNodes& nodes,
                      std::span<const Matrix> views, const ForwardOptions& options,
                      std::vector<LayerState>* trace = nullptr);

// Tape-free convenience wrapper (constants only).
Matrix forward_values(const UnfoldParams& params, std::span<const Matrix> views,
                      const ForwardOptions& options, std::vector<LayerState>* trace = nullptr);

struct Prediction {
  int label = 0;
  double confidence = 0.0;
};

// Row argmax (ties toward the smaller index) and max softmax probability.
std::vector<Prediction> predict(const Matrix& z_fused);
Matrix softmax_rows(const Matrix& z);

}  // namespace openviewer

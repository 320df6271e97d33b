#include <doctest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "openviewer/admm_oracle.hpp"
#include "openviewer/errors.hpp"
#include "openviewer/synthgen.hpp"
#include "openviewer/unfold_net.hpp"

using namespace openviewer;
using testutil::max_abs_diff;
using testutil::randn;

namespace {

Matrix orthonormal_rows(int r, int c, std::uint64_t seed) {
  Matrix q = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd(randn(c, c, seed))).householderQ();
  return q.topRows(r);
}

}  // namespace

TEST_CASE("closed-form initialization") {
  std::vector<std::size_t> dims = {12, 9};
  AdmmConfig cfg;
  auto p = init_params(dims, 4, 3, cfg, 5);
  p.validate();
  CHECK(p.layer_count() == 3);
  for (std::size_t v = 0; v < 2; ++v) {
    const Matrix& d = p.views[v].d_init;
    for (Eigen::Index r = 0; r < d.rows(); ++r) CHECK(d.row(r).norm() == doctest::Approx(1.0));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(d * d.transpose())};
    const double l = es.eigenvalues().maxCoeff();
    for (const auto& lp : p.views[v].layers) {
      CHECK(max_abs_diff(lp.u, Matrix::Identity(4, 4) / l) < 1e-9);
      CHECK(max_abs_diff(lp.r, Matrix::Identity(4, 4) - d * d.transpose() / l) < 1e-9);
      CHECK(max_abs_diff(lp.m, Matrix::Identity(4, 4) / (cfg.beta + kInitRidge)) < 1e-15);
      CHECK(lp.theta == doctest::Approx(cfg.alpha / l).epsilon(1e-9));
      CHECK(lp.rho == doctest::Approx(cfg.gamma / l).epsilon(1e-9));
    }
  }
  // orthonormal rows: L = 1, R = 0
  AdmmState warm;
  warm.views.push_back({Matrix::Zero(1, 4), orthonormal_rows(4, 12, 1), Matrix::Zero(1, 12), 1.0});
  warm.views.push_back({Matrix::Zero(1, 4), orthonormal_rows(4, 9, 2), Matrix::Zero(1, 9), 1.0});
  auto q = init_params(dims, 4, 1, cfg, 0, &warm);
  CHECK(q.views[0].layers[0].r.cwiseAbs().maxCoeff() < 1e-9);
  CHECK(max_abs_diff(q.views[1].layers[0].u, Matrix::Identity(4, 4)) < 1e-9);
  CHECK_THROWS_AS(init_params(dims, 1, 1, cfg, 0), DimensionError);
}

TEST_CASE("module zero-state reductions") {
  ad::Tape t;
  Matrix x = randn(6, 5, 1), d = randn(3, 5, 2);
  auto X = t.constant(x), D = t.constant(d);
  auto Z0 = t.constant(Matrix::Zero(6, 3)), E0 = t.constant(Matrix::Zero(6, 5));
  auto R = t.constant(randn(3, 3, 3)), I = t.constant(Matrix::Identity(3, 3));
  Matrix z = rf_forward(Z0, X, E0, D, R, I, t.leaf_scalar(0.0)).value();
  CHECK(max_abs_diff(z, x * d.transpose()) < 1e-12);
  Matrix zbig = rf_forward(Z0, X, E0, D, R, I, t.leaf_scalar(1e6)).value();
  CHECK(zbig.cwiseAbs().maxCoeff() == 0.0);

  auto M = t.constant(randn(3, 3, 4));
  CHECK(cd_forward(Z0, X, E0, M).value().cwiseAbs().maxCoeff() == 0.0);
  auto Z = t.constant(randn(6, 3, 5));
  CHECK(cd_forward(Z, X, X, M).value().cwiseAbs().maxCoeff() == 0.0);

  Matrix zz = randn(6, 3, 6);
  auto ZZ = t.constant(zz);
  auto exact = t.constant(zz * d);
  CHECK(dn_forward(exact, ZZ, D, t.leaf_scalar(0.5)).value().cwiseAbs().maxCoeff() == 0.0);
  CHECK(max_abs_diff(dn_forward(X, ZZ, D, t.leaf_scalar(0.0)).value(), x - zz * d) == 0.0);
  CHECK_THROWS_AS(rf_forward(Z0, X, E0, t.constant(randn(3, 4, 1)), R, I, t.leaf_scalar(0.0)),
                  DimensionError);
}

TEST_CASE("modules reproduce the solver steps with analytic parameters") {
  Matrix x = randn(10, 8, 21);
  AdmmConfig cfg;
  cfg.gamma = 0.5;
  ViewFactors f{randn(10, 3, 22), randn(3, 8, 23), randn(10, 8, 24, 0.1), 0.0};
  f.lipschitz = lipschitz(f.d);
  const double l = f.lipschitz;
  const Matrix i3 = Matrix::Identity(3, 3);

  ad::Tape t;
  auto X = t.constant(x);
  Matrix z = rf_forward(t.constant(f.z), X, t.constant(f.e), t.constant(f.d),
                        t.constant(i3 - f.d * f.d.transpose() / l), t.constant(i3 / l),
                        t.leaf_scalar(cfg.alpha / l))
                 .value();
  CHECK(max_abs_diff(z, z_step(f, x, cfg)) <= 1e-12);

  ViewFactors g = f;
  g.z = z;
  const Matrix m = (z.transpose() * z + cfg.beta * i3).inverse();
  Matrix d = cd_forward(t.constant(z), X, t.constant(f.e), t.constant(m)).value();
  CHECK(max_abs_diff(d, d_step(g, x, cfg)) <= 1e-10);

  g.d = d;
  g.lipschitz = lipschitz(d);
  Matrix e = dn_forward(X, t.constant(z), t.constant(d), t.leaf_scalar(cfg.gamma / g.lipschitz)).value();
  CHECK(max_abs_diff(e, e_step(g, x, cfg)) <= 1e-12);
}

TEST_CASE("L-layer forward equals L solver iterations") {
  auto r = generate_synthetic(SynthSpec{});
  AdmmConfig cfg;
  cfg.rank = 5;
  cfg.tol = std::numeric_limits<double>::min();
  for (std::size_t layers : {1u, 2u, 4u}) {
    cfg.max_iter = layers;
    AdmmHistory hist;
    auto st = solve(r.dataset.views, cfg, &hist);
    REQUIRE(st.iterations == layers);
    auto p = analytic_params(hist, cfg, layers);
    ForwardOptions opt;
    opt.weights = WeightsMode::fixed;
    opt.fixed_weights = {0.5, 0.5};
    std::vector<LayerState> trace;
    Matrix fused = forward_values(p, r.dataset.views, opt, &trace);
    REQUIRE(trace.size() == layers);
    double worst = 0.0;
    for (std::size_t l = 0; l < layers; ++l)
      for (std::size_t v = 0; v < 2; ++v) {
        worst = std::max(worst, max_abs_diff(trace[l].z[v], hist[l + 1][v].z));
        worst = std::max(worst, max_abs_diff(trace[l].d[v], hist[l + 1][v].d));
        worst = std::max(worst, max_abs_diff(trace[l].e[v], hist[l + 1][v].e));
      }
    CHECK(worst <= 1e-10);
    CHECK(max_abs_diff(fused, 0.5 * (st.views[0].z + st.views[1].z)) <= 1e-10);
  }
}

TEST_CASE("layer-one output in closed form and ablations") {
  std::vector<std::size_t> dims = {7, 6};
  AdmmConfig cfg;
  cfg.alpha = 0.05;
  auto p = init_params(dims, 3, 1, cfg, 9);
  std::vector<Matrix> x = {randn(5, 7, 1, 3.0), randn(5, 6, 2, 3.0)};
  ForwardOptions opt;
  opt.weights = WeightsMode::fixed;
  opt.fixed_weights = {0.5, 0.5};
  Matrix expect = Matrix::Zero(5, 3);
  for (std::size_t v = 0; v < 2; ++v) {
    const auto& lp = p.views[v].layers[0];
    const Matrix arg = x[v] * p.views[v].d_init.transpose() * lp.u;
    expect += 0.5 * soft_threshold(arg, lp.theta);
  }
  CHECK(max_abs_diff(forward_values(p, x, opt), expect) < 1e-12);
  for (Ablation a : {Ablation::no_dn, Ablation::no_cd_dn}) {
    opt.ablation = a;
    CHECK(max_abs_diff(forward_values(p, x, opt), expect) < 1e-12);
  }
  // deeper: no_cd_dn keeps D fixed and E zero
  auto deep = init_params(dims, 3, 2, cfg, 9);
  std::vector<LayerState> tr;
  opt.ablation = Ablation::no_cd_dn;
  forward_values(deep, x, opt, &tr);
  CHECK(tr[1].d[0] == deep.views[0].d_init);
  CHECK(tr[1].e[1].cwiseAbs().maxCoeff() == 0.0);
  opt.ablation = Ablation::no_dn;
  tr.clear();
  forward_values(deep, x, opt, &tr);
  CHECK(tr[1].e[0].cwiseAbs().maxCoeff() == 0.0);
  CHECK(tr[1].d[0] != deep.views[0].d_init);
}

TEST_CASE("fusion weights") {
  std::vector<int> labels = {0, 1};
  Matrix a(2, 2), b(2, 2);
  a << 0, 0, 1, 0;  // centroid distance 1
  b << 0, 0, 0, 2;  // centroid distance 2
  std::vector<Matrix> zs = {a, b};
  auto w = fusion_weights(zs, labels);
  const double e1 = std::exp(-2.0 / 3.0), e2 = std::exp(-1.0 / 3.0);
  CHECK(w[0] == doctest::Approx(e1 / (e1 + e2)).epsilon(1e-12));
  CHECK(w[0] == doctest::Approx(0.4174).epsilon(1e-4));
  CHECK(w[1] == doctest::Approx(0.5826).epsilon(1e-4));

  std::vector<Matrix> same = {a, 3.0 * a - Matrix::Constant(2, 2, 1.0)};
  same[1] = a;
  auto u = fusion_weights(same, labels);
  CHECK(u[0] == 0.5);
  CHECK(u[1] == 0.5);

  std::vector<int> one = {1, 1};
  CHECK_THROWS_AS(fusion_weights(zs, one), FusionError);

  for (std::uint64_t s = 0; s < 50; ++s) {
    std::vector<Matrix> r = {randn(12, 4, s), randn(12, 4, s + 100), randn(12, 4, s + 200)};
    std::vector<int> l(12);
    for (int i = 0; i < 12; ++i) l[i] = i % 4;
    auto ww = fusion_weights(r, l);
    double sum = 0.0;
    for (double x : ww) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("forward fusion modes") {
  std::vector<std::size_t> dims = {6, 6};
  auto p = init_params(dims, 3, 1, AdmmConfig{}, 2);
  p.views[1] = p.views[0];
  Matrix x = randn(8, 6, 3, 4.0);
  std::vector<Matrix> xs = {x, x};
  ForwardOptions opt;
  std::vector<int> labels = {0, 1, 2, 0, 1, 2, 0, 1};
  opt.labels = labels;
  std::vector<LayerState> tr;
  Matrix fused = forward_values(p, xs, opt, &tr);
  CHECK(max_abs_diff(fused, tr[0].z[0]) < 1e-12);

  ForwardOptions inf;
  inf.weights = WeightsMode::snapshot;
  CHECK_THROWS_AS(forward_values(p, xs, inf), StateError);
  p.fusion_snapshot = {0.25, 0.75};
  CHECK(max_abs_diff(forward_values(p, xs, inf), tr[0].z[0]) < 1e-12);

  ad::Tape t;
  std::vector<int> same(8, 1);
  ForwardOptions fb;
  fb.labels = same;
  auto nodes = bind_leaves(t, p);
  auto res = forward(t, p, nodes, xs, fb);
  CHECK(res.fusion_fallback);
  CHECK(res.weights == std::vector<double>{0.5, 0.5});
}

TEST_CASE("predict") {
  Matrix z(3, 3);
  z << 10, 0, 0, 0, 0, 0, 1, 5, 5;
  auto p = predict(z);
  CHECK(p[0].label == 0);
  CHECK(p[0].confidence == doctest::Approx(std::exp(10.0) / (std::exp(10.0) + 2)).epsilon(1e-12));
  CHECK(p[0].confidence == doctest::Approx(0.99991).epsilon(1e-5));
  CHECK(p[1].label == 0);
  CHECK(p[1].confidence == doctest::Approx(1.0 / 3.0));
  CHECK(p[2].label == 1);
  Matrix s = softmax_rows(randn(20, 5, 1, 10.0));
  for (Eigen::Index i = 0; i < 20; ++i) CHECK(std::abs(s.row(i).sum() - 1.0) <= 1e-12);
}

TEST_CASE("flatten round trip") {
  std::vector<std::size_t> dims = {5, 4};
  auto p = init_params(dims, 3, 2, AdmmConfig{}, 1);
  auto flat = flatten(p);
  CHECK(flat.size() == 2 * (1 + 2 * 5));
  CHECK(flatten_names(p).size() == flat.size());
  auto q = unflatten(p, flat);
  auto flat2 = flatten(q);
  for (std::size_t i = 0; i < flat.size(); ++i) CHECK(flat[i] == flat2[i]);
  flat.pop_back();
  CHECK_THROWS_AS(unflatten(p, flat), DimensionError);
  CHECK(ablation_from_string(to_string(Ablation::no_dn)) == Ablation::no_dn);
  CHECK_THROWS_AS(ablation_from_string("nope"), ConfigError);
}

#include <doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "openviewer/errors.hpp"
#include "openviewer/tensor.hpp"

using namespace openviewer;
using namespace openviewer::ad;
using testutil::randn;

namespace {

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index j = 0;
  for (double x : v) m(0, j++) = x;
  return m;
}

// Plain central differences, independent of finite_diff_check.
std::vector<Matrix> numeric_grad(const LossBuilder& f, std::vector<Matrix> params, double h) {
  std::vector<Matrix> out;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix g(params[p].rows(), params[p].cols());
    for (Eigen::Index i = 0; i < params[p].size(); ++i) {
      const double keep = params[p].data()[i];
      params[p].data()[i] = keep + h;
      const double up = value_and_grad(f, params, nullptr);
      params[p].data()[i] = keep - h;
      const double dn = value_and_grad(f, params, nullptr);
      params[p].data()[i] = keep;
      g.data()[i] = (up - dn) / (2 * h);
    }
    out.push_back(g);
  }
  return out;
}

void check_against_numeric(const LossBuilder& f, const std::vector<Matrix>& params,
                           double tol = 1e-6) {
  std::vector<Matrix> analytic;
  value_and_grad(f, params, &analytic);
  auto numeric = numeric_grad(f, params, 1e-6);
  REQUIRE(analytic.size() == numeric.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    const double err = (analytic[p] - numeric[p]).cwiseAbs().maxCoeff() /
                       std::max(1.0, numeric[p].cwiseAbs().maxCoeff());
    CHECK(err < tol);
  }
}

}  // namespace

TEST_CASE("soft threshold examples and theta gradient") {
  Tape t;
  Var x = t.constant(row({5, -5, 1}));
  Var th = t.leaf_scalar(2.0);
  Var y = soft_threshold(x, th);
  CHECK(y.value()(0, 0) == doctest::Approx(3.0));
  CHECK(y.value()(0, 1) == doctest::Approx(-3.0));
  CHECK(y.value()(0, 2) == 0.0);

  Tape t2;
  Var x2 = t2.constant(row({3, -3, 1}));
  Var th2 = t2.leaf_scalar(2.0);
  t2.backward(sum(soft_threshold(x2, th2)));
  // -sign(3) - sign(-3) + 0
  CHECK(th2.grad()(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("soft threshold at zero is the identity and is nonexpansive") {
  Matrix a = randn(6, 7, 1);
  Matrix b = randn(6, 7, 2);
  Tape t;
  Var z = t.leaf_scalar(0.0);
  CHECK(testutil::max_abs_diff(soft_threshold(t.constant(a), z).value(), a) == 0.0);
  for (double th : {0.1, 0.5, 2.0}) {
    Tape u;
    Var s = u.leaf_scalar(th);
    Matrix sa = soft_threshold(u.constant(a), s).value();
    Matrix sb = soft_threshold(u.constant(b), s).value();
    CHECK((sa - sb).norm() <= (a - b).norm() + 1e-12);
  }
}

TEST_CASE("group soft threshold examples") {
  Matrix col(2, 1);
  col << 3, 4;
  Tape t;
  Var rho = t.leaf_scalar(2.0);
  Matrix y = group_soft_threshold(t.constant(col), rho).value();
  CHECK(y(0, 0) == doctest::Approx(1.8));
  CHECK(y(1, 0) == doctest::Approx(2.4));

  Matrix small(2, 1);
  small << 0.3, 0.4;
  Matrix y2 = group_soft_threshold(t.constant(small), rho).value();
  CHECK(y2.norm() == 0.0);

  Matrix rows(1, 2);
  rows << 3, 4;
  Matrix y3 = group_soft_threshold(t.constant(rows), rho, GroupAxis::rows).value();
  CHECK(y3(0, 0) == doctest::Approx(1.8));
  CHECK(y3(0, 1) == doctest::Approx(2.4));
}

TEST_CASE("group soft threshold is nonexpansive") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Matrix a = randn(5, 4, 100 + s), b = randn(5, 4, 200 + s);
    Tape t;
    Var rho = t.leaf_scalar(0.3 * (s % 5));
    Matrix ga = group_soft_threshold(t.constant(a), rho).value();
    Matrix gb = group_soft_threshold(t.constant(b), rho).value();
    CHECK((ga - gb).norm() <= (a - b).norm() + 1e-12);
  }
}

TEST_CASE("small value examples") {
  Tape t;
  Matrix sm = row_softmax(t.constant(row({0, 0, 0}))).value();
  for (int j = 0; j < 3; ++j) CHECK(sm(0, j) == doctest::Approx(1.0 / 3.0));
  CHECK(frobenius_sq(t.constant(Matrix::Identity(2, 2))).scalar() == 2.0);
  Matrix a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 0, 1, 1, 0;
  Matrix c = matmul(t.constant(a), t.constant(b)).value();
  CHECK(c(0, 0) == 2);
  CHECK(c(0, 1) == 1);
  CHECK(c(1, 0) == 4);
  CHECK(c(1, 1) == 3);
  Matrix ls = row_log_softmax(t.constant(row({1000, 0}))).value();
  CHECK(std::isfinite(ls(0, 1)));
  CHECK(ls(0, 0) == doctest::Approx(0.0));
  Matrix n = row_l2_norms(t.constant(row({3, 4}))).value();
  CHECK(n(0, 0) == doctest::Approx(5.0));
}

TEST_CASE("gradients of smooth ops match plain central differences") {
  Matrix a = randn(4, 3, 11), b = randn(3, 5, 12), w = randn(4, 5, 13);
  LossBuilder chain = [w](Tape& t, std::span<const Var> p) {
    Var c = matmul(p[0], p[1]);
    Var s = hadamard(row_softmax(c), t.constant(w));
    Var l = add(sum(s), scale(frobenius_sq(transpose(p[0])), 0.5));
    l = add(l, sum(square(sub(c, t.constant(w)))));
    return add(l, sum(row_log_softmax(add_scalar(c, 0.3))));
  };
  check_against_numeric(chain, {a, b});

  LossBuilder logs = [](Tape&, std::span<const Var> p) {
    return add(sum(log(add_scalar(square(p[0]), 1.0))), sum(row_l2_norms(p[0])));
  };
  check_against_numeric(logs, {a});

  std::vector<std::size_t> idx = {2, 0, 2, 3};
  LossBuilder sel = [idx, w](Tape& t, std::span<const Var> p) {
    return sum(hadamard(select_rows(p[0], idx), t.constant(w.leftCols(3))));
  };
  check_against_numeric(sel, {a});
}

TEST_CASE("gradients of thresholds match away from kinks") {
  Matrix a = randn(6, 4, 21, 2.0);
  Matrix th(1, 1), rho(1, 1);
  th << 0.37;
  rho << 0.81;
  Matrix w = randn(6, 4, 22);
  LossBuilder f = [w](Tape& t, std::span<const Var> p) {
    Var y = soft_threshold(p[0], p[1]);
    Var g = group_soft_threshold(p[0], p[2]);
    Var r = group_soft_threshold(p[0], p[2], GroupAxis::rows);
    return add(add(sum(hadamard(y, t.constant(w))), frobenius_sq(g)), sum(relu(r)));
  };
  check_against_numeric(f, {a, th, rho});
  auto rep = finite_diff_check(f, std::vector<Matrix>{a, th, rho});
  CHECK(rep.max_rel_error < 1e-6);
  CHECK(rep.checked > 0);
}

TEST_CASE("tape errors") {
  Tape t;
  Var a = t.leaf(Matrix::Ones(2, 3));
  Var b = t.leaf(Matrix::Ones(2, 3));
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
  CHECK_THROWS_AS(add(a, t.leaf(Matrix::Ones(3, 2))), DimensionError);
  CHECK_THROWS_AS(soft_threshold(a, t.leaf_scalar(-1.0)), DomainError);
  CHECK_THROWS_AS(group_soft_threshold(a, t.leaf_scalar(-0.5)), DomainError);
  CHECK_THROWS_AS(log(t.leaf(Matrix::Zero(1, 1))), DomainError);
  CHECK_THROWS_AS(t.backward(a), DimensionError);
  Var s = sum(a);
  t.backward(s);
  CHECK(a.grad()(1, 2) == 1.0);
  CHECK_THROWS_AS(t.backward(s), StateError);

  LossBuilder f = [](Tape&, std::span<const Var> p) { return sum(p[0]); };
  std::vector<Matrix> ps = {Matrix::Ones(1, 1)};
  CHECK_THROWS_AS(finite_diff_check(f, ps, 1e-2), DomainError);
  CHECK_THROWS_AS(finite_diff_check(f, ps, 1e-9), DomainError);
}

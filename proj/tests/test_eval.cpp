#include <doctest.h>

#include <cmath>

#include "oscr_oracle.hpp"
#include "openviewer/errors.hpp"
#include "openviewer/eval.hpp"

using namespace openviewer;

namespace {

ScoredPrediction sp(double conf, bool unknown, int truth, int predicted) {
  ScoredPrediction p;
  p.confidence = conf;
  p.unknown = unknown;
  p.truth = truth;
  p.predicted = predicted;
  return p;
}

}  // namespace

TEST_CASE("OSCR hand case") {
  std::vector<ScoredPrediction> p = {sp(0.9, false, 0, 0), sp(0.8, true, 3, 1),
                                     sp(0.7, false, 1, 2), sp(0.6, false, 2, 2),
                                     sp(0.5, true, 3, 0)};
  auto c = oscr_curve(p);
  REQUIRE(c.points.size() == 5);
  const double ccr[] = {1.0 / 3, 1.0 / 3, 1.0 / 3, 2.0 / 3, 2.0 / 3};
  const double fpr[] = {0, 0.5, 0.5, 0.5, 1.0};
  for (int k = 0; k < 5; ++k) {
    CHECK(c.points[k].ccr == doctest::Approx(ccr[k]));
    CHECK(c.points[k].fpr == doctest::Approx(fpr[k]));
  }
  CHECK(ccr_at_fpr(c, 0.1) == doctest::Approx(1.0 / 3));
  CHECK(ccr_at_fpr(c, 0.5) == doctest::Approx(2.0 / 3));
  CHECK(ccr_at_fpr(c, 1.0) == doctest::Approx(2.0 / 3));
  auto s = summarize(p, c, std::vector<double>{0.5});
  CHECK(s.known == 3);
  CHECK(s.unknown == 2);
  CHECK(s.closed_set_accuracy == doctest::Approx(2.0 / 3));
}

TEST_CASE("OSCR agrees with brute force and is monotone") {
  for (std::uint64_t s = 0; s < 200; ++s) {
    auto p = testutil::random_predictions(s);
    auto c = oscr_curve(p);
    auto b = testutil::brute_oscr(p);
    REQUIRE(c.points.size() == b.size());
    for (std::size_t k = 0; k < b.size(); ++k) {
      CHECK(c.points[k].threshold == b[k].threshold);
      CHECK(std::abs(c.points[k].ccr - b[k].ccr) <= 1e-12);
      CHECK(std::abs(c.points[k].fpr - b[k].fpr) <= 1e-12);
      if (k > 0) {
        CHECK(c.points[k].ccr >= c.points[k - 1].ccr);
        CHECK(c.points[k].fpr >= c.points[k - 1].fpr);
      }
    }
    double prev = 0.0;
    for (double t : {0.01, 0.05, 0.1, 0.3, 0.5, 1.0}) {
      const double v = ccr_at_fpr(c, t);
      CHECK(v == testutil::brute_ccr_at(b, t));
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("separable and degenerate sets") {
  std::vector<ScoredPrediction> sep;
  for (int i = 0; i < 10; ++i) sep.push_back(sp(0.9 + 0.001 * i, false, i % 3, i % 3));
  for (int i = 0; i < 5; ++i) sep.push_back(sp(0.3 + 0.01 * i, true, 3, 0));
  auto c = oscr_curve(sep);
  CHECK(ccr_at_fpr(c, 0.005) == 1.0);

  std::vector<ScoredPrediction> flat = {sp(0.5, false, 0, 0), sp(0.5, false, 1, 0),
                                        sp(0.5, true, 2, 1)};
  auto f = oscr_curve(flat);
  REQUIRE(f.points.size() == 1);
  CHECK(f.points[0].ccr == 0.5);
  CHECK(f.points[0].fpr == 1.0);
  CHECK(ccr_at_fpr(f, 0.5) == 0.0);

  std::vector<ScoredPrediction> only_known = {sp(0.5, false, 0, 0)};
  CHECK_THROWS_AS(oscr_curve(only_known), DomainError);
  CHECK_THROWS_AS(ccr_at_fpr(f, 0.0), DomainError);
  CHECK_THROWS_AS(score_rule_from_string("max"), ConfigError);
}

TEST_CASE("contraction diagnostic") {
  auto p = init_params(std::vector<std::size_t>{8}, 4, 1, AdmmConfig{}, 1);
  p.views[0].layers[0].r = Matrix::Zero(4, 4);
  auto r0 = contraction_diagnostic(p, 0, 0, 200, 1);
  CHECK(r0.r_norm == 0.0);
  CHECK(r0.max_ratio == 0.0);
  CHECK(r0.bound_holds);
  p.views[0].layers[0].r = 0.5 * Matrix::Identity(4, 4);
  auto r1 = contraction_diagnostic(p, 0, 0, 1000, 2);
  CHECK(r1.r_norm == doctest::Approx(0.5));
  CHECK(r1.contractive);
  CHECK(r1.max_ratio <= 0.5 + 1e-9);
  CHECK(r1.trials == 1000);
  p.views[0].layers[0].theta = 0.0;
  auto r2 = contraction_diagnostic(p, 0, 0, 50, 3);
  CHECK(r2.max_ratio == doctest::Approx(0.5));  // linear map without shrinkage
  CHECK_THROWS_AS(contraction_diagnostic(p, 1, 0, 10), DimensionError);
}

TEST_CASE("gradient check helper reports a small error") {
  GradcheckSpec spec;
  auto g = gradient_check(spec);
  CHECK(g.report.max_rel_error < 1e-4);
  CHECK(g.rows == 10);
  CHECK(g.names.size() == g.report.per_param_max.size());
}

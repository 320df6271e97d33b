#include "openviewer/admm_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <random>
#include <sstream>

#include "openviewer/errors.hpp"
#include "openviewer/rng.hpp"
#include "openviewer/runtime.hpp"
#include "openviewer/spectral.hpp"

namespace openviewer {

void AdmmConfig::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0) || !(gamma > 0.0)) {
    throw ConfigError("admm: alpha, beta and gamma must be > 0");
  }
  if (!(tol > 0.0)) throw ConfigError("admm: tol must be > 0");
  if (max_iter < 1) throw ConfigError("admm: max_iter must be >= 1");
}

Matrix soft_threshold(const Matrix& a, double theta) {
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double x = a.data()[i];
    const double m = std::abs(x) - theta;
    out.data()[i] = m > 0.0 ? std::copysign(m, x) : 0.0;
  }
  return out;
}

Matrix group_soft_threshold(const Matrix& a, double rho, GroupAxis axis) {
  Matrix out = Matrix::Zero(a.rows(), a.cols());
  if (axis == GroupAxis::columns) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      const double n = a.col(c).norm();
      if (n > rho) out.col(c) = ((n - rho) / n) * a.col(c);
    }
  } else {
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      const double n = a.row(r).norm();
      if (n > rho) out.row(r) = ((n - rho) / n) * a.row(r);
    }
  }
  return out;
}

double l21_norm(const Matrix& e, GroupAxis axis) {
  double s = 0.0;
  if (axis == GroupAxis::columns) {
    for (Eigen::Index c = 0; c < e.cols(); ++c) s += e.col(c).norm();
  } else {
    for (Eigen::Index r = 0; r < e.rows(); ++r) s += e.row(r).norm();
  }
  return s;
}

double objective(std::span<const ViewFactors> views, std::span<const Matrix> x,
                 const AdmmConfig& config) {
  if (views.size() != x.size()) throw DimensionError("objective: view count mismatch");
  double total = 0.0;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const ViewFactors& f = views[v];
    const Matrix residual = x[v] - f.z * f.d - f.e;
    total += 0.5 * residual.squaredNorm() + config.alpha * f.z.cwiseAbs().sum() +
             0.5 * config.beta * f.d.squaredNorm() +
             config.gamma * l21_norm(f.e, config.group_axis);
  }
  return total;
}

double lipschitz(const Matrix& d) {
  if (d.size() == 0 || d.cwiseAbs().maxCoeff() == 0.0) {
    warn("lipschitz: dictionary is zero, using a unit step");
    return 1.0;
  }
  return 1.01 * gram_spectral_norm(d);
}

Matrix z_step(const ViewFactors& f, const Matrix& x, const AdmmConfig& config) {
  const double inv_l = 1.0 / f.lipschitz;
  const Eigen::Index c = f.d.rows();
  const Matrix r = Matrix::Identity(c, c) - inv_l * (f.d * f.d.transpose());
  const Matrix arg = f.z * r + inv_l * ((x - f.e) * f.d.transpose());
  return soft_threshold(arg, config.alpha * inv_l);
}

Matrix d_step(const ViewFactors& f, const Matrix& x, const AdmmConfig& config) {
  const Eigen::Index c = f.z.cols();
  const Matrix gram = f.z.transpose() * f.z + config.beta * Matrix::Identity(c, c);
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) {
    const Vector diag = gram.diagonal();
    std::ostringstream msg;
    msg << "d_step: Cholesky factorization failed (Z^T Z + beta I not SPD); diagonal range ["
        << diag.minCoeff() << ", " << diag.maxCoeff() << "]";
    throw NumericError(msg.str());
  }
  return llt.solve(f.z.transpose() * (x - f.e));
}

Matrix e_step(const ViewFactors& f, const Matrix& x, const AdmmConfig& config) {
  const double threshold = config.exact_e_prox ? config.gamma : config.gamma / f.lipschitz;
  return group_soft_threshold(x - f.z * f.d, threshold, config.group_axis);
}

Matrix random_dictionary(int rank, int dim, std::uint64_t seed, std::uint64_t stream) {
  Rng rng = make_rng(seed, "admm-init", stream);
  std::normal_distribution<double> normal;
  Matrix d(rank, dim);
  for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = normal(rng);
  for (Eigen::Index r = 0; r < d.rows(); ++r) d.row(r).normalize();
  return d;
}

std::vector<ViewFactors> initial_factors(std::span<const Matrix> x, const AdmmConfig& config) {
  if (config.rank < 1) throw ConfigError("admm: rank must be set (>= 1)");
  std::vector<ViewFactors> views;
  for (std::size_t v = 0; v < x.size(); ++v) {
    ViewFactors f;
    f.z = Matrix::Zero(x[v].rows(), config.rank);
    f.d = random_dictionary(config.rank, static_cast<int>(x[v].cols()), config.seed, v);
    f.e = Matrix::Zero(x[v].rows(), x[v].cols());
    f.lipschitz = lipschitz(f.d);
    views.push_back(std::move(f));
  }
  return views;
}

namespace {

void iterate_view(ViewFactors& f, const Matrix& x, const AdmmConfig& config) {
  f.z = z_step(f, x, config);
  f.d = d_step(f, x, config);
  f.lipschitz = lipschitz(f.d);
  f.e = e_step(f, x, config);
}

}  // namespace

AdmmState solve_from(std::vector<ViewFactors> start, std::span<const Matrix> x,
                     const AdmmConfig& config, AdmmHistory* history) {
  config.validate();
  if (start.size() != x.size()) throw DimensionError("solve: view count mismatch");
  AdmmState state;
  state.views = std::move(start);
  for (ViewFactors& f : state.views) f.lipschitz = lipschitz(f.d);
  state.objective_trace.push_back(objective(state.views, x, config));
  if (history != nullptr) history->push_back(state.views);

  const unsigned threads = thread_cap();
  for (std::size_t it = 0; it < config.max_iter; ++it) {
    if (threads > 1 && state.views.size() > 1) {
      std::vector<std::future<void>> jobs;
      for (std::size_t v = 0; v < state.views.size(); ++v) {
        jobs.push_back(std::async(std::launch::async, [&, v] {
          iterate_view(state.views[v], x[v], config);
        }));
      }
      for (auto& j : jobs) j.get();
    } else {
      for (std::size_t v = 0; v < state.views.size(); ++v) {
        iterate_view(state.views[v], x[v], config);
      }
    }
    const double prev = state.objective_trace.back();
    const double cur = objective(state.views, x, config);
    if (!std::isfinite(cur)) throw NumericError("admm: objective became non-finite");
    state.objective_trace.push_back(cur);
    state.iterations = it + 1;
    if (history != nullptr) history->push_back(state.views);
    const double denom = std::max(std::abs(prev), std::numeric_limits<double>::min());
    if (std::abs(prev - cur) / denom < config.tol || std::isinf(config.tol)) break;
  }
  return state;
}

double relative_reconstruction_error(std::span<const ViewFactors> views,
                                     std::span<const Matrix> x) {
  if (views.size() != x.size()) throw DimensionError("reconstruction error: view count mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t v = 0; v < views.size(); ++v) {
    num += (x[v] - views[v].z * views[v].d - views[v].e).squaredNorm();
    den += x[v].squaredNorm();
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

std::vector<int> group_support(const Matrix& e, GroupAxis axis, double tol) {
  std::vector<int> out;
  const Eigen::Index groups = axis == GroupAxis::columns ? e.cols() : e.rows();
  for (Eigen::Index g = 0; g < groups; ++g) {
    const double n = axis == GroupAxis::columns ? e.col(g).norm() : e.row(g).norm();
    if (n > tol) out.push_back(static_cast<int>(g));
  }
  return out;
}

double support_f1(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.empty() && truth.empty()) return 1.0;
  std::size_t hit = 0;
  for (int p : predicted) hit += std::find(truth.begin(), truth.end(), p) != truth.end();
  return 2.0 * static_cast<double>(hit) / static_cast<double>(predicted.size() + truth.size());
}

AdmmState solve(std::span<const Matrix> x, const AdmmConfig& config, AdmmHistory* history) {
  config.validate();
  return solve_from(initial_factors(x, config), x, config, history);
}

}  // namespace openviewer

#pragma once

// Excess-risk evaluation (exact quadratic forms and Monte Carlo over the target
// task distribution), representation-quality metrics, the representation
// covariance/divergence pair, and Gaussian-width estimators.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

#include "replearn/error.hpp"
#include "replearn/estimators.hpp"
#include "replearn/linops.hpp"
#include "replearn/rng.hpp"
#include "replearn/taskgen.hpp"

namespace replearn {

struct RiskReport {
  double er_mean = 0.0;
  double er_se = 0.0;
  std::size_t n_draws = 1;
  double rep_term = 0.0;
  double noise_term = 0.0;
  double subspace_dist = 0.0;
};

struct RepCovariance {
  Matrix sigma_blocks;  // 2k x 2k
  Matrix divergence;    // k x k
};

struct WidthEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
};

enum class Method { lowdim, nuclear, relu, baseline_ridge, baseline_nn_scratch };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::lowdim: return "lowdim";
    case Method::nuclear: return "nuclear";
    case Method::relu: return "relu";
    case Method::baseline_ridge: return "baseline-ridge";
    case Method::baseline_nn_scratch: return "baseline-nn-scratch";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "lowdim") return Method::lowdim;
  if (s == "nuclear") return Method::nuclear;
  if (s == "relu") return Method::relu;
  if (s == "baseline-ridge") return Method::baseline_ridge;
  if (s == "baseline-nn-scratch") return Method::baseline_nn_scratch;
  throw InvalidInput("unknown method '" + std::string(s) + "'");
}

namespace risk {

// ER = 1/2 (B_hat w_hat - B* w*)^T Sigma (B_hat w_hat - B* w*).
inline double excess_risk_linear(const Matrix& B_hat, const Vector& w_hat, const Matrix& B_star,
                                 const Vector& w_star, const Matrix& Sigma) {
  if (B_hat.cols() != w_hat.size() || B_star.cols() != w_star.size() ||
      B_hat.rows() != B_star.rows() || Sigma.rows() != B_hat.rows() ||
      Sigma.cols() != Sigma.rows())
    throw InvalidInput("excess_risk_linear: dimension mismatch");
  const Vector delta = B_hat * w_hat - B_star * w_star;
  return std::max(0.0, 0.5 * delta.dot(Sigma * delta));
}

inline double excess_risk_theta(const Vector& theta_hat, const Vector& theta_star,
                                const Matrix& Sigma) {
  if (theta_hat.size() != theta_star.size() || Sigma.rows() != theta_hat.size())
    throw InvalidInput("excess_risk_theta: dimension mismatch");
  const Vector delta = theta_hat - theta_star;
  return std::max(0.0, 0.5 * delta.dot(Sigma * delta));
}

// ||P_perp(Sigma^{1/2} B_hat) Sigma^{1/2} B*||_F / sqrt(k).
inline double subspace_distance(const Matrix& B_hat, const Matrix& B_star, const Matrix& Sigma) {
  if (B_hat.rows() != B_star.rows() || Sigma.rows() != B_hat.rows())
    throw InvalidInput("subspace_distance: dimension mismatch");
  if (B_star.cols() == 0) return 0.0;
  const Matrix root = linops::psd_sqrt(Sigma);
  const Matrix target = root * B_star;
  const Matrix basis = linops::range_basis(root * B_hat);
  const Matrix resid = target - basis * (basis.transpose() * target);
  return resid.norm() / std::sqrt(static_cast<double>(B_star.cols()));
}

// (1/2n) ||P_perp(F) C||_F^2: the part of the target signal (second moment CC^T)
// that the feature matrix F cannot express on the sampled inputs.
inline double in_sample_rep_error(const Matrix& F, const Matrix& C) {
  const double n = static_cast<double>(F.rows());
  Matrix resid = C;
  if (F.cols() > 0) {
    const Matrix basis = linops::range_basis(F);
    resid -= basis * (basis.transpose() * C);
  }
  return 0.5 * resid.squaredNorm() / n;
}

// Empirical (optionally weighted) Lambda and divergence from feature matrices
// F = phi(X), G = phi'(X). Weights must be nonnegative; they are normalized.
inline RepCovariance rep_covariance(const Matrix& F, const Matrix& G,
                                    const Vector* weights = nullptr) {
  if (F.rows() < 1 || F.rows() != G.rows() || F.cols() != G.cols())
    throw InvalidInput("rep_covariance: feature shapes must match with n >= 1");
  const Eigen::Index k = F.cols();
  const Eigen::Index n = F.rows();
  Vector w = Vector::Constant(n, 1.0 / static_cast<double>(n));
  if (weights) {
    if (weights->size() != n || (weights->array() < 0.0).any() || !(weights->sum() > 0.0))
      throw InvalidInput("rep_covariance: weights must be nonnegative with positive sum");
    w = *weights / weights->sum();
  }
  Matrix stacked(n, 2 * k);
  stacked << F, G;
  Matrix lambda = stacked.transpose() * w.asDiagonal() * stacked;
  lambda = 0.5 * (lambda + lambda.transpose());
  const Matrix s_ff = lambda.topLeftCorner(k, k);
  const Matrix s_fg = lambda.topRightCorner(k, k);
  const Matrix s_gg = lambda.bottomRightCorner(k, k);
  Matrix div = s_gg - s_fg.transpose() * linops::pinv(s_ff) * s_fg;
  div = 0.5 * (div + div.transpose());
  return {std::move(lambda), std::move(div)};
}

using FeatureMap = std::function<Matrix(const Matrix&)>;

inline FeatureMap linear_features(Matrix B) {
  return [B = std::move(B)](const Matrix& x) { return Matrix(x * B); };
}
inline FeatureMap relu_features(Matrix B) {
  return [B = std::move(B)](const Matrix& x) { return taskgen::relu(x * B); };
}

inline RepCovariance rep_covariance(const FeatureMap& phi, const FeatureMap& phi_prime,
                                    const Matrix& sample_X) {
  if (sample_X.rows() < 1) throw InvalidInput("rep_covariance needs a nonempty sample");
  return rep_covariance(phi(sample_X), phi_prime(sample_X));
}

// Monte-Carlo mean of sup_{v in K} <v, z> over standard Gaussian z.
inline WidthEstimate gaussian_width_mc(const std::function<double(const Vector&)>& sup_oracle,
                                       Eigen::Index dim, std::size_t mc_draws,
                                       std::uint64_t seed) {
  if (mc_draws < 1 || dim < 1) throw InvalidInput("gaussian_width_mc needs draws >= 1, dim >= 1");
  Rng rng(seed, "gaussian_width");
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < mc_draws; ++i) {
    const double v = sup_oracle(rng.normal_vector(dim));
    const double delta = v - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (v - mean);
  }
  WidthEstimate out;
  out.estimate = mean;
  if (mc_draws > 1)
    out.standard_error =
        std::sqrt(m2 / static_cast<double>(mc_draws - 1) / static_cast<double>(mc_draws));
  return out;
}

namespace detail {

// f(V) = sum_t ||P_{X_t V} z_t||^2 and its Euclidean gradient in V.
inline double width_objective(const std::vector<Matrix>& xs, const Matrix& z, const Matrix& V,
                              Matrix* grad) {
  double f = 0.0;
  if (grad) grad->setZero(V.rows(), V.cols());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const auto col = static_cast<Eigen::Index>(t);
    const Matrix a = xs[t] * V;
    const Vector coef = linops::pinv(a) * z.col(col);
    const Vector fitted = a * coef;
    f += fitted.squaredNorm();
    if (grad) {
      const Vector resid = z.col(col) - fitted;
      grad->noalias() += 2.0 * xs[t].transpose() * resid * coef.transpose();
    }
  }
  return f;
}

inline double width_ascent(const std::vector<Matrix>& xs, const Matrix& z, Matrix V) {
  constexpr int kIters = 60;
  Matrix grad;
  double f = width_objective(xs, z, V, &grad);
  double step = 1.0 / std::max(1.0, z.squaredNorm());
  for (int it = 0; it < kIters; ++it) {
    const Matrix riem = grad - V * (0.5 * (V.transpose() * grad + grad.transpose() * V));
    if (riem.norm() <= 1e-10 * std::max(1.0, f)) break;
    bool improved = false;
    for (int bt = 0; bt < 30; ++bt) {
      const Matrix trial = linops::orthonormalize(V + step * riem);
      Matrix trial_grad;
      const double ft = width_objective(xs, z, trial, &trial_grad);
      if (ft > f) {
        V = trial;
        f = ft;
        grad = std::move(trial_grad);
        step *= 2.0;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
  }
  return f;
}

}  // namespace detail

// Lower estimate of the Gaussian width of F_X(Phi) for linear Phi: per draw,
// the best value over restarts of projected gradient ascent on d x 2k
// orthonormal V of sqrt(sum_t ||P_{X_t V} z_t||^2).
inline WidthEstimate linear_class_width(const std::vector<Matrix>& xs, std::size_t k,
                                        std::size_t mc_draws, std::size_t restarts,
                                        std::uint64_t seed) {
  if (xs.empty()) throw InvalidInput("linear_class_width needs T >= 1");
  if (mc_draws < 1 || restarts < 1) throw InvalidInput("linear_class_width needs draws, restarts >= 1");
  const Eigen::Index d = xs[0].cols();
  const Eigen::Index n1 = xs[0].rows();
  const auto T = static_cast<Eigen::Index>(xs.size());
  if (static_cast<Eigen::Index>(k) > d) throw InvalidInput("linear_class_width needs k <= d");
  WidthEstimate out;
  if (k == 0) return out;
  const Eigen::Index cols = std::min<Eigen::Index>(2 * static_cast<Eigen::Index>(k), d);

  std::vector<double> values;
  values.reserve(mc_draws);
  for (std::size_t draw = 0; draw < mc_draws; ++draw) {
    Rng zrng(seed, "width_draw", draw);
    const Matrix z = zrng.normal_matrix(n1, T);
    double best = 0.0;
    for (std::size_t restart = 0; restart < restarts; ++restart) {
      Rng vrng(stream_seed(seed, "width_init", draw), "restart", restart);
      const Matrix v0 = linops::orthonormalize(vrng.normal_matrix(d, cols));
      const double f = cols == d ? detail::width_objective(xs, z, v0, nullptr)
                                 : detail::width_ascent(xs, z, v0);
      best = std::max(best, std::sqrt(std::max(f, 0.0)));
    }
    values.push_back(best);
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  out.estimate = mean;
  if (values.size() > 1)
    out.standard_error = std::sqrt(var / static_cast<double>(values.size() - 1) /
                                   static_cast<double>(values.size()));
  return out;
}

// 1/2 mean over the evaluation inputs of (f_hat - f*)^2.
inline double nn_excess_risk(const Vector& predicted, const Vector& truth) {
  if (predicted.size() != truth.size() || predicted.size() == 0)
    throw InvalidInput("nn_excess_risk: prediction lengths must match");
  return 0.5 * (predicted - truth).squaredNorm() / static_cast<double>(predicted.size());
}

}  // namespace risk

// A source-side fit ready for target evaluation.
struct FittedRepresentation {
  Method method = Method::lowdim;
  Matrix B_hat;  // d x k (lowdim), d x T (nuclear), d0 x width (relu); empty for baselines
};

struct RiskOptions {
  std::size_t nu_draws = 200;
  std::uint64_t seed = 0;
  // Target-head norm budget; NaN selects the track default
  // (2 sqrt(R/T) for nuclear, sqrt((||B*||^2 + ||W*||^2)/T) for relu).
  double r = std::numeric_limits<double>::quiet_NaN();
  std::optional<Vector> point_mass;  // diagnostic: every draw uses this target weight
  std::size_t eval_samples = 20000;  // NN population-risk sample size
  std::size_t nn_width = 0;          // scratch-baseline width (0: twice the teacher width)
  double nn_lambda = 1e-3;
  FitOptions nn_opts{};
};

namespace risk {

inline double default_budget(Method method, const GroundTruth& gt) {
  const double T = static_cast<double>(gt.T());
  if (method == Method::relu)
    return std::sqrt((gt.B_star.squaredNorm() + gt.W_star.squaredNorm()) / T);
  return 2.0 * std::sqrt(gt.R / T);
}

// Expected excess risk over the target-task distribution. Each draw samples a
// target weight and fresh target data from streams derived from (seed, draw),
// fits the target head on top of the fixed representation, and evaluates ER on
// the target population. `spec` drives target sampling (n2, sigma, inputs).
inline RiskReport expected_excess_risk(const EnsembleSpec& spec, const GroundTruth& gt,
                                       const FittedRepresentation& rep, const RiskOptions& opts) {
  if (opts.nu_draws < 1) throw InvalidInput("expected_excess_risk needs nu_draws >= 1");
  const Track track = spec.track;
  const Matrix& sigma_target = gt.target_sigma();
  const double T = static_cast<double>(gt.T());
  const bool nn_track = track == Track::relu;
  const std::size_t draws = opts.point_mass ? 1 : opts.nu_draws;

  // Second-moment factor C with C C^T = E beta beta^T (linear) or the relu analogue.
  Matrix signal_factor;
  switch (track) {
    case Track::lowdim:
      signal_factor = gt.B_star / std::sqrt(static_cast<double>(gt.B_star.cols()));
      break;
    case Track::highdim: signal_factor = gt.Theta_star / std::sqrt(T); break;
    case Track::relu: signal_factor = gt.W_star / std::sqrt(T); break;
  }
  if (opts.point_mass) {
    signal_factor = track == Track::lowdim ? Matrix(gt.B_star * *opts.point_mass)
                                           : Matrix(*opts.point_mass);
  }

  Matrix eval_x;
  if (nn_track) {
    Rng rng(opts.seed, "nn_eval");
    const bool identity = spec.covariance_family == CovarianceFamily::identity;
    eval_x = taskgen::sample_inputs(spec.input_dist, gt.sigma_roots.back(), identity,
                                    static_cast<Eigen::Index>(opts.eval_samples), rng);
  }
  const Matrix teacher_eval = nn_track ? taskgen::relu(eval_x * gt.B_star) : Matrix();

  const double budget = std::isnan(opts.r) ? default_budget(rep.method, gt) : opts.r;
  std::vector<double> ers;
  ers.reserve(draws);
  double rep_acc = 0.0;

  for (std::size_t i = 0; i < draws; ++i) {
    const Vector weight = opts.point_mass
                              ? *opts.point_mass
                              : taskgen::sample_target_weight(
                                    gt, track, stream_seed(opts.seed, "nu_weight", i));
    Rng data_rng(opts.seed, "nu_data", i);
    const taskgen::LabeledSample s =
        taskgen::sample_labeled(spec, gt, gt.T(), weight, spec.n2, data_rng);

    // Ambient-space truth for linear tracks.
    Vector beta;
    if (track == Track::lowdim) beta = gt.B_star * weight;
    if (track == Track::highdim) beta = weight;

    double er = 0.0;
    Matrix features;
    Matrix truth_features;
    switch (rep.method) {
      case Method::lowdim: {
        const Vector w = estimators::fit_target_linear(rep.B_hat, s.X, s.y);
        er = excess_risk_theta(rep.B_hat * w, beta, sigma_target);
        features = s.X * rep.B_hat;
        break;
      }
      case Method::nuclear: {
        const Vector w = estimators::fit_target_constrained(rep.B_hat, s.X, s.y, budget);
        er = excess_risk_theta(rep.B_hat * w, beta, sigma_target);
        features = s.X * rep.B_hat;
        break;
      }
      case Method::baseline_ridge: {
        if (nn_track) throw InvalidInput("baseline-ridge applies to linear tracks");
        const Vector b = estimators::baseline_target_ridge(s.X, s.y, beta.norm());
        er = excess_risk_theta(b, beta, sigma_target);
        features = s.X;
        break;
      }
      case Method::relu: {
        const Vector w = estimators::fit_relu_target(rep.B_hat, s.X, s.y, budget);
        er = nn_excess_risk(taskgen::relu(eval_x * rep.B_hat) * w, teacher_eval * weight);
        features = taskgen::relu(s.X * rep.B_hat);
        break;
      }
      case Method::baseline_nn_scratch: {
        if (!nn_track) throw InvalidInput("baseline-nn-scratch applies to the relu track");
        FitOptions o = opts.nn_opts;
        o.seed = stream_seed(opts.seed, "nn_scratch", i);
        const std::size_t width = opts.nn_width ? opts.nn_width : 2 * gt.B_star.cols();
        const estimators::ReluParams net =
            estimators::fit_nn_scratch(s.X, s.y, width, opts.nn_lambda, o);
        er = nn_excess_risk(taskgen::relu(eval_x * net.B) * net.W.col(0),
                            teacher_eval * weight);
        features = taskgen::relu(s.X * net.B);
        break;
      }
    }
    ers.push_back(er);
    if (nn_track) {
      truth_features = taskgen::relu(s.X * gt.B_star) * signal_factor;
    } else {
      truth_features = s.X * signal_factor;
    }
    rep_acc += in_sample_rep_error(features, truth_features);
  }

  RiskReport out;
  out.n_draws = draws;
  double mean = 0.0;
  for (double e : ers) mean += e;
  mean /= static_cast<double>(draws);
  double var = 0.0;
  for (double e : ers) var += (e - mean) * (e - mean);
  out.er_mean = mean;
  out.er_se = draws > 1 ? std::sqrt(var / static_cast<double>(draws - 1) /
                                    static_cast<double>(draws))
                        : 0.0;
  out.rep_term = rep_acc / static_cast<double>(draws);
  out.noise_term = std::max(0.0, out.er_mean - out.rep_term);

  if (rep.method == Method::baseline_ridge || rep.method == Method::baseline_nn_scratch) {
    out.subspace_dist = 0.0;
  } else if (nn_track) {
    out.subspace_dist = rep.B_hat.size() ? subspace_distance(rep.B_hat, gt.B_star,
                                                             Matrix::Identity(gt.B_star.rows(),
                                                                              gt.B_star.rows()))
                                         : 1.0;
  } else {
    out.subspace_dist = subspace_distance(rep.B_hat, gt.B_star, sigma_target);
  }
  return out;
}

}  // namespace risk

using risk::excess_risk_linear;
using risk::expected_excess_risk;
using risk::gaussian_width_mc;
using risk::linear_class_width;
using risk::rep_covariance;
using risk::subspace_distance;

}  // namespace replearn

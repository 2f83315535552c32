#pragma once

// Numerical checks of the algebraic identities and concentration bounds the
// theory relies on. Exact-algebra checks must pass every trial; probabilistic
// checks must pass in at least a 1 - delta fraction of trials with the frozen
// constants of constants.hpp.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "replearn/constants.hpp"
#include "replearn/error.hpp"
#include "replearn/estimators.hpp"
#include "replearn/linops.hpp"
#include "replearn/parallel.hpp"
#include "replearn/risk.hpp"
#include "replearn/rng.hpp"
#include "replearn/taskgen.hpp"

namespace replearn {

struct CheckOutcome {
  std::string name;
  std::size_t trials = 0;
  double pass_fraction = 0.0;
  double worst_margin = 0.0;  // smallest (allowed - observed) / |allowed|; negative = violation
  std::optional<double> calibrated_constant;
  std::size_t skipped = 0;
  double required_fraction = 1.0;
  std::optional<double> median_ratio;  // median observed / allowed, when meaningful
  std::optional<double> constant_limit;  // calibrated_constant must not exceed this when set

  bool passed() const {
    if (constant_limit && !(calibrated_constant && *calibrated_constant <= *constant_limit))
      return false;
    return trials > skipped && pass_fraction >= required_fraction;
  }

  // One line, stable field order.
  std::string report_line() const {
    char buf[512];
    std::string constant = "NA";
    if (calibrated_constant) {
      char c[64];
      std::snprintf(c, sizeof c, "%.6g", *calibrated_constant);
      constant = c;
    }
    std::snprintf(buf, sizeof buf,
                  "name=%s trials=%zu pass_fraction=%.6g worst_margin=%.6g "
                  "calibrated_constant=%s skipped=%zu required=%.6g",
                  name.c_str(), trials, pass_fraction, worst_margin, constant.c_str(), skipped,
                  required_fraction);
    std::string line = buf;
    if (median_ratio) {
      std::snprintf(buf, sizeof buf, " median_ratio=%.6g", *median_ratio);
      line += buf;
    }
    if (constant_limit) {
      std::snprintf(buf, sizeof buf, " constant_limit=%.6g", *constant_limit);
      line += buf;
    }
    return line;
  }
};

namespace lemmalab {

struct Trial {
  bool pass = false;
  bool skipped = false;
  double margin = std::numeric_limits<double>::infinity();
  double ratio = 0.0;
};

namespace detail {

inline double relative_slack(double allowed, double observed) {
  const double scale = std::max(std::abs(allowed), std::numeric_limits<double>::min());
  return (allowed - observed) / scale;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline CheckOutcome aggregate(std::string name, const std::vector<Trial>& trials,
                              double required, bool with_ratio = false) {
  CheckOutcome out;
  out.name = std::move(name);
  out.trials = trials.size();
  out.required_fraction = required;
  std::size_t passed = 0;
  double worst = std::numeric_limits<double>::infinity();
  std::vector<double> ratios;
  for (const Trial& t : trials) {
    if (t.skipped) {
      ++out.skipped;
      continue;
    }
    if (t.pass) ++passed;
    worst = std::min(worst, t.margin);
    ratios.push_back(t.ratio);
  }
  const std::size_t active = out.trials - out.skipped;
  out.pass_fraction = active ? static_cast<double>(passed) / static_cast<double>(active) : 0.0;
  out.worst_margin = active ? worst : 0.0;
  if (with_ratio) out.median_ratio = median(ratios);
  return out;
}

template <typename Fn>
std::vector<Trial> run_trials(std::size_t count, Fn&& fn) {
  std::vector<Trial> out(count);
  parallel_for(count, [&](std::size_t i) { out[i] = fn(i); });
  return out;
}

inline double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

inline Eigen::Index uniform_int(Rng& rng, Eigen::Index lo, Eigen::Index hi) {
  return lo + static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
}

// Input sample with covariance Sigma and the spec's whitened distribution.
inline Matrix draw_inputs(InputDist dist, const Matrix& sigma_root, Eigen::Index n, Rng& rng) {
  return taskgen::sample_inputs(dist, sigma_root, false, n, rng);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Exact identities

inline bool move_x_within(const Matrix& x, double lambda, double relative_threshold) {
  const double gap = linops::resolvent_commute_gap(x, lambda);
  return gap <= relative_threshold * (1.0 + linops::spectral_norm(x));
}

inline CheckOutcome check_move_x(std::size_t trials, std::uint64_t seed) {
  auto trials_out = detail::run_trials(trials, [&](std::size_t i) {
    Rng rng(seed, "move_x", i);
    const Eigen::Index n = detail::uniform_int(rng, 1, 30);
    const Eigen::Index m = detail::uniform_int(rng, 1, 30);
    const double lambda = detail::log_uniform(rng, 1e-6, 1e3);
    const double scale = detail::log_uniform(rng, 1e-2, 1e2);
    const Matrix x = scale * rng.normal_matrix(n, m);
    const double allowed = 1e-9 * (1.0 + linops::spectral_norm(x));
    const double gap = linops::resolvent_commute_gap(x, lambda);
    Trial t;
    t.pass = gap <= allowed;
    t.margin = detail::relative_slack(allowed, gap);
    t.ratio = gap / allowed;
    return t;
  });
  return detail::aggregate("move_x", trials_out, 1.0);
}

inline double loewner_side(const Matrix& a, const Matrix& b, const Matrix& b_prime) {
  if (a.rows() == 0) return 0.0;
  const Matrix ab = a * b;
  const Matrix target = a * b_prime;
  const Matrix basis = linops::range_basis(ab);
  return (target - basis * (basis.transpose() * target)).squaredNorm();
}

inline CheckOutcome check_loewner(std::size_t trials, std::uint64_t seed) {
  auto trials_out = detail::run_trials(trials, [&](std::size_t i) {
    Rng rng(seed, "loewner", i);
    const Eigen::Index m = detail::uniform_int(rng, 1, 10);
    const Eigen::Index p = detail::uniform_int(rng, 1, 15);
    const Eigen::Index q = detail::uniform_int(rng, 0, 15);
    const Eigen::Index k = detail::uniform_int(rng, 1, m);
    const Eigen::Index k2 = detail::uniform_int(rng, 1, 6);
    const Matrix a2 = rng.normal_matrix(p, m);
    Matrix a1(p + q, m);
    a1 << a2, rng.normal_matrix(q, m);
    const Matrix b = rng.normal_matrix(m, k);
    const Matrix b_prime = rng.normal_matrix(m, k2);
    const double lhs = loewner_side(a1, b, b_prime);
    const double rhs = loewner_side(a2, b, b_prime);
    Trial t;
    t.pass = lhs >= rhs - 1e-8;
    t.margin = detail::relative_slack(lhs + 1e-8, rhs);
    t.ratio = rhs / (lhs + 1e-8);
    return t;
  });
  return detail::aggregate("loewner", trials_out, 1.0);
}

// D_q >= alpha D_q' for q = alpha q' + (1 - alpha) q'' (so Lambda_q >= alpha Lambda_q'),
// with q', q'' empirical measures and linear representations.
inline CheckOutcome check_cov_implies_div(std::size_t trials, std::uint64_t seed) {
  auto trials_out = detail::run_trials(trials, [&](std::size_t i) {
    Rng rng(seed, "cov_implies_div", i);
    const Eigen::Index d = detail::uniform_int(rng, 2, 8);
    const Eigen::Index k = detail::uniform_int(rng, 1, std::min<Eigen::Index>(3, d));
    const Eigen::Index n1 = detail::uniform_int(rng, k + 2, 40);
    const Eigen::Index n2 = detail::uniform_int(rng, k + 2, 40);
    const double alpha = i % 10 == 0 ? 1.0 : rng.uniform(0.05, 1.0);
    const Matrix b = rng.normal_matrix(d, k);
    const Matrix b_prime = rng.normal_matrix(d, k);
    const Matrix x1 = rng.normal_matrix(n1, d);
    const Matrix x2 = rng.normal_matrix(n2, d);

    Matrix x(n1 + n2, d);
    x << x1, x2;
    Vector w(n1 + n2);
    w.head(n1).setConstant(alpha / static_cast<double>(n1));
    w.tail(n2).setConstant((1.0 - alpha) / static_cast<double>(n2));
    const RepCovariance q = risk::rep_covariance(x * b, x * b_prime, &w);
    const RepCovariance q1 = risk::rep_covariance(x1 * b, x1 * b_prime);
    const double min_eig = linops::min_eigenvalue(q.divergence - alpha * q1.divergence);
    const double tol = 1e-8 * (1.0 + linops::max_eigenvalue(q.sigma_blocks));
    Trial t;
    t.pass = min_eig >= -tol;
    t.margin = detail::relative_slack(tol, -min_eig);
    t.ratio = -min_eig / tol;
    return t;
  });
  return detail::aggregate("cov_implies_div", trials_out, 1.0);
}

// Both evaluation paths of E_nu ||Sigma^{1/2}(theta - B w_lambda(theta))||^2 for
// theta ~ N(0, Theta* Theta*^T / T): through the second-moment matrix, and
// through the per-task population ridge fits averaged over the T columns.
struct IdentitySides {
  double lhs = 0.0;
  double rhs = 0.0;
};

inline IdentitySides source_target_sides(const Matrix& sigma, const Matrix& theta_star,
                                         const Matrix& b_hat, double lambda) {
  const double T = static_cast<double>(theta_star.cols());
  const Eigen::Index d = sigma.rows();
  Matrix sys = b_hat.transpose() * sigma * b_hat;
  sys.diagonal().array() += lambda;

  // Per-task path.
  const Eigen::LDLT<Matrix> ldlt(sys);
  const Matrix root = linops::psd_sqrt(sigma);
  double rhs = 0.0;
  for (Eigen::Index t = 0; t < theta_star.cols(); ++t) {
    const Vector theta = theta_star.col(t);
    const Vector w = ldlt.solve(b_hat.transpose() * (sigma * theta));
    rhs += (root * (theta - b_hat * w)).squaredNorm();
  }
  rhs /= T;

  // Second-moment path.
  const Matrix s = sys.completeOrthogonalDecomposition().solve(b_hat.transpose() * sigma);
  const Matrix resid = Matrix::Identity(d, d) - b_hat * s;
  const Matrix cov = theta_star * theta_star.transpose() / T;
  const double lhs = (resid.transpose() * sigma * resid * cov).trace();
  return {lhs, rhs};
}

inline CheckOutcome check_source_target_identity(const EnsembleSpec& spec, std::size_t trials,
                                                 std::uint64_t seed) {
  auto trials_out = detail::run_trials(trials, [&](std::size_t i) {
    EnsembleSpec s = spec;
    s.track = Track::highdim;
    s.master_seed = stream_seed(seed, "source_target", i);
    const GroundTruth gt = sample_ground_truth(s);
    Rng rng(seed, "source_target_rep", i);
    const Matrix b_hat = rng.normal_matrix(static_cast<Eigen::Index>(s.d),
                                           static_cast<Eigen::Index>(s.k));
    const double lambda = detail::log_uniform(rng, 1e-3, 10.0);
    const IdentitySides sides = source_target_sides(gt.target_sigma(), gt.Theta_star, b_hat, lambda);
    const double allowed = 1e-8 * (1.0 + sides.rhs);
    const double gap = std::abs(sides.lhs - sides.rhs);
    Trial t;
    t.pass = gap <= allowed;
    t.margin = detail::relative_slack(allowed, gap);
    t.ratio = gap / allowed;
    return t;
  });
  return detail::aggregate("source_target_identity", trials_out, 1.0);
}

// ---------------------------------------------------------------------------
// Source-regularization guarantee under the lambda condition.

struct NormThetaResult {
  bool skipped = false;
  double lambda = 0.0;
  double threshold = 0.0;
  double fit_term = 0.0;  // (1/n1) ||X(Theta_hat - Theta*)||_F^2
  double fit_bound = 0.0;
  double norm_hat = 0.0;
  double norm_bound = 0.0;
  double grad_residual = 0.0;
};

inline NormThetaResult norm_theta_trial(const EnsembleSpec& spec, const GroundTruth& gt,
                                        const TaskBundle& b,
                                        std::optional<double> lambda_override) {
  NormThetaResult r;
  r.threshold = estimators::oracle_nuclear_lambda(b);
  if (lambda_override) {
    r.lambda = *lambda_override;
  } else {
    r.lambda = std::max(estimators::default_nuclear_lambda(spec.sigma, spec.T, spec.n1,
                                                           gt.target_sigma()),
                        r.threshold);
    if (!(r.lambda > 0.0)) r.lambda = 1e-8;
  }
  if (r.lambda < r.threshold) {
    r.skipped = true;
    return r;
  }
  FitOptions opts;
  opts.max_iter = 20000;
  opts.tol = 1e-15;
  const FitResult fit = estimators::fit_nuclear_mtl(b, r.lambda, opts);
  r.grad_residual = fit.grad_residual;
  if (!(fit.grad_residual <= estimators::kNuclearCertificate)) {
    r.skipped = true;
    return r;
  }
  const double n1 = static_cast<double>(b.X[0].rows());
  double acc = 0.0;
  for (std::size_t t = 0; t < b.X.size(); ++t) {
    const auto col = static_cast<Eigen::Index>(t);
    acc += (b.X[t] * (fit.Theta_hat.col(col) - gt.Theta_star.col(col))).squaredNorm();
  }
  r.fit_term = acc / n1;
  r.fit_bound = constants::kNormThetaFactor * r.lambda * gt.R;
  r.norm_hat = linops::nuclear_norm(fit.Theta_hat);
  r.norm_bound = constants::kNormThetaFactor * gt.R;
  return r;
}

inline CheckOutcome check_norm_theta(const EnsembleSpec& spec, std::size_t trials,
                                     std::uint64_t seed,
                                     std::optional<double> lambda_override = std::nullopt) {
  auto trials_out = detail::run_trials(trials, [&](std::size_t i) {
    EnsembleSpec s = spec;
    s.track = Track::highdim;
    s.master_seed = stream_seed(seed, "norm_theta", i);
    const GroundTruth gt = sample_ground_truth(s);
    const TaskBundle b = sample_tasks(s, gt);
    const NormThetaResult r = norm_theta_trial(s, gt, b, lambda_override);
    Trial t;
    if (r.skipped) {
      t.skipped = true;
      return t;
    }
    t.pass = r.fit_term <= r.fit_bound && r.norm_hat <= r.norm_bound;
    t.margin = std::min(detail::relative_slack(r.fit_bound, r.fit_term),
                        detail::relative_slack(r.norm_bound, r.norm_hat));
    t.ratio = std::max(r.fit_term / r.fit_bound, r.norm_hat / r.norm_bound);
    return t;
  });
  return detail::aggregate("norm_theta", trials_out, 1.0, true);
}

// ---------------------------------------------------------------------------
// Fixed-design kernel lemma and theorem: shared design X for all tasks.

struct KernelSides {
  double bias = 0.0, bias_bound = 0.0;    // (1/Tn)||(S-I)X Theta*||^2 vs C lambda R / T
  double var = 0.0, var_bound = 0.0;      // (1/n)||S||_F^2 vs C ||K|| R / (n lambda)
  double risk = 0.0, risk_bound = 0.0;    // end-to-end expected ER vs C R (sqrt||K||/sqrt(Tn) + sqrt(Tr K)/(T sqrt n))
  double lambda = 0.0;
};

inline KernelSides kernel_fixed_design_sides(const Matrix& x, const Matrix& theta_star,
                                             const Matrix& z, double sigma,
                                             std::optional<double> lambda_override = std::nullopt) {
  const Eigen::Index T = theta_star.cols();
  const double n = static_cast<double>(x.rows());
  const double Td = static_cast<double>(T);
  const double C = constants::kKernelConstant;
  TaskBundle b;
  for (Eigen::Index t = 0; t < T; ++t) {
    b.X.push_back(x);
    b.Z.push_back(z.col(t));
    b.y.push_back(x * theta_star.col(t) + z.col(t));
  }
  KernelSides s;
  s.lambda = lambda_override ? *lambda_override
                             : std::max(2.0 / n * linops::spectral_norm(x.transpose() * z), 1e-8);
  FitOptions opts;
  opts.max_iter = 20000;
  opts.tol = 1e-15;
  const FitResult fit = estimators::fit_nuclear_mtl(b, s.lambda, opts);
  const Matrix smoother = estimators::fixed_design_smoother(x, fit.B_hat, s.lambda);

  const double R = linops::nuclear_norm(theta_star);
  const Matrix k_mat = x * x.transpose() / n;
  const double k_op = linops::max_eigenvalue(k_mat);
  const double k_tr = k_mat.trace();
  const Matrix signal = x * theta_star;
  s.bias = (smoother * signal - signal).squaredNorm() / (Td * n);
  s.bias_bound = C * s.lambda * R / Td;
  s.var = smoother.squaredNorm() / n;
  s.var_bound = C * k_op * R / (n * s.lambda);
  s.risk = s.bias + sigma * sigma * s.var;
  s.risk_bound = C * R * (std::sqrt(k_op) / std::sqrt(Td * n) + std::sqrt(k_tr) / (Td * std::sqrt(n)));
  return s;
}

inline CheckOutcome check_kernel_fixed_design(const EnsembleSpec& spec, std::size_t trials,
                                              std::uint64_t seed) {
  auto trials_out = detail::run_trials(trials, [&](std::size_t i) {
    EnsembleSpec s = spec;
    s.track = Track::highdim;
    s.master_seed = stream_seed(seed, "kernel_fixed_design", i);
    const GroundTruth gt = sample_ground_truth(s);
    Rng rng(s.master_seed, "shared_design");
    const Matrix x = detail::draw_inputs(s.input_dist, gt.sigma_roots.back(),
                                         static_cast<Eigen::Index>(s.n1), rng);
    const Matrix z = s.sigma * rng.normal_matrix(static_cast<Eigen::Index>(s.n1),
                                                 static_cast<Eigen::Index>(s.T));
    const KernelSides k = kernel_fixed_design_sides(x, gt.Theta_star, z, s.sigma);
    Trial t;
    t.pass = k.bias <= k.bias_bound && k.var <= k.var_bound && k.risk <= k.risk_bound;
    t.margin = std::min({detail::relative_slack(k.bias_bound, k.bias),
                         detail::relative_slack(k.var_bound, k.var),
                         detail::relative_slack(k.risk_bound, k.risk)});
    t.ratio = std::max({k.bias / k.bias_bound, k.var / k.var_bound, k.risk / k.risk_bound});
    return t;
  });
  CheckOutcome out = detail::aggregate("kernel_fixed_design", trials_out, 1.0, true);
  out.calibrated_constant = constants::kKernelConstant;
  return out;
}

// ---------------------------------------------------------------------------
// Probabilistic bounds

// Fraction of trials with 0.9 I <= (1/n) sum a_i a_i^T <= 1.1 I for whitened a_i.
inline double sandwich_frequency(std::size_t d, std::size_t n, std::size_t trials,
                                 std::uint64_t seed, InputDist dist = InputDist::gaussian) {
  std::vector<int> hit(trials, 0);
  parallel_for(trials, [&](std::size_t i) {
    Rng rng(stream_seed(seed, "sandwich", n), "trial", i);
    const auto dd = static_cast<Eigen::Index>(d);
    const auto nn = static_cast<Eigen::Index>(n);
    const Matrix a = dist == InputDist::gaussian ? rng.normal_matrix(nn, dd) : rng.sign_matrix(nn, dd);
    Matrix s = Matrix::Zero(dd, dd);
    s.selfadjointView<Eigen::Lower>().rankUpdate(a.transpose(), 1.0 / static_cast<double>(n));
    s = s.selfadjointView<Eigen::Lower>();
    Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
    const Vector& ev = es.eigenvalues();
    hit[i] = ev(0) >= constants::kSandwichLow && ev(dd - 1) <= constants::kSandwichHigh;
  });
  std::size_t count = 0;
  for (int h : hit) count += static_cast<std::size_t>(h);
  return static_cast<double>(count) / static_cast<double>(trials);
}

// Scans n = ceil(c (d + log(1/delta))) over c = 2^{j/4} until the sandwich
// frequency reaches 1 - delta; reports c = n / (rho^4 (d + log(1/delta))) with rho = 1.
inline CheckOutcome check_covariance_concentration(std::size_t d, double delta,
                                                   std::uint64_t seed,
                                                   std::size_t trials_per_n = 200,
                                                   InputDist dist = InputDist::gaussian) {
  if (d < 1 || !(delta > 0.0 && delta < 1.0))
    throw InvalidInput("check_covariance_concentration needs d >= 1 and delta in (0,1)");
  const double rho4 = 1.0;
  const double unit = static_cast<double>(d) + std::log(1.0 / delta);
  CheckOutcome out;
  out.name = "covariance_concentration_d" + std::to_string(d);
  out.trials = trials_per_n;
  out.required_fraction = 1.0 - delta;
  out.constant_limit = constants::kCovarianceConstantLimit;
  double best = 0.0;
  for (int j = 0; j <= 52; ++j) {
    const double c = std::pow(2.0, j / 4.0);
    const auto n = static_cast<std::size_t>(std::ceil(c * unit));
    if (n < d) continue;
    const double freq = sandwich_frequency(d, n, trials_per_n, seed, dist);
    best = std::max(best, freq);
    if (freq >= 1.0 - delta) {
      out.pass_fraction = freq;
      out.worst_margin = freq - (1.0 - delta);
      out.calibrated_constant = static_cast<double>(n) / (rho4 * unit);
      return out;
    }
  }
  out.pass_fraction = best;
  out.worst_margin = best - (1.0 - delta);
  return out;
}

// (1/sqrt n) ||[X_1^T z_1, ..., X_T^T z_T]||_2 against
// sigma (log 1/delta)^{3/2} log(T + n) sqrt(T ||Sigma|| + Tr Sigma).
inline CheckOutcome check_regularizer_bound(const EnsembleSpec& spec, std::size_t trials,
                                            double delta, std::uint64_t seed) {
  EnsembleSpec base = spec;
  base.track = Track::highdim;
  const std::vector<Matrix> sigmas = make_covariances(base);
  const Matrix& sigma = sigmas.back();
  const Matrix root = linops::psd_sqrt(sigma);
  const double n = static_cast<double>(spec.n1);
  const double Td = static_cast<double>(spec.T);
  const double bound = spec.sigma * std::pow(std::log(1.0 / delta), 1.5) * std::log(Td + n) *
                       std::sqrt(Td * linops::max_eigenvalue(sigma) + sigma.trace());
  auto trials_out = detail::run_trials(trials, [&](std::size_t i) {
    Rng rng(seed, "regularizer_bound", i);
    Matrix adj(static_cast<Eigen::Index>(spec.d), static_cast<Eigen::Index>(spec.T));
    for (std::size_t t = 0; t < spec.T; ++t) {
      const Matrix x = detail::draw_inputs(spec.input_dist, root,
                                           static_cast<Eigen::Index>(spec.n1), rng);
      const Vector z = spec.sigma * rng.normal_vector(static_cast<Eigen::Index>(spec.n1));
      adj.col(static_cast<Eigen::Index>(t)) = x.transpose() * z;
    }
    const double lhs = linops::spectral_norm(adj) / std::sqrt(n);
    Trial t;
    t.pass = lhs <= bound;
    t.margin = bound > 0.0 ? detail::relative_slack(bound, lhs) : (lhs == 0.0 ? 0.0 : -1.0);
    t.ratio = bound > 0.0 ? lhs / bound : 0.0;
    return t;
  });
  CheckOutcome out = detail::aggregate("regularizer_bound", trials_out, 1.0 - delta, true);
  out.calibrated_constant = 1.0;
  return out;
}

// | ||Xv||/sqrt(n) - ||Sigma^{1/2} v|| | <= C rho^2 (sqrt(Tr Sigma) + sqrt(log(2/delta) ||Sigma||)) ||v|| / sqrt(n)
// for a random unit v.
inline CheckOutcome check_matrix_deviation(const EnsembleSpec& spec, std::size_t trials,
                                           double delta, std::uint64_t seed) {
  EnsembleSpec base = spec;
  base.track = Track::highdim;
  const std::vector<Matrix> sigmas = make_covariances(base);
  const Matrix& sigma = sigmas.back();
  const Matrix root = linops::psd_sqrt(sigma);
  const double n = static_cast<double>(spec.n1);
  const double rho2 = 1.0;
  const double width = constants::kDeviationConstant * rho2 *
                       (std::sqrt(sigma.trace()) +
                        std::sqrt(std::log(2.0 / delta) * linops::max_eigenvalue(sigma))) /
                       std::sqrt(n);
  auto trials_out = detail::run_trials(trials, [&](std::size_t i) {
    Rng rng(seed, "matrix_deviation", i);
    const Matrix x = detail::draw_inputs(spec.input_dist, root,
                                         static_cast<Eigen::Index>(spec.n1), rng);
    Vector v = rng.normal_vector(static_cast<Eigen::Index>(spec.d));
    v.normalize();
    const double lhs = std::abs((x * v).norm() / std::sqrt(n) - (root * v).norm());
    const double allowed = width * v.norm();
    Trial t;
    t.pass = lhs <= allowed;
    t.margin = detail::relative_slack(allowed, lhs);
    t.ratio = lhs / allowed;
    return t;
  });
  CheckOutcome out = detail::aggregate("matrix_deviation", trials_out, 1.0 - delta, true);
  out.calibrated_constant = constants::kDeviationConstant;
  return out;
}

// Default ensembles for the named suites.
inline EnsembleSpec suite_spec(std::string_view check) {
  EnsembleSpec s;
  s.sigma = 1.0;
  if (check == "source_target_identity") {
    s.d = 20;
    s.k = 2;
    s.T = 10;
    s.covariance_family = CovarianceFamily::random_psd;
  } else if (check == "norm_theta") {
    s.d = 30;
    s.k = 2;
    s.T = 10;
    s.n1 = 100;
  } else if (check == "kernel_fixed_design") {
    s.d = 25;
    s.k = 2;
    s.T = 8;
    s.n1 = 100;
  } else if (check == "regularizer_bound") {
    s.d = 30;
    s.T = 10;
    s.n1 = 200;
  } else if (check == "matrix_deviation") {
    s.d = 40;
    s.T = 4;
    s.n1 = 100;
  }
  return s;
}

inline constexpr double kSuiteDelta = 0.05;

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {
      "move_x",           "loewner",           "cov_implies_div",
      "source_target_identity", "norm_theta", "kernel_fixed_design",
      "covariance_concentration", "regularizer_bound", "matrix_deviation",
      "algebraic",        "probabilistic",     "all"};
  return names;
}

// Runs a named check, or a group of checks ("algebraic", "probabilistic",
// "all"). trials = 0 picks each check's default count.
inline std::vector<CheckOutcome> run_suite(std::string_view name, std::size_t trials,
                                           std::uint64_t seed) {
  auto n = [&](std::size_t def) { return trials ? trials : def; };
  std::vector<CheckOutcome> out;
  auto one = [&](std::string_view c) {
    if (c == "move_x") out.push_back(check_move_x(n(200), seed));
    else if (c == "loewner") out.push_back(check_loewner(n(500), seed));
    else if (c == "cov_implies_div") out.push_back(check_cov_implies_div(n(200), seed));
    else if (c == "source_target_identity")
      out.push_back(check_source_target_identity(suite_spec(c), n(50), seed));
    else if (c == "norm_theta") out.push_back(check_norm_theta(suite_spec(c), n(50), seed));
    else if (c == "kernel_fixed_design")
      out.push_back(check_kernel_fixed_design(suite_spec(c), n(50), seed));
    else if (c == "covariance_concentration") {
      for (std::size_t d : {5, 20}) {
        out.push_back(check_covariance_concentration(d, kSuiteDelta, seed, n(200)));
      }
    } else if (c == "regularizer_bound")
      out.push_back(check_regularizer_bound(suite_spec(c), n(200), kSuiteDelta, seed));
    else if (c == "matrix_deviation")
      out.push_back(check_matrix_deviation(suite_spec(c), n(200), kSuiteDelta, seed));
    else throw InvalidInput("unknown lemma suite '" + std::string(c) + "'");
  };
  if (name == "algebraic" || name == "all") {
    for (auto c : {"move_x", "loewner", "cov_implies_div", "source_target_identity"}) one(c);
  }
  if (name == "all") {
    for (auto c : {"norm_theta", "kernel_fixed_design"}) one(c);
  }
  if (name == "probabilistic" || name == "all") {
    for (auto c : {"covariance_concentration", "regularizer_bound", "matrix_deviation"}) one(c);
  }
  if (name != "algebraic" && name != "probabilistic" && name != "all") one(name);
  return out;
}

}  // namespace lemmalab
}  // namespace replearn

#pragma once

// Source-side representation learners and target-side head fits:
//   * low-dimensional linear ERM (spectral init + alternating minimization)
//   * nuclear-norm multi-task regression (proximal gradient, balanced split)
//   * norm-constrained target heads on linear or ReLU features
//   * fixed-design ridge smoother
//   * weight-decayed two-layer ReLU networks trained by full-batch GD

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "replearn/error.hpp"
#include "replearn/linops.hpp"
#include "replearn/rng.hpp"
#include "replearn/taskgen.hpp"

namespace replearn {

enum class StepRule { fixed_lipschitz, backtracking };

struct FitOptions {
  int max_iter = 500;
  double tol = 1e-10;  // relative objective decrease (lowdim) / relative iterate change (nuclear)
  int restarts = 1;
  StepRule step_rule = StepRule::fixed_lipschitz;
  double lambda = 0.0;
  double r = std::numeric_limits<double>::infinity();
  std::size_t width = 0;
  std::uint64_t seed = 0;
  double grad_tol = 1e-6;  // first-order stopping threshold (nuclear certificate, relu gradient)

  void validate() const {
    if (max_iter < 1) throw InvalidInput("FitOptions.max_iter must be >= 1");
    if (!(tol > 0.0)) throw InvalidInput("FitOptions.tol must be > 0");
    if (!(lambda >= 0.0)) throw InvalidInput("FitOptions.lambda must be >= 0");
    if (!(r >= 0.0)) throw InvalidInput("FitOptions.r must be >= 0");
    if (restarts < 1) throw InvalidInput("FitOptions.restarts must be >= 1");
  }
};

struct FitResult {
  Matrix B_hat;
  Matrix W_hat;
  Matrix Theta_hat;  // B_hat * W_hat for linear learners
  std::vector<double> objective_trace;
  double grad_residual = 0.0;
  bool converged = false;
  int iterations = 0;
};

namespace estimators {

// Converged nuclear solutions certify a subgradient residual at most this.
inline constexpr double kNuclearCertificate = 1e-6;

namespace detail {

inline void require_tasks(const std::vector<Matrix>& x, const std::vector<Vector>& y) {
  if (x.empty() || x.size() != y.size()) throw InvalidInput("need T >= 1 matching (X_t, y_t)");
  const auto n = x[0].rows();
  const auto d = x[0].cols();
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (x[t].rows() != n || x[t].cols() != d || y[t].size() != n)
      throw InvalidInput("all source tasks must share n1 and d");
  }
}

struct Moments {
  std::vector<Matrix> gram;   // X_t^T X_t
  std::vector<Vector> cross;  // X_t^T y_t
};

inline Moments moments(const std::vector<Matrix>& x, const std::vector<Vector>& y) {
  Moments m;
  m.gram.reserve(x.size());
  m.cross.reserve(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    m.gram.push_back(x[t].transpose() * x[t]);
    m.cross.push_back(x[t].transpose() * y[t]);
  }
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Low-dimensional linear representation: min (1/2 n1 T) sum_t ||y_t - X_t B w_t||^2

inline double lowdim_objective(const TaskBundle& b, const Matrix& B, const Matrix& W) {
  const auto T = b.X.size();
  const double n1 = static_cast<double>(b.X[0].rows());
  double acc = 0.0;
  for (std::size_t t = 0; t < T; ++t)
    acc += (b.y[t] - b.X[t] * (B * W.col(static_cast<Eigen::Index>(t)))).squaredNorm();
  return acc / (2.0 * n1 * static_cast<double>(T));
}

namespace detail {

inline Matrix spectral_init(const TaskBundle& b, const Moments& m, Eigen::Index k) {
  const auto T = static_cast<Eigen::Index>(b.X.size());
  const Eigen::Index d = b.X[0].cols();
  const double n1 = static_cast<double>(b.X[0].rows());
  Matrix theta(d, T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& g = m.gram[static_cast<std::size_t>(t)];
    double lambda_init = 1e-3 * g.diagonal().mean() / n1;
    if (!(lambda_init > 0.0)) lambda_init = 1e-12;
    theta.col(t) = ridge_solve(b.X[static_cast<std::size_t>(t)], b.y[static_cast<std::size_t>(t)],
                               lambda_init);
  }
  if (k <= std::min(d, T)) {
    Eigen::JacobiSVD<Matrix> svd(theta, Eigen::ComputeThinU);
    return svd.matrixU().leftCols(k);
  }
  Eigen::JacobiSVD<Matrix> svd(theta, Eigen::ComputeFullU);
  return svd.matrixU().leftCols(k);
}

// Minimum-norm least-squares head for every task given B.
inline Matrix head_step(const TaskBundle& b, const Matrix& B) {
  const auto T = static_cast<Eigen::Index>(b.X.size());
  Matrix W(B.cols(), T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Matrix a = b.X[static_cast<std::size_t>(t)] * B;
    W.col(t) = linops::pinv(a) * b.y[static_cast<std::size_t>(t)];
  }
  return W;
}

// Exact minimizer over B of the objective for fixed heads W, from the
// kd x kd normal equations sum_t (w_t w_t^T kron G_t) vec(B) = vec(sum_t c_t w_t^T).
inline Matrix representation_step(const Moments& m, const Matrix& W, Eigen::Index d) {
  const Eigen::Index k = W.rows();
  const auto T = static_cast<Eigen::Index>(m.gram.size());
  Matrix sys = Matrix::Zero(k * d, k * d);
  Matrix rhs = Matrix::Zero(d, k);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& g = m.gram[static_cast<std::size_t>(t)];
    const auto w = W.col(t);
    for (Eigen::Index a = 0; a < k; ++a) {
      for (Eigen::Index c = a; c < k; ++c) {
        const double coeff = w(a) * w(c);
        if (coeff == 0.0) continue;
        sys.block(a * d, c * d, d, d).noalias() += coeff * g;
      }
    }
    rhs.noalias() += m.cross[static_cast<std::size_t>(t)] * w.transpose();
  }
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index c = 0; c < a; ++c)
      sys.block(a * d, c * d, d, d) = sys.block(c * d, a * d, d, d).transpose();

  const Vector vec_rhs = Eigen::Map<const Vector>(rhs.data(), rhs.size());
  Vector vec_b;
  Eigen::LDLT<Matrix> ldlt(sys);
  if (ldlt.info() == Eigen::Success && ldlt.rcond() > 1e-13) {
    vec_b = ldlt.solve(vec_rhs);
  } else {
    vec_b = sys.completeOrthogonalDecomposition().solve(vec_rhs);
  }
  return Eigen::Map<const Matrix>(vec_b.data(), d, k);
}

inline Matrix lowdim_gradient_norms(const TaskBundle& b, const Matrix& B, const Matrix& W,
                                    double* out_norm) {
  const auto T = b.X.size();
  const double scale = 1.0 / (static_cast<double>(b.X[0].rows()) * static_cast<double>(T));
  Matrix gB = Matrix::Zero(B.rows(), B.cols());
  Matrix gW(W.rows(), W.cols());
  for (std::size_t t = 0; t < T; ++t) {
    const auto col = static_cast<Eigen::Index>(t);
    const Vector resid = b.X[t] * (B * W.col(col)) - b.y[t];
    const Vector back = b.X[t].transpose() * resid;
    gB.noalias() += scale * back * W.col(col).transpose();
    gW.col(col) = scale * B.transpose() * back;
  }
  *out_norm = std::sqrt(gB.squaredNorm() + gW.squaredNorm());
  return gB;
}

struct LowdimRun {
  Matrix B, W;
  std::vector<double> trace;
  bool converged = false;
  int iterations = 0;
};

inline LowdimRun alternate(const TaskBundle& b, const Moments& m, Matrix B,
                           const FitOptions& opts) {
  LowdimRun run;
  const Eigen::Index d = b.X[0].cols();
  double label_scale = 0.0;
  for (const auto& y : b.y) label_scale += y.squaredNorm();
  label_scale /= 2.0 * static_cast<double>(b.X[0].rows()) * static_cast<double>(b.X.size());
  const double floor = 1e-26 * std::max(label_scale, std::numeric_limits<double>::min());

  Matrix W = head_step(b, B);
  double prev = lowdim_objective(b, B, W);
  run.trace.push_back(prev);
  for (int it = 0; it < opts.max_iter; ++it) {
    B = representation_step(m, W, d);
    const double after_b = lowdim_objective(b, B, W);
    // Orthonormalize the representation, carrying the triangular factor into W.
    const Matrix q = linops::orthonormalize(B);
    const Matrix r = q.transpose() * B;
    B = q;
    W = r * W;
    run.trace.push_back(after_b);
    W = head_step(b, B);
    const double cur = lowdim_objective(b, B, W);
    run.trace.push_back(cur);
    run.iterations = it + 1;
    const double rel = (prev - cur) / std::max(prev, std::numeric_limits<double>::min());
    prev = cur;
    if (cur <= floor || rel < opts.tol) {
      run.converged = true;
      break;
    }
  }
  run.B = std::move(B);
  run.W = std::move(W);
  return run;
}

}  // namespace detail

inline FitResult fit_lowdim_mtl(const TaskBundle& bundle, std::size_t k, const FitOptions& opts) {
  opts.validate();
  detail::require_tasks(bundle.X, bundle.y);
  const Eigen::Index d = bundle.X[0].cols();
  const auto n1 = static_cast<std::size_t>(bundle.X[0].rows());
  if (k < 1 || static_cast<Eigen::Index>(k) > d)
    throw InvalidInput("fit_lowdim_mtl needs 1 <= k <= d");
  if (n1 < k) throw InfeasibleFit("n1 < k: per-task heads are not identifiable");

  const detail::Moments m = detail::moments(bundle.X, bundle.y);
  const auto kk = static_cast<Eigen::Index>(k);

  detail::LowdimRun best = detail::alternate(bundle, m, detail::spectral_init(bundle, m, kk), opts);
  for (int restart = 1; restart < opts.restarts; ++restart) {
    Rng rng(opts.seed, "lowdim_restart", static_cast<std::uint64_t>(restart));
    detail::LowdimRun run =
        detail::alternate(bundle, m, linops::orthonormalize(rng.normal_matrix(d, kk)), opts);
    if (run.trace.back() < best.trace.back()) best = std::move(run);
  }

  FitResult out;
  detail::lowdim_gradient_norms(bundle, best.B, best.W, &out.grad_residual);
  out.B_hat = std::move(best.B);
  out.W_hat = std::move(best.W);
  out.Theta_hat = out.B_hat * out.W_hat;
  out.objective_trace = std::move(best.trace);
  out.converged = best.converged;
  out.iterations = best.iterations;
  return out;
}

// Minimum-norm least squares of y on X B_hat.
inline Vector fit_target_linear(const Matrix& B_hat, const Matrix& X_target,
                                const Vector& y_target) {
  if (X_target.rows() < 1) throw InvalidInput("fit_target_linear needs n2 >= 1");
  if (X_target.cols() != B_hat.rows() || y_target.size() != X_target.rows())
    throw InvalidInput("fit_target_linear: dimension mismatch");
  return linops::pinv(X_target * B_hat) * y_target;
}

// ---------------------------------------------------------------------------
// Norm-constrained least squares: min_{||w|| <= r} (1/2n)||A w - y||^2.

struct ConstrainedSolution {
  Vector w;
  double multiplier = 0.0;  // Lagrange multiplier mu of the norm constraint
  bool active = false;
};

inline ConstrainedSolution constrained_least_squares(const Matrix& a, const Vector& y, double r) {
  if (!(r >= 0.0)) throw InvalidInput("norm budget r must be >= 0");
  if (a.rows() != y.size()) throw InvalidInput("constrained fit: dimension mismatch");
  linops::require_finite(a, "constrained fit features");
  ConstrainedSolution sol;
  if (r == 0.0) {
    sol.w = Vector::Zero(a.cols());
    sol.active = true;
    return sol;
  }
  sol.w = linops::pinv(a) * y;
  if (sol.w.norm() <= r) return sol;

  sol.active = true;
  const Vector aty = a.transpose() * y;
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.transpose() * a);
  const Vector& ev = es.eigenvalues();
  const Vector coef = es.eigenvectors().transpose() * aty;
  const double thr = ev.size() ? std::max(ev.cwiseAbs().maxCoeff(), 0.0) * 1e-13 : 0.0;
  auto solve_at = [&](double mu) {
    Vector scaled(coef.size());
    for (Eigen::Index i = 0; i < coef.size(); ++i) {
      const double denom = std::max(ev(i), 0.0) + mu;
      scaled(i) = (ev(i) <= thr && mu == 0.0) ? 0.0 : coef(i) / denom;
    }
    return Vector(es.eigenvectors() * scaled);
  };

  double lo = 0.0;
  double hi = aty.norm() / r;
  Vector w_hi = solve_at(hi);
  for (int it = 0; it < 200; ++it) {
    if (r - w_hi.norm() <= 1e-10 * r) break;
    const double mid = 0.5 * (lo + hi);
    Vector w_mid = solve_at(mid);
    if (w_mid.norm() > r) {
      lo = mid;
    } else {
      hi = mid;
      w_hi = std::move(w_mid);
    }
  }
  sol.w = std::move(w_hi);
  sol.multiplier = hi;
  return sol;
}

inline Vector fit_target_constrained(const Matrix& B_hat, const Matrix& X_target,
                                     const Vector& y_target, double r) {
  if (X_target.cols() != B_hat.rows()) throw InvalidInput("fit_target_constrained: shape");
  return constrained_least_squares(X_target * B_hat, y_target, r).w;
}

inline Vector fit_relu_target(const Matrix& B_hat, const Matrix& X_target, const Vector& y_target,
                              double r) {
  if (X_target.cols() != B_hat.rows()) throw InvalidInput("fit_relu_target: shape");
  return constrained_least_squares(taskgen::relu(X_target * B_hat), y_target, r).w;
}

// Norm-constrained least squares directly on the ambient inputs.
inline Vector baseline_target_ridge(const Matrix& X_target, const Vector& y_target,
                                    double norm_budget) {
  return constrained_least_squares(X_target, y_target, norm_budget).w;
}

// ---------------------------------------------------------------------------
// Nuclear-norm multi-task regression:
//   min_Theta (1/2 n1) sum_t ||y_t - X_t theta_t||^2 + lambda ||Theta||_*

// X*(M) = [X_1^T m_1, ..., X_T^T m_T].
inline Matrix adjoint_apply(const std::vector<Matrix>& x, const Matrix& m) {
  Matrix out(x[0].cols(), static_cast<Eigen::Index>(x.size()));
  for (std::size_t t = 0; t < x.size(); ++t)
    out.col(static_cast<Eigen::Index>(t)) = x[t].transpose() * m.col(static_cast<Eigen::Index>(t));
  return out;
}

// Distance from zero to grad + lambda * subdifferential(||.||_*) at Theta, where
// Theta = U diag(s) V^T with s > 0.
inline double nuclear_subgradient_residual(const Matrix& grad, const Matrix& U, const Matrix& V,
                                           double lambda) {
  double acc = 0.0;
  Matrix comp = grad;
  if (U.cols() > 0) {
    const Matrix utg = U.transpose() * grad;
    const Matrix gv = grad * V;
    Matrix core = utg * V;
    core.diagonal().array() += lambda;
    acc += core.squaredNorm();
    acc += (utg - (utg * V) * V.transpose()).squaredNorm();
    acc += (gv - U * (U.transpose() * gv)).squaredNorm();
    comp = grad - U * utg - gv * V.transpose() + U * (utg * V) * V.transpose();
  }
  if (comp.size() > 0) {
    Eigen::JacobiSVD<Matrix> svd(comp);
    const Vector& s = svd.singularValues();
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const double excess = std::max(s(i) - lambda, 0.0);
      acc += excess * excess;
    }
  }
  return std::sqrt(acc);
}

inline double nuclear_objective(const std::vector<Matrix>& x, const std::vector<Vector>& y,
                                const Matrix& theta, double lambda) {
  const double n1 = static_cast<double>(x[0].rows());
  double data = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t)
    data += (x[t] * theta.col(static_cast<Eigen::Index>(t)) - y[t]).squaredNorm();
  return data / (2.0 * n1) + lambda * linops::nuclear_norm(theta);
}

// lambda = 2 sigma sqrt(log(T + n1)) (sqrt(T ||Sigma||) + sqrt(Tr Sigma)) / sqrt(n1).
inline double default_nuclear_lambda(double sigma, std::size_t T, std::size_t n1,
                                     const Matrix& Sigma) {
  const double op = linops::max_eigenvalue(Sigma);
  const double tr = Sigma.trace();
  const double Td = static_cast<double>(T);
  const double n = static_cast<double>(n1);
  return 2.0 * sigma * std::sqrt(std::log(Td + n)) * (std::sqrt(Td * op) + std::sqrt(tr)) /
         std::sqrt(n);
}

// (2/n1) ||X*(Z)||_2 from the realized source noise.
inline double oracle_nuclear_lambda(const TaskBundle& b) {
  const double n1 = static_cast<double>(b.X[0].rows());
  return 2.0 / n1 * linops::spectral_norm(adjoint_apply(b.X, taskgen::stacked_noise(b)));
}

inline FitResult fit_nuclear_mtl(const TaskBundle& bundle, double lambda, const FitOptions& opts) {
  opts.validate();
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw InvalidInput("fit_nuclear_mtl needs lambda > 0");
  detail::require_tasks(bundle.X, bundle.y);
  const auto T = static_cast<Eigen::Index>(bundle.X.size());
  const Eigen::Index d = bundle.X[0].cols();
  const double n1 = static_cast<double>(bundle.X[0].rows());
  const detail::Moments m = detail::moments(bundle.X, bundle.y);

  double lipschitz = 0.0;
  for (const auto& g : m.gram) lipschitz = std::max(lipschitz, linops::max_eigenvalue(g) / n1);
  if (!(lipschitz > 0.0)) lipschitz = 1.0;

  auto gradient = [&](const Matrix& theta) {
    Matrix g(d, T);
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto i = static_cast<std::size_t>(t);
      g.col(t) = (m.gram[i] * theta.col(t) - m.cross[i]) / n1;
    }
    return g;
  };
  auto data_term = [&](const Matrix& theta) {
    double acc = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto i = static_cast<std::size_t>(t);
      acc += (bundle.X[i] * theta.col(t) - bundle.y[i]).squaredNorm();
    }
    return acc / (2.0 * n1);
  };

  Matrix theta = Matrix::Zero(d, T);
  Matrix grad = gradient(theta);
  Matrix U(d, 0), V(T, 0);
  double objective = data_term(theta);

  FitResult out;
  out.objective_trace.push_back(objective);
  out.grad_residual = nuclear_subgradient_residual(grad, U, V, lambda);
  double step_l = lipschitz;

  for (int it = 0; it < opts.max_iter && out.grad_residual > 1e-2 * opts.grad_tol; ++it) {
    Matrix next;
    Svd svd;
    double next_obj = 0.0;
    Vector shrunk;
    for (int bt = 0; bt < 60; ++bt) {
      svd = linops::thin_svd(theta - grad / step_l);
      shrunk = (svd.S.array() - lambda / step_l).cwiseMax(0.0).matrix();
      next = svd.U * shrunk.asDiagonal() * svd.V.transpose();
      const double smooth = data_term(next);
      next_obj = smooth + lambda * shrunk.sum();
      if (opts.step_rule == StepRule::fixed_lipschitz) break;
      const Matrix diff = next - theta;
      const double model = data_term(theta) + (grad.array() * diff.array()).sum() +
                           0.5 * step_l * diff.squaredNorm();
      if (smooth <= model + 1e-12 * std::abs(model)) break;
      step_l *= 2.0;
    }
    Eigen::Index rnk = 0;
    while (rnk < shrunk.size() && shrunk(rnk) > 0.0) ++rnk;
    U = svd.U.leftCols(rnk);
    V = svd.V.leftCols(rnk);

    const double change = (next - theta).norm() / std::max(1.0, theta.norm());
    theta = std::move(next);
    grad = gradient(theta);
    objective = next_obj;
    out.objective_trace.push_back(objective);
    out.grad_residual = nuclear_subgradient_residual(grad, U, V, lambda);
    out.iterations = it + 1;
    if (change < opts.tol) break;
  }
  out.converged = out.grad_residual <= opts.grad_tol;
  FactorPair split = factor_split(theta);
  out.B_hat = std::move(split.B);
  out.W_hat = std::move(split.W);
  out.Theta_hat = std::move(theta);
  return out;
}

// S = (1/n) XB ((1/n) B^T X^T X B + lambda I)^{-1} B^T X^T.
inline Matrix fixed_design_smoother(const Matrix& X, const Matrix& B, double lambda) {
  if (!(lambda > 0.0)) throw InvalidInput("fixed_design_smoother needs lambda > 0");
  if (X.cols() != B.rows()) throw InvalidInput("fixed_design_smoother: shape mismatch");
  const double n = static_cast<double>(X.rows());
  const Matrix f = X * B;
  Matrix sys = f.transpose() * f / n;
  sys.diagonal().array() += lambda;
  Matrix s = f * sys.ldlt().solve(f.transpose()) / n;
  return 0.5 * (s + s.transpose());
}

// ---------------------------------------------------------------------------
// Two-layer ReLU networks f(x) = w^T (B^T x)_+. Hidden weights B are d0 x width
// (neuron j is column j), heads W are width x T (neuron j owns row j).

struct ReluParams {
  Matrix B;
  Matrix W;
};

struct ReluProblem {
  std::span<const Matrix> X;
  std::span<const Vector> y;
  double lambda = 0.0;

  double data_term(const ReluParams& p) const {
    const double n1 = static_cast<double>(X[0].rows());
    double acc = 0.0;
    for (std::size_t t = 0; t < X.size(); ++t)
      acc += (taskgen::relu(X[t] * p.B) * p.W.col(static_cast<Eigen::Index>(t)) - y[t])
                 .squaredNorm();
    return acc / (2.0 * n1 * static_cast<double>(X.size()));
  }

  double regularizer(const ReluParams& p) const {
    return 0.5 * lambda * (p.B.squaredNorm() + p.W.squaredNorm());
  }

  double value(const ReluParams& p) const { return data_term(p) + regularizer(p); }

  // Subgradient with the ReLU derivative at 0 taken as 0.
  ReluParams gradient(const ReluParams& p, double* value_out = nullptr) const {
    const double n1 = static_cast<double>(X[0].rows());
    const double scale = 1.0 / (n1 * static_cast<double>(X.size()));
    ReluParams g{lambda * p.B, lambda * p.W};
    double acc = 0.0;
    for (std::size_t t = 0; t < X.size(); ++t) {
      const auto col = static_cast<Eigen::Index>(t);
      const Matrix pre = X[t] * p.B;
      const Matrix act = taskgen::relu(pre);
      const Vector resid = act * p.W.col(col) - y[t];
      acc += resid.squaredNorm();
      g.W.col(col).noalias() += scale * act.transpose() * resid;
      Matrix back = resid * p.W.col(col).transpose();
      back = (pre.array() > 0.0).select(back, 0.0);
      g.B.noalias() += scale * X[t].transpose() * back;
    }
    if (value_out) *value_out = acc * scale * 0.5 + regularizer(p);
    return g;
  }
};

inline ReluParams init_relu(Eigen::Index d0, Eigen::Index width, Eigen::Index T,
                            std::uint64_t seed) {
  Rng rng(seed, "relu_init");
  ReluParams p;
  p.B = rng.normal_matrix(d0, width) / std::sqrt(static_cast<double>(d0));
  for (Eigen::Index j = 0; j < width; ++j) {
    const double norm = p.B.col(j).norm();
    if (norm > 0.0) p.B.col(j) /= norm;
  }
  p.W = rng.normal_matrix(width, T) / std::sqrt(static_cast<double>(width));
  return p;
}

// Full-batch gradient descent with Armijo backtracking (halving, c = 1e-4).
inline FitResult train_relu(const ReluProblem& problem, ReluParams p, const FitOptions& opts) {
  constexpr double kArmijo = 1e-4;
  FitResult out;
  double value = 0.0;
  ReluParams g = problem.gradient(p, &value);
  out.objective_trace.push_back(value);
  double step = 1.0;
  double gnorm = std::sqrt(g.B.squaredNorm() + g.W.squaredNorm());
  for (int it = 0; it < opts.max_iter && gnorm > opts.grad_tol; ++it) {
    const double g2 = gnorm * gnorm;
    step = std::min(step * 2.0, 1e4);
    bool accepted = false;
    ReluParams trial;
    double trial_value = 0.0;
    for (int bt = 0; bt < 80; ++bt) {
      trial.B = p.B - step * g.B;
      trial.W = p.W - step * g.W;
      trial_value = problem.value(trial);
      if (trial_value <= value - kArmijo * step * g2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    p = std::move(trial);
    g = problem.gradient(p, &value);
    out.objective_trace.push_back(value);
    gnorm = std::sqrt(g.B.squaredNorm() + g.W.squaredNorm());
    out.iterations = it + 1;
  }
  out.grad_residual = gnorm;
  out.converged = gnorm <= opts.grad_tol;
  out.B_hat = std::move(p.B);
  out.W_hat = std::move(p.W);
  return out;
}

inline FitResult fit_relu_mtl(const TaskBundle& bundle, std::size_t width, double lambda,
                              const FitOptions& opts) {
  opts.validate();
  if (width < 1) throw InvalidInput("fit_relu_mtl needs width >= 1");
  if (!(lambda >= 0.0)) throw InvalidInput("fit_relu_mtl needs lambda >= 0");
  detail::require_tasks(bundle.X, bundle.y);
  ReluProblem problem{bundle.X, bundle.y, lambda};
  ReluParams init = init_relu(bundle.X[0].cols(), static_cast<Eigen::Index>(width),
                              static_cast<Eigen::Index>(bundle.X.size()), opts.seed);
  return train_relu(problem, std::move(init), opts);
}

// A fresh network trained on the target data only, same trainer and regularizer.
inline ReluParams fit_nn_scratch(const Matrix& X_target, const Vector& y_target,
                                 std::size_t width, double lambda, const FitOptions& opts) {
  std::vector<Matrix> x{X_target};
  std::vector<Vector> y{y_target};
  ReluProblem problem{x, y, lambda};
  FitResult fit = train_relu(
      problem, init_relu(X_target.cols(), static_cast<Eigen::Index>(width), 1, opts.seed), opts);
  return {std::move(fit.B_hat), std::move(fit.W_hat)};
}

// Per-neuron positive rescaling b_j -> s b_j, w_j -> w_j / s with
// ||b_j|| = ||w_j||. The network function is unchanged by ReLU homogeneity and
// the weight-decay regularizer cannot increase (AM-GM).
inline ReluParams rebalance_net(const Matrix& B, const Matrix& W) {
  if (B.cols() != W.rows()) throw InvalidInput("rebalance_net: B columns must match W rows");
  ReluParams out{B, W};
  for (Eigen::Index j = 0; j < B.cols(); ++j) {
    const double in_norm = B.col(j).norm();
    const double out_norm = W.row(j).norm();
    if (in_norm == 0.0) {
      if (out_norm != 0.0)
        throw DegenerateNeuron("neuron " + std::to_string(j) +
                               " has zero input weights but a nonzero head");
      continue;
    }
    if (in_norm == out_norm) continue;
    const double s = std::sqrt(out_norm / in_norm);
    out.B.col(j) *= s;
    if (s > 0.0) {
      out.W.row(j) /= s;
    }
  }
  return out;
}

inline Vector relu_forward(const Matrix& B, const Vector& head, const Matrix& X) {
  return taskgen::relu(X * B) * head;
}

}  // namespace estimators

using estimators::baseline_target_ridge;
using estimators::fit_lowdim_mtl;
using estimators::fit_nuclear_mtl;
using estimators::fit_relu_mtl;
using estimators::fit_relu_target;
using estimators::fit_target_constrained;
using estimators::fit_target_linear;
using estimators::fixed_design_smoother;
using estimators::rebalance_net;

}  // namespace replearn

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "replearn/estimators.hpp"
#include "replearn/risk.hpp"

using namespace replearn;

namespace {

double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

TaskBundle bundle_from(std::vector<Matrix> x, std::vector<Vector> y) {
  TaskBundle b;
  b.X = std::move(x);
  b.y = std::move(y);
  for (const auto& yy : b.y) b.Z.push_back(Vector::Zero(yy.size()));
  return b;
}

// KKT residual of min (1/2)||Aw - y||^2 s.t. ||w|| <= r at an active solution,
// with the multiplier recovered from the solution itself.
double kkt_residual(const Matrix& a, const Vector& y, const Vector& w, double* mu_out) {
  const Vector g = a.transpose() * (a * w - y);
  const double mu = -g.dot(w) / w.squaredNorm();
  if (mu_out) *mu_out = mu;
  return (g + mu * w).norm() / std::max(1.0, (a.transpose() * y).norm());
}

}  // namespace

// ---------------------------------------------------------------------------
// fit_lowdim_mtl

TEST(LowdimFit, NoiselessRecovery) {
  EnsembleSpec spec;
  spec.d = 20;
  spec.k = 3;
  spec.T = 10;
  spec.n1 = 40;
  spec.sigma = 0.0;
  spec.master_seed = 3;
  const GroundTruth gt = sample_ground_truth(spec);
  const TaskBundle b = sample_tasks(spec, gt);
  const FitResult fit = fit_lowdim_mtl(b, 3, FitOptions{});
  EXPECT_LE(fit.objective_trace.back(), 1e-12);
  EXPECT_LE(subspace_distance(fit.B_hat, gt.B_star, Matrix::Identity(20, 20)), 1e-6);
  EXPECT_LE(max_abs(fit.B_hat.transpose() * fit.B_hat - Matrix::Identity(3, 3)), 1e-10);
}

TEST(LowdimFit, SingleTaskRankOneIsLeastSquares) {
  Rng rng(31, "single");
  const Matrix x = rng.normal_matrix(30, 5);
  const Vector y = rng.normal_vector(30);
  const TaskBundle b = bundle_from({x}, {y});
  const FitResult fit = fit_lowdim_mtl(b, 1, FitOptions{});
  const Vector fitted = x * fit.B_hat * fit.W_hat.col(0);
  const Vector ols = x * x.colPivHouseholderQr().solve(y);
  EXPECT_LE((fitted - ols).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(LowdimFit, FullRankMatchesPerTaskOls) {
  Rng rng(32, "fullrank");
  std::vector<Matrix> xs;
  std::vector<Vector> ys;
  double oracle = 0.0;
  for (int t = 0; t < 4; ++t) {
    xs.push_back(rng.normal_matrix(25, 4));
    ys.push_back(rng.normal_vector(25));
    const Vector w = xs.back().colPivHouseholderQr().solve(ys.back());
    oracle += (xs.back() * w - ys.back()).squaredNorm();
  }
  oracle /= 2.0 * 25.0 * 4.0;
  const FitResult fit = fit_lowdim_mtl(bundle_from(xs, ys), 4, FitOptions{});
  EXPECT_NEAR(fit.objective_trace.back(), oracle, 1e-8);
}

TEST(LowdimFit, TraceIsMonotone) {
  EnsembleSpec spec;
  spec.d = 15;
  spec.k = 2;
  spec.T = 8;
  spec.n1 = 30;
  spec.sigma = 0.5;
  const GroundTruth gt = sample_ground_truth(spec);
  const FitResult fit = fit_lowdim_mtl(sample_tasks(spec, gt), 2, FitOptions{.restarts = 3});
  for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
    EXPECT_LE(fit.objective_trace[i], fit.objective_trace[i - 1] * (1.0 + 1e-12));
}

TEST(LowdimFit, Errors) {
  Rng rng(33, "err");
  const TaskBundle b = bundle_from({rng.normal_matrix(2, 6)}, {rng.normal_vector(2)});
  EXPECT_THROW(fit_lowdim_mtl(b, 3, FitOptions{}), InfeasibleFit);
  EXPECT_THROW(fit_lowdim_mtl(b, 0, FitOptions{}), InvalidInput);
  EXPECT_THROW(fit_lowdim_mtl(b, 1, FitOptions{.max_iter = 0}), InvalidInput);
}

// ---------------------------------------------------------------------------
// fit_target_linear

TEST(TargetLinear, IdentityDesign) {
  Rng rng(34, "tl");
  const Matrix b_hat = linops::orthonormalize(rng.normal_matrix(6, 2));
  const Vector y = rng.normal_vector(6);
  const Vector w = fit_target_linear(b_hat, Matrix::Identity(6, 6), y);
  EXPECT_LE((w - b_hat.transpose() * y).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TargetLinear, ConsistencyAndNormalEquations) {
  Rng rng(35, "tl2");
  const Matrix b_hat = rng.normal_matrix(8, 3);
  const Matrix x = rng.normal_matrix(12, 8);
  const Vector w0 = rng.normal_vector(3);
  const Vector exact = x * b_hat * w0;
  EXPECT_LE((x * b_hat * fit_target_linear(b_hat, x, exact) - exact).cwiseAbs().maxCoeff(), 1e-9);

  const Vector y = rng.normal_vector(12);
  const Matrix f = x * b_hat;
  const Vector oracle = (f.transpose() * f).ldlt().solve(f.transpose() * y);
  EXPECT_LE((fit_target_linear(b_hat, x, y) - oracle).cwiseAbs().maxCoeff(), 1e-8);
}

// ---------------------------------------------------------------------------
// fit_nuclear_mtl

TEST(NuclearFit, LargeLambdaGivesZero) {
  Rng rng(36, "nz");
  std::vector<Matrix> xs;
  std::vector<Vector> ys;
  for (int t = 0; t < 3; ++t) {
    xs.push_back(rng.normal_matrix(20, 5));
    ys.push_back(rng.normal_vector(20));
  }
  const TaskBundle b = bundle_from(xs, ys);
  Matrix y(20, 3);
  for (int t = 0; t < 3; ++t) y.col(t) = ys[t];
  const double threshold = linops::spectral_norm(estimators::adjoint_apply(xs, y)) / 20.0;
  const FitResult fit = fit_nuclear_mtl(b, threshold * 1.0001, FitOptions{});
  EXPECT_EQ(max_abs(fit.Theta_hat), 0.0);
  EXPECT_TRUE(fit.converged);
  // Just below the threshold the solution moves off zero.
  EXPECT_GT(max_abs(fit_nuclear_mtl(b, threshold * 0.9, FitOptions{}).Theta_hat), 0.0);
}

TEST(NuclearFit, TinyLambdaApproachesOls) {
  Rng rng(37, "nols");
  std::vector<Matrix> xs;
  std::vector<Vector> ys;
  double ols = 0.0;
  for (int t = 0; t < 3; ++t) {
    xs.push_back(rng.normal_matrix(50, 5));
    ys.push_back(rng.normal_vector(50));
    const Vector w = xs.back().colPivHouseholderQr().solve(ys.back());
    ols += (xs.back() * w - ys.back()).squaredNorm();
  }
  ols /= 2.0 * 50.0;
  FitOptions opts;
  opts.max_iter = 20000;
  opts.tol = 1e-15;
  const double lambda = 1e-8;
  const FitResult fit = fit_nuclear_mtl(bundle_from(xs, ys), lambda, opts);
  EXPECT_LE(std::abs(estimators::nuclear_objective(xs, ys, fit.Theta_hat, lambda) - ols), 1e-6);
}

TEST(NuclearFit, CertificateAndBalancedFactors) {
  EnsembleSpec spec;
  spec.track = Track::highdim;
  spec.d = 20;
  spec.k = 2;
  spec.T = 8;
  spec.n1 = 60;
  spec.sigma = 0.5;
  const GroundTruth gt = sample_ground_truth(spec);
  const TaskBundle b = sample_tasks(spec, gt);
  FitOptions opts;
  opts.max_iter = 20000;
  opts.tol = 1e-15;
  const double lambda = estimators::oracle_nuclear_lambda(b);
  const FitResult fit = fit_nuclear_mtl(b, lambda, opts);
  EXPECT_TRUE(fit.converged);
  EXPECT_LE(fit.grad_residual, 1e-6);
  EXPECT_LE(max_abs(fit.B_hat * fit.W_hat - fit.Theta_hat), 1e-10);
  const double nuc = nuclear_norm(fit.Theta_hat);
  EXPECT_NEAR(fit.B_hat.squaredNorm(), nuc, 1e-9 * (1.0 + nuc));
  // Brute-force local optimality against random perturbations.
  const double best = estimators::nuclear_objective(b.X, b.y, fit.Theta_hat, lambda);
  Rng rng(38, "perturb");
  for (int i = 0; i < 200; ++i) {
    const Matrix p = fit.Theta_hat + 1e-3 * rng.normal_matrix(20, 8);
    EXPECT_GE(estimators::nuclear_objective(b.X, b.y, p, lambda), best - 1e-12);
  }
}

TEST(NuclearFit, BacktrackingAgreesWithFixedStep) {
  EnsembleSpec spec;
  spec.track = Track::highdim;
  spec.d = 10;
  spec.T = 5;
  spec.n1 = 40;
  const GroundTruth gt = sample_ground_truth(spec);
  const TaskBundle b = sample_tasks(spec, gt);
  FitOptions fixed{.max_iter = 20000, .tol = 1e-15};
  FitOptions back = fixed;
  back.step_rule = StepRule::backtracking;
  const double lambda = 0.05;
  const FitResult a = fit_nuclear_mtl(b, lambda, fixed);
  const FitResult c = fit_nuclear_mtl(b, lambda, back);
  EXPECT_LE(max_abs(a.Theta_hat - c.Theta_hat), 1e-5);
}

TEST(NuclearFit, Errors) {
  Rng rng(39, "ne");
  const TaskBundle b = bundle_from({rng.normal_matrix(4, 3)}, {rng.normal_vector(4)});
  EXPECT_THROW(fit_nuclear_mtl(b, 0.0, FitOptions{}), InvalidInput);
  EXPECT_THROW(fit_nuclear_mtl(b, -1.0, FitOptions{}), InvalidInput);
}

// ---------------------------------------------------------------------------
// norm-constrained target fits

TEST(ConstrainedFit, InactiveZeroAndActive) {
  Rng rng(40, "cf");
  const Matrix b_hat = rng.normal_matrix(6, 3);
  const Matrix x = rng.normal_matrix(20, 6);
  const Vector y = rng.normal_vector(20);
  const Vector free = fit_target_linear(b_hat, x, y);

  EXPECT_LE((fit_target_constrained(b_hat, x, y, 2.0 * free.norm()) - free).cwiseAbs().maxCoeff(),
            1e-12);
  EXPECT_EQ(fit_target_constrained(b_hat, x, y, 0.0).norm(), 0.0);

  const double r = 0.3 * free.norm();
  const Vector w = fit_target_constrained(b_hat, x, y, r);
  EXPECT_NEAR(w.norm(), r, 1e-8 * r);
  double mu = 0.0;
  EXPECT_LE(kkt_residual(x * b_hat, y, w, &mu), 1e-6);
  EXPECT_GT(mu, 0.0);
}

TEST(ReluTarget, Examples) {
  Rng rng(41, "rt");
  const Matrix x = rng.normal_matrix(30, 5);
  const Vector y = rng.normal_vector(30);
  EXPECT_EQ(fit_relu_target(Matrix::Zero(5, 4), x, y, 10.0).norm(), 0.0);

  const Matrix b_hat = rng.normal_matrix(5, 4);
  const Matrix feats = taskgen::relu(x * b_hat);
  const Vector oracle = (feats.transpose() * feats).ldlt().solve(feats.transpose() * y);
  const Vector w = fit_relu_target(b_hat, x, y, 1e6);
  EXPECT_LE((w - oracle).cwiseAbs().maxCoeff(), 1e-8);

  const double r = 0.2 * oracle.norm();
  EXPECT_NEAR(fit_relu_target(b_hat, x, y, r).norm(), r, 1e-8 * r);
}

TEST(BaselineRidge, Examples) {
  Rng rng(42, "br");
  const Matrix x = rng.normal_matrix(20, 6);
  const Vector theta = rng.normal_vector(6);
  const Vector y = x * theta + 0.5 * rng.normal_vector(20);
  const Vector ols = x.colPivHouseholderQr().solve(y);
  EXPECT_LE((baseline_target_ridge(x, y, INFINITY) - ols).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(baseline_target_ridge(x, y, 0.0).norm(), 0.0);

  const double r = 0.5 * theta.norm();
  const Vector w = baseline_target_ridge(x, y, r);
  EXPECT_NEAR(w.norm(), r, 1e-8 * r);
  double mu = 0.0;
  EXPECT_LE(kkt_residual(x, y, w, &mu), 1e-6);
  EXPECT_GE(mu, 0.0);
}

// ---------------------------------------------------------------------------
// fixed_design_smoother

TEST(Smoother, InfiniteShrinkage) {
  Rng rng(43, "sm");
  const Matrix x = rng.normal_matrix(15, 6);
  const Matrix b = rng.normal_matrix(6, 3);
  const double big = 1e12 * std::pow(linops::spectral_norm(x), 2);
  EXPECT_LE(linops::spectral_norm(fixed_design_smoother(x, b, big)), 1e-6);
}

TEST(Smoother, RidgelessLimitIsProjector) {
  Rng rng(44, "sm2");
  const Matrix x = rng.normal_matrix(15, 6);
  const Matrix b = rng.normal_matrix(6, 6);
  EXPECT_LE(max_abs(fixed_design_smoother(x, b, 1e-12) - projector(x * b)), 1e-4);
}

TEST(Smoother, LeftAndRightFormsAgree) {
  Rng rng(45, "sm3");
  const Matrix x = rng.normal_matrix(12, 7);
  const Matrix b = rng.normal_matrix(7, 4);
  const double lambda = 0.3;
  const double n = 12.0;
  const Matrix f = x * b;
  Matrix kernel = f * f.transpose() / n;
  Matrix sys = kernel;
  sys.diagonal().array() += lambda;
  const Matrix right = kernel * sys.inverse();
  EXPECT_LE(max_abs(fixed_design_smoother(x, b, lambda) - right), 1e-9);
}

// ---------------------------------------------------------------------------
// ReLU networks

TEST(Relu, GradientMatchesFiniteDifferences) {
  Rng rng(46, "fd");
  std::vector<Matrix> xs;
  std::vector<Vector> ys;
  for (int t = 0; t < 3; ++t) {
    xs.push_back(rng.normal_matrix(12, 4));
    ys.push_back(rng.normal_vector(12));
  }
  const estimators::ReluProblem problem{xs, ys, 0.01};
  int accepted = 0;
  for (int attempt = 0; accepted < 20 && attempt < 2000; ++attempt) {
    estimators::ReluParams p{rng.normal_matrix(4, 5), rng.normal_matrix(5, 3)};
    bool clear = true;
    for (const auto& x : xs) clear = clear && ((x * p.B).cwiseAbs().minCoeff() >= 1e-3);
    if (!clear) continue;
    ++accepted;
    const estimators::ReluParams g = problem.gradient(p);
    const double h = 1e-5;
    Matrix fd_b(4, 5), fd_w(5, 3);
    for (Eigen::Index i = 0; i < p.B.size(); ++i) {
      auto plus = p, minus = p;
      plus.B.data()[i] += h;
      minus.B.data()[i] -= h;
      fd_b.data()[i] = (problem.value(plus) - problem.value(minus)) / (2 * h);
    }
    for (Eigen::Index i = 0; i < p.W.size(); ++i) {
      auto plus = p, minus = p;
      plus.W.data()[i] += h;
      minus.W.data()[i] -= h;
      fd_w.data()[i] = (problem.value(plus) - problem.value(minus)) / (2 * h);
    }
    const double num = std::sqrt((g.B - fd_b).squaredNorm() + (g.W - fd_w).squaredNorm());
    const double den = std::sqrt(fd_b.squaredNorm() + fd_w.squaredNorm());
    EXPECT_LE(num / den, 1e-5);
  }
  EXPECT_EQ(accepted, 20);
}

TEST(Relu, ZeroLabelsCollapseToOrigin) {
  Rng rng(47, "zl");
  TaskBundle b = bundle_from({rng.normal_matrix(20, 4), rng.normal_matrix(20, 4)},
                             {Vector::Zero(20), Vector::Zero(20)});
  FitOptions opts;
  opts.max_iter = 5000;
  const FitResult fit = fit_relu_mtl(b, 6, 0.1, opts);
  EXPECT_LE(fit.B_hat.squaredNorm() + fit.W_hat.squaredNorm(), 1e-6);
}

TEST(Relu, NoiselessTeacherStudentTrains) {
  EnsembleSpec spec;
  spec.track = Track::relu;
  spec.d = 5;
  spec.k = 2;
  spec.T = 4;
  spec.n1 = 60;
  spec.sigma = 0.0;
  spec.master_seed = 4;
  const GroundTruth gt = sample_ground_truth(spec);
  const TaskBundle b = sample_tasks(spec, gt);
  FitOptions opts;
  opts.max_iter = 5000;
  opts.seed = 1;
  const FitResult fit = fit_relu_mtl(b, 4, 1e-6, opts);
  const estimators::ReluProblem problem{b.X, b.y, 0.0};
  EXPECT_LE(problem.data_term({fit.B_hat, fit.W_hat}), 1e-3);
  for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
    EXPECT_LE(fit.objective_trace[i], fit.objective_trace[i - 1]);
}

TEST(Relu, RebalanceExamples) {
  Rng rng(48, "rb");
  Matrix b = rng.normal_matrix(4, 3);
  Matrix w = rng.normal_matrix(3, 2);
  for (Eigen::Index j = 0; j < 3; ++j) {
    const double s = std::sqrt(w.row(j).norm() / b.col(j).norm());
    b.col(j) *= s;
    w.row(j) /= s;
  }
  const auto same = rebalance_net(b, w);
  EXPECT_LE(max_abs(same.B - b), 1e-15);
  EXPECT_LE(max_abs(same.W - w), 1e-15);

  Matrix b2 = b, w2 = w;
  b2.col(1) *= 4.0;
  w2.row(1) /= 4.0;
  const auto fixed = rebalance_net(b2, w2);
  const Matrix x = rng.normal_matrix(100, 4);
  EXPECT_LE(max_abs(taskgen::relu(x * fixed.B) * fixed.W - taskgen::relu(x * b2) * w2), 1e-10);
  EXPECT_LT(fixed.B.squaredNorm() + fixed.W.squaredNorm(), b2.squaredNorm() + w2.squaredNorm());
}

TEST(Relu, RebalanceDegenerateNeuron) {
  Matrix b = Matrix::Ones(3, 2);
  b.col(0).setZero();
  const Matrix w = Matrix::Ones(2, 2);
  EXPECT_THROW(rebalance_net(b, w), DegenerateNeuron);
  Matrix w0 = w;
  w0.row(0).setZero();
  EXPECT_NO_THROW(rebalance_net(b, w0));
}

TEST(Relu, TrainedNetIsNearlyBalanced) {
  EnsembleSpec spec;
  spec.track = Track::relu;
  spec.d = 5;
  spec.k = 2;
  spec.T = 4;
  spec.n1 = 60;
  spec.sigma = 0.1;
  const GroundTruth gt = sample_ground_truth(spec);
  const TaskBundle b = sample_tasks(spec, gt);
  FitOptions opts;
  opts.max_iter = 20000;
  opts.grad_tol = 1e-8;
  const FitResult fit = fit_relu_mtl(b, 4, 1e-2, opts);
  const auto bal = rebalance_net(fit.B_hat, fit.W_hat);
  const double before = fit.B_hat.squaredNorm() + fit.W_hat.squaredNorm();
  const double after = bal.B.squaredNorm() + bal.W.squaredNorm();
  EXPECT_LE(after, before);
  EXPECT_LE((before - after) / before, 1e-4);
}

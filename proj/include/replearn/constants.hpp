#pragma once

// Frozen constants for the bound checks. Each was set once from a pilot run
// (configuration noted beside it) and is not tuned afterwards.

namespace replearn::constants {

// Fixed-design kernel lemma and theorem, multiplicative constant on all three
// rate expressions. Pilot: n = 100, T = 8, d = 25, sigma = 1, rank-2 Theta*,
// 50 seeds, lambda = (2/n)||X^T Z||.
inline constexpr double kKernelConstant = 10.0;

// Matrix deviation / intrinsic-dimension concentration constant C.
// Pilot: identity covariance, d = 40, n = 100, delta = 0.05, 200 trials.
inline constexpr double kDeviationConstant = 10.0;

// Slack factor on the source-regularization guarantee (exact value 3) that
// absorbs inexact optimization at grad_residual <= 1e-6.
inline constexpr double kNormThetaFactor = 3.1;

// Data-dependent Gaussian width: estimate^2 <= kWidthConstant (2kT + 2kd log n1).
inline constexpr double kWidthConstant = 20.0;

// Few-shot advantage: lowdim median ER must fall below this multiple of the
// ambient ridge baseline. Pilot: d = 100, k = 2, T = 25, n1 = 1000, n2 = 20,
// sigma = 0.5 gave a ratio near 0.04.
inline constexpr double kFewShotFactor = 0.5;

// Upper limit on the reported covariance-concentration constant
// n / (rho^4 (d + log(1/delta))).
inline constexpr double kCovarianceConstantLimit = 50.0;

// Sandwich used by the covariance-concentration check: 0.9 I <= S <= 1.1 I.
inline constexpr double kSandwichLow = 0.9;
inline constexpr double kSandwichHigh = 1.1;

}  // namespace replearn::constants

#pragma once

// Dense linear-algebra kernel shared by every other module: projections,
// pseudoinverses, ridge solves, singular-value thresholding, Loewner-order
// tests and balanced factor splits. All functions are pure and use
// deterministic (non-randomized) decompositions.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "replearn/error.hpp"

namespace replearn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct PsdCheckResult {
  bool is_psd = false;
  double min_eigenvalue = 0.0;
  double tolerance_used = 0.0;
};

struct FactorPair {
  Matrix B;
  Matrix W;
};

struct Svd {
  Matrix U;  // rows x r
  Vector S;  // r, descending
  Matrix V;  // cols x r
};

namespace linops {

inline constexpr double kRankCutoff = 1e-12;
inline constexpr double kSymmetryTol = 1e-10;
inline constexpr double kMaxCondition = 1e12;

inline void require_finite(const Matrix& m, const char* name) {
  if (!m.allFinite()) throw InvalidInput(std::string(name) + " has non-finite entries");
}

inline Svd thin_svd(const Matrix& m) {
  Svd out;
  if (m.rows() == 0 || m.cols() == 0) {
    out.U = Matrix(m.rows(), 0);
    out.S = Vector(0);
    out.V = Matrix(m.cols(), 0);
    return out;
  }
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.U = svd.matrixU();
  out.S = svd.singularValues();
  out.V = svd.matrixV();
  return out;
}

// Singular values at or below this are treated as exact zeros.
inline double rank_threshold(const Vector& s, Eigen::Index rows, Eigen::Index cols) {
  if (s.size() == 0) return 0.0;
  return static_cast<double>(std::max(rows, cols)) * s(0) * kRankCutoff;
}

inline Eigen::Index numerical_rank(const Svd& svd, Eigen::Index rows, Eigen::Index cols) {
  const double thr = rank_threshold(svd.S, rows, cols);
  Eigen::Index r = 0;
  while (r < svd.S.size() && svd.S(r) > thr) ++r;
  return r;
}

inline Eigen::Index rank(const Matrix& m) {
  return numerical_rank(thin_svd(m), m.rows(), m.cols());
}

// Orthonormal basis of the column space of m.
inline Matrix range_basis(const Matrix& m) {
  const Svd svd = thin_svd(m);
  return svd.U.leftCols(numerical_rank(svd, m.rows(), m.cols()));
}

inline Matrix pinv(const Matrix& m) {
  const Svd svd = thin_svd(m);
  const Eigen::Index r = numerical_rank(svd, m.rows(), m.cols());
  Matrix out = Matrix::Zero(m.cols(), m.rows());
  if (r > 0) {
    out = svd.V.leftCols(r) * svd.S.head(r).cwiseInverse().asDiagonal() *
          svd.U.leftCols(r).transpose();
  }
  return out;
}

inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

inline double nuclear_norm(const Matrix& m) {
  require_finite(m, "nuclear_norm input");
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues().sum();
}

// P_A = A (A^T A)^+ A^T, the orthogonal projector onto the column space of A.
inline Matrix projector(const Matrix& a) {
  if (a.rows() < 1) throw InvalidInput("projector needs at least one row");
  require_finite(a, "projector input");
  const Matrix basis = range_basis(a);
  Matrix p = basis * basis.transpose();
  return 0.5 * (p + p.transpose());
}

inline Matrix complement_projector(const Matrix& a) {
  Matrix p = projector(a);
  return Matrix::Identity(a.rows(), a.rows()) - p;
}

// argmin_w (1/2n)||Xw - y||^2 + (lambda/2)||w||^2.
inline Vector ridge_solve(const Matrix& x, const Vector& y, double lambda) {
  const auto n = x.rows();
  if (n < 1) throw InvalidInput("ridge_solve needs n >= 1");
  if (y.size() != n) throw InvalidInput("ridge_solve: y length does not match X rows");
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw InvalidInput("ridge_solve: lambda must be finite and >= 0");
  require_finite(x, "ridge_solve X");
  if (!y.allFinite()) throw InvalidInput("ridge_solve y has non-finite entries");

  const double inv_n = 1.0 / static_cast<double>(n);
  if (lambda == 0.0) {
    Eigen::JacobiSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double smax = s.size() ? s(0) : 0.0;
    const double smin = s.size() ? s(s.size() - 1) : 0.0;
    const double cond = (smin > 0.0) ? smax / smin : std::numeric_limits<double>::infinity();
    if (x.cols() > x.rows() || !(cond < kMaxCondition))
      throw SingularMatrix("ridge_solve with lambda = 0 needs invertible X^T X", cond);
    return svd.solve(y);
  }
  Matrix g = inv_n * (x.transpose() * x);
  g.diagonal().array() += lambda;
  return g.llt().solve(inv_n * (x.transpose() * y));
}

// max |(X^T X + lambda I)^{-1} X^T - X^T (X X^T + lambda I)^{-1}|. Exact algebra
// says zero; the returned value measures floating-point error only.
inline double resolvent_commute_gap(const Matrix& x, double lambda) {
  if (!(lambda > 0.0)) throw InvalidInput("resolvent_commute_gap needs lambda > 0");
  require_finite(x, "resolvent_commute_gap X");
  const auto n = x.rows();
  const auto m = x.cols();
  if (n == 0 || m == 0) return 0.0;
  const double root = std::sqrt(lambda);
  // (X^T X + lambda I)^{-1} X^T is the least-squares solution of
  // [X; sqrt(lambda) I] W = [I_n; 0]; solving through QR of the stacked matrix
  // avoids squaring the condition number.
  Matrix left_aug(n + m, m);
  left_aug << x, root * Matrix::Identity(m, m);
  Matrix left_rhs = Matrix::Zero(n + m, n);
  left_rhs.topRows(n).setIdentity();
  const Matrix left = left_aug.colPivHouseholderQr().solve(left_rhs);
  // X^T (XX^T + lambda I)^{-1} = ((XX^T + lambda I)^{-1} X)^T, same construction on X^T.
  Matrix right_aug(m + n, n);
  right_aug << x.transpose(), root * Matrix::Identity(n, n);
  Matrix right_rhs = Matrix::Zero(m + n, m);
  right_rhs.topRows(m).setIdentity();
  const Matrix right = right_aug.colPivHouseholderQr().solve(right_rhs).transpose();
  return (left - right).cwiseAbs().maxCoeff();
}

// Proximal operator of tau * nuclear norm.
inline Matrix svt(const Matrix& m, double tau) {
  if (!(tau >= 0.0)) throw InvalidInput("svt needs tau >= 0");
  require_finite(m, "svt input");
  if (tau == 0.0) return m;
  const Svd svd = thin_svd(m);
  Vector shrunk = (svd.S.array() - tau).cwiseMax(0.0).matrix();
  return svd.U * shrunk.asDiagonal() * svd.V.transpose();
}

inline bool is_symmetric(const Matrix& a, double tol = kSymmetryTol) {
  if (a.rows() != a.cols()) return false;
  if (a.size() == 0) return true;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline double min_eigenvalue(const Matrix& sym) {
  if (sym.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (sym + sym.transpose()),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double max_eigenvalue(const Matrix& sym) {
  if (sym.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (sym + sym.transpose()),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

// Verdict on A - B being positive semidefinite up to -tol.
inline PsdCheckResult loewner_geq(const Matrix& a, const Matrix& b, double tol) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidInput("loewner_geq: shape mismatch");
  require_finite(a, "loewner_geq A");
  require_finite(b, "loewner_geq B");
  if (!is_symmetric(a) || !is_symmetric(b))
    throw InvalidInput("loewner_geq: inputs must be symmetric to 1e-10");
  PsdCheckResult out;
  out.tolerance_used = tol;
  out.min_eigenvalue = min_eigenvalue(a - b);
  out.is_psd = out.min_eigenvalue >= -tol;
  return out;
}

// Balanced split Theta = B W with ||B||_F^2 = ||W||_F^2 = ||Theta||_*.
inline FactorPair factor_split(const Matrix& theta) {
  require_finite(theta, "factor_split input");
  const Svd svd = thin_svd(theta);
  const Vector root = svd.S.cwiseSqrt();
  FactorPair out;
  out.B = svd.U * root.asDiagonal();
  out.W = root.asDiagonal() * svd.V.transpose();
  return out;
}

// Symmetric PSD square root; negative eigenvalues from round-off are clamped.
inline Matrix psd_sqrt(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (sym + sym.transpose()));
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

// Thin Q factor of a Householder QR, with signs fixed so that diag(R) >= 0.
inline Matrix orthonormalize(const Matrix& m) {
  Eigen::HouseholderQR<Matrix> qr(m);
  Matrix q = qr.householderQ() * Matrix::Identity(m.rows(), m.cols());
  const Matrix r = qr.matrixQR().topRows(m.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

}  // namespace linops

using linops::complement_projector;
using linops::factor_split;
using linops::loewner_geq;
using linops::nuclear_norm;
using linops::projector;
using linops::resolvent_commute_gap;
using linops::ridge_solve;
using linops::svt;

}  // namespace replearn

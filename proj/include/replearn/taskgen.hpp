#pragma once

// Synthetic ground truths and task ensembles. Every assumption the estimators
// rely on (orthonormal representation, unit-norm diverse heads, covariance
// dominance) is enforced by construction and can be re-verified on the output.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "replearn/error.hpp"
#include "replearn/linops.hpp"
#include "replearn/rng.hpp"

namespace replearn {

enum class CovarianceFamily { identity, diagonal_decay, random_psd };
enum class InputDist { gaussian, scaled_rademacher };
enum class Track { lowdim, highdim, relu };

inline std::string_view to_string(CovarianceFamily f) {
  switch (f) {
    case CovarianceFamily::identity: return "identity";
    case CovarianceFamily::diagonal_decay: return "diagonal-decay";
    case CovarianceFamily::random_psd: return "random-psd";
  }
  return "?";
}
inline std::string_view to_string(InputDist d) {
  return d == InputDist::gaussian ? "gaussian" : "scaled-rademacher";
}
inline std::string_view to_string(Track t) {
  switch (t) {
    case Track::lowdim: return "lowdim";
    case Track::highdim: return "highdim";
    case Track::relu: return "relu";
  }
  return "?";
}

inline CovarianceFamily parse_covariance_family(std::string_view s) {
  if (s == "identity") return CovarianceFamily::identity;
  if (s == "diagonal-decay") return CovarianceFamily::diagonal_decay;
  if (s == "random-psd") return CovarianceFamily::random_psd;
  throw InvalidInput("unknown covariance_family '" + std::string(s) + "'");
}
inline InputDist parse_input_dist(std::string_view s) {
  if (s == "gaussian") return InputDist::gaussian;
  if (s == "scaled-rademacher") return InputDist::scaled_rademacher;
  throw InvalidInput("unknown input_dist '" + std::string(s) + "'");
}
inline Track parse_track(std::string_view s) {
  if (s == "lowdim") return Track::lowdim;
  if (s == "highdim") return Track::highdim;
  if (s == "relu") return Track::relu;
  throw InvalidInput("unknown track '" + std::string(s) + "'");
}

// All generative knobs of one ensemble. For the relu track, d is the input
// dimension d0 and k is the teacher width.
struct EnsembleSpec {
  std::size_t d = 10;
  std::size_t k = 2;
  std::size_t T = 20;
  std::size_t n1 = 100;
  std::size_t n2 = 20;
  double sigma = 1.0;
  double c = 1.0;
  CovarianceFamily covariance_family = CovarianceFamily::identity;
  InputDist input_dist = InputDist::gaussian;
  std::uint64_t master_seed = 0;
  Track track = Track::lowdim;

  void validate() const {
    if (d < 1 || T < 1) throw InvalidInput("EnsembleSpec needs d >= 1 and T >= 1");
    if (n1 < 1 || n2 < 1) throw InvalidInput("EnsembleSpec needs n1 >= 1 and n2 >= 1");
    if (!(c > 0.0 && c <= 1.0)) throw InvalidInput("EnsembleSpec needs 0 < c <= 1");
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
      throw InvalidInput("EnsembleSpec needs finite sigma >= 0");
    if (k < 1) throw InvalidInput("EnsembleSpec needs k >= 1");
    if (track == Track::lowdim && 2 * k > std::min(d, T))
      throw InvalidInput("lowdim track needs 2k <= min(d, T)");
    if (track == Track::highdim && k > d) throw InvalidInput("highdim track needs k <= d");
  }
};

struct GroundTruth {
  Matrix B_star;      // d x k: orthonormal columns (linear tracks) or teacher hidden weights (relu)
  Matrix W_star;      // k x T: unit-norm columns
  Matrix Theta_star;  // d x T: B* W* (linear tracks)
  double R = 0.0;     // nuclear norm of Theta* (linear tracks)
  std::vector<Matrix> Sigmas;       // T+1 population covariances, target last
  std::vector<Matrix> sigma_roots;  // their PSD square roots

  std::size_t T() const { return static_cast<std::size_t>(W_star.cols()); }
  const Matrix& target_sigma() const { return Sigmas.back(); }
};

struct TaskBundle {
  std::vector<Matrix> X;  // T matrices n1 x d
  std::vector<Vector> y;  // T vectors n1
  Matrix X_target;        // n2 x d
  Vector y_target;        // n2
  std::vector<Vector> Z;  // realized source noise, y_t - signal_t
  Vector z_target;        // realized target noise
  Vector target_weight;   // w*_{T+1} (lowdim, relu head) or theta*_{T+1} (highdim)
};

namespace taskgen {

inline constexpr int kDiversityRetries = 100;

inline Matrix relu(const Matrix& m) { return m.cwiseMax(0.0); }

// Noise-free regression function of a task evaluated on the rows of x.
inline Vector task_signal(Track track, const GroundTruth& gt, const Matrix& x,
                          const Vector& weight) {
  switch (track) {
    case Track::lowdim: return x * (gt.B_star * weight);
    case Track::highdim: return x * weight;
    case Track::relu: return relu(x * gt.B_star) * weight;
  }
  return {};
}

// Per-task weight used by task_signal for source task t.
inline Vector source_weight(Track track, const GroundTruth& gt, std::size_t t) {
  const auto col = static_cast<Eigen::Index>(t);
  return track == Track::highdim ? Vector(gt.Theta_star.col(col)) : Vector(gt.W_star.col(col));
}

// Sigma_1..Sigma_T followed by Sigma_{T+1}. Dominance Sigma_t >= c Sigma_{T+1}
// holds by construction: every source covariance is c * target plus a PSD term.
inline std::vector<Matrix> make_covariances(const EnsembleSpec& spec) {
  spec.validate();
  const auto d = static_cast<Eigen::Index>(spec.d);
  Rng rng(spec.master_seed, "covariance");
  std::vector<Matrix> out;
  out.reserve(spec.T + 1);

  Vector decay(d);
  for (Eigen::Index j = 0; j < d; ++j) decay(j) = 1.0 / static_cast<double>(j + 1);

  Matrix target;
  switch (spec.covariance_family) {
    case CovarianceFamily::identity: target = Matrix::Identity(d, d); break;
    case CovarianceFamily::diagonal_decay: target = decay.asDiagonal(); break;
    case CovarianceFamily::random_psd: {
      const Matrix q = linops::orthonormalize(rng.normal_matrix(d, d));
      target = q * decay.asDiagonal() * q.transpose();
      target = 0.5 * (target + target.transpose());
      break;
    }
  }

  const bool shared = spec.track != Track::lowdim ||
                      spec.covariance_family == CovarianceFamily::identity;
  for (std::size_t t = 0; t < spec.T; ++t) {
    if (shared) {
      out.push_back(target);
      continue;
    }
    Vector bump(d);
    for (Eigen::Index j = 0; j < d; ++j) bump(j) = rng.uniform() * decay(j);
    Matrix extra;
    if (spec.covariance_family == CovarianceFamily::diagonal_decay) {
      extra = bump.asDiagonal();
    } else {
      const Matrix q = linops::orthonormalize(rng.normal_matrix(d, d));
      extra = q * bump.asDiagonal() * q.transpose();
      extra = 0.5 * (extra + extra.transpose());
    }
    out.push_back(spec.c * target + extra);
  }
  out.push_back(target);
  return out;
}

inline double sigma_k_squared(const Matrix& w, std::size_t k) {
  Eigen::JacobiSVD<Matrix> svd(w);
  const Vector& s = svd.singularValues();
  if (static_cast<Eigen::Index>(k) > s.size() || k == 0) return 0.0;
  const double v = s(static_cast<Eigen::Index>(k) - 1);
  return v * v;
}

inline GroundTruth sample_ground_truth(const EnsembleSpec& spec) {
  spec.validate();
  const auto d = static_cast<Eigen::Index>(spec.d);
  const auto k = static_cast<Eigen::Index>(spec.k);
  const auto T = static_cast<Eigen::Index>(spec.T);
  Rng rng(spec.master_seed, "ground_truth");

  GroundTruth gt;
  if (spec.track == Track::relu) {
    gt.B_star = rng.normal_matrix(d, k);
    for (Eigen::Index j = 0; j < k; ++j) gt.B_star.col(j).normalize();
  } else {
    gt.B_star = linops::orthonormalize(rng.normal_matrix(d, k));
  }

  const double threshold = static_cast<double>(T) / (4.0 * static_cast<double>(k));
  bool accepted = false;
  for (int attempt = 0; attempt < kDiversityRetries && !accepted; ++attempt) {
    Matrix w = rng.normal_matrix(k, T);
    for (Eigen::Index t = 0; t < T; ++t) w.col(t).normalize();
    if (sigma_k_squared(w, spec.k) >= threshold) {
      gt.W_star = std::move(w);
      accepted = true;
    }
  }
  if (!accepted)
    throw GenerationError("no W* with sigma_k(W*)^2 >= T/(4k) within " +
                          std::to_string(kDiversityRetries) + " draws (T=" +
                          std::to_string(spec.T) + ", k=" + std::to_string(spec.k) + ")");

  gt.Theta_star = gt.B_star * gt.W_star;
  if (spec.track != Track::relu) gt.R = linops::nuclear_norm(gt.Theta_star);

  gt.Sigmas = make_covariances(spec);
  gt.sigma_roots.reserve(gt.Sigmas.size());
  for (const auto& s : gt.Sigmas) gt.sigma_roots.push_back(linops::psd_sqrt(s));
  return gt;
}

// lowdim: uniform on the unit sphere of R^k. highdim: Theta* g / sqrt(T).
// relu: the target head mixes the teacher task heads, W* g / sqrt(T).
inline Vector sample_target_weight(const GroundTruth& gt, Track track, std::uint64_t seed) {
  Rng rng(seed, "target_weight");
  const auto T = static_cast<double>(gt.T());
  switch (track) {
    case Track::lowdim: {
      Vector w = rng.normal_vector(gt.W_star.rows());
      const double norm = w.norm();
      return norm > 0.0 ? Vector(w / norm) : sample_target_weight(gt, track, seed + 1);
    }
    case Track::highdim: return gt.Theta_star * rng.normal_vector(gt.W_star.cols()) / std::sqrt(T);
    case Track::relu: return gt.W_star * rng.normal_vector(gt.W_star.cols()) / std::sqrt(T);
  }
  return {};
}

// Rows are Sigma^{1/2} xbar with xbar whitened gaussian or +-1 entries.
inline Matrix sample_inputs(InputDist dist, const Matrix& sigma_root, bool identity,
                            Eigen::Index n, Rng& rng) {
  const Eigen::Index d = sigma_root.rows();
  Matrix white = dist == InputDist::gaussian ? rng.normal_matrix(n, d) : rng.sign_matrix(n, d);
  if (identity) return white;
  return white * sigma_root;
}

struct LabeledSample {
  Matrix X;
  Vector y;
  Vector z;
};

// Draws n labeled points of a task whose covariance index is cov_index
// (0..T-1 sources, T target). The stored noise is y - signal, so the noise
// bookkeeping identity holds bit-for-bit.
inline LabeledSample sample_labeled(const EnsembleSpec& spec, const GroundTruth& gt,
                                    std::size_t cov_index, const Vector& weight,
                                    std::size_t n, Rng& rng) {
  LabeledSample s;
  const bool identity = spec.covariance_family == CovarianceFamily::identity;
  s.X = sample_inputs(spec.input_dist, gt.sigma_roots[cov_index], identity,
                      static_cast<Eigen::Index>(n), rng);
  const Vector signal = task_signal(spec.track, gt, s.X, weight);
  Vector noise(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise(i) = spec.sigma * rng.normal();
  s.y = signal + noise;
  s.z = s.y - signal;
  return s;
}

inline TaskBundle sample_tasks(const EnsembleSpec& spec, const GroundTruth& gt) {
  spec.validate();
  if (gt.Sigmas.size() != spec.T + 1 || gt.T() != spec.T ||
      gt.B_star.rows() != static_cast<Eigen::Index>(spec.d))
    throw InvalidInput("sample_tasks: ground truth does not match spec");
  TaskBundle b;
  b.X.reserve(spec.T);
  b.y.reserve(spec.T);
  b.Z.reserve(spec.T);
  for (std::size_t t = 0; t < spec.T; ++t) {
    Rng rng(spec.master_seed, "source_task", t);
    LabeledSample s = sample_labeled(spec, gt, t, source_weight(spec.track, gt, t), spec.n1, rng);
    b.X.push_back(std::move(s.X));
    b.y.push_back(std::move(s.y));
    b.Z.push_back(std::move(s.z));
  }
  b.target_weight =
      sample_target_weight(gt, spec.track, stream_seed(spec.master_seed, "target_weight"));
  Rng rng(spec.master_seed, "target_task");
  LabeledSample s = sample_labeled(spec, gt, spec.T, b.target_weight, spec.n2, rng);
  b.X_target = std::move(s.X);
  b.y_target = std::move(s.y);
  b.z_target = std::move(s.z);
  return b;
}

// Source labels stacked as an n1 x T matrix (requires equal n1 across tasks).
inline Matrix stacked_labels(const TaskBundle& b) {
  const auto T = static_cast<Eigen::Index>(b.y.size());
  const Eigen::Index n = T ? b.y[0].size() : 0;
  Matrix y(n, T);
  for (Eigen::Index t = 0; t < T; ++t) y.col(t) = b.y[static_cast<std::size_t>(t)];
  return y;
}

inline Matrix stacked_noise(const TaskBundle& b) {
  const auto T = static_cast<Eigen::Index>(b.Z.size());
  const Eigen::Index n = T ? b.Z[0].size() : 0;
  Matrix z(n, T);
  for (Eigen::Index t = 0; t < T; ++t) z.col(t) = b.Z[static_cast<std::size_t>(t)];
  return z;
}

// kappa = max_t lambda_max(Sigma_t) / min_t lambda_min(Sigma_t) over source tasks.
inline double condition_kappa(const GroundTruth& gt) {
  double hi = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < gt.Sigmas.size(); ++t) {
    hi = std::max(hi, linops::max_eigenvalue(gt.Sigmas[t]));
    lo = std::min(lo, linops::min_eigenvalue(gt.Sigmas[t]));
  }
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

}  // namespace taskgen

using taskgen::make_covariances;
using taskgen::sample_ground_truth;
using taskgen::sample_target_weight;
using taskgen::sample_tasks;

}  // namespace replearn

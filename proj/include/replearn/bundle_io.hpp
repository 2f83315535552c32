#pragma once

// Plain binary TaskBundle container, little-endian throughout:
//
//   "RLB1"                      4 bytes magic
//   d, k, T, n1, n2             u64 each
//   X_1 .. X_T                  n1 x d f64, row-major
//   y_1 .. y_T                  n1 f64
//   X_target                    n2 x d f64, row-major
//   y_target                    n2 f64
//   Z_1 .. Z_T                  n1 f64 (realized source noise)
//   z_target                    n2 f64
//   len(target_weight)          u64
//   target_weight               len f64

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "replearn/taskgen.hpp"

namespace replearn::bundle_io {

inline constexpr char kMagic[4] = {'R', 'L', 'B', '1'};

namespace detail {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&v, bytes, sizeof(T));
  }
  return v;
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void put_f64(std::ostream& os, double v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw InvalidInput("truncated bundle");
  return to_little(v);
}
inline double get_f64(std::istream& is) {
  double v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw InvalidInput("truncated bundle");
  return to_little(v);
}

inline void put_matrix(std::ostream& os, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_f64(os, m(i, j));
}
inline void put_vector(std::ostream& os, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(os, v(i));
}
inline Matrix get_matrix(std::istream& is, std::uint64_t rows, std::uint64_t cols) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get_f64(is);
  return m;
}
inline Vector get_vector(std::istream& is, std::uint64_t n) {
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = get_f64(is);
  return v;
}

}  // namespace detail

struct BundleHeader {
  std::uint64_t d = 0, k = 0, T = 0, n1 = 0, n2 = 0;
};

inline void write_bundle(std::ostream& os, const EnsembleSpec& spec, const TaskBundle& b) {
  using namespace detail;
  if (b.X.size() != spec.T || b.y.size() != spec.T || b.Z.size() != spec.T)
    throw InvalidInput("write_bundle: task count does not match spec");
  os.write(kMagic, 4);
  for (std::uint64_t v : {std::uint64_t(spec.d), std::uint64_t(spec.k), std::uint64_t(spec.T),
                          std::uint64_t(spec.n1), std::uint64_t(spec.n2)})
    put_u64(os, v);
  for (const auto& x : b.X) put_matrix(os, x);
  for (const auto& y : b.y) put_vector(os, y);
  put_matrix(os, b.X_target);
  put_vector(os, b.y_target);
  for (const auto& z : b.Z) put_vector(os, z);
  put_vector(os, b.z_target);
  put_u64(os, static_cast<std::uint64_t>(b.target_weight.size()));
  put_vector(os, b.target_weight);
  if (!os) throw Error("write_bundle: stream error");
}

inline TaskBundle read_bundle(std::istream& is, BundleHeader* header_out = nullptr) {
  using namespace detail;
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw InvalidInput("not an RLB1 bundle");
  BundleHeader h;
  h.d = get_u64(is);
  h.k = get_u64(is);
  h.T = get_u64(is);
  h.n1 = get_u64(is);
  h.n2 = get_u64(is);
  constexpr std::uint64_t kLimit = 1ULL << 32;
  if (h.d > kLimit || h.T > kLimit || h.n1 > kLimit || h.n2 > kLimit)
    throw InvalidInput("bundle header dimensions out of range");
  TaskBundle b;
  for (std::uint64_t t = 0; t < h.T; ++t) b.X.push_back(get_matrix(is, h.n1, h.d));
  for (std::uint64_t t = 0; t < h.T; ++t) b.y.push_back(get_vector(is, h.n1));
  b.X_target = get_matrix(is, h.n2, h.d);
  b.y_target = get_vector(is, h.n2);
  for (std::uint64_t t = 0; t < h.T; ++t) b.Z.push_back(get_vector(is, h.n1));
  b.z_target = get_vector(is, h.n2);
  const std::uint64_t len = get_u64(is);
  if (len > kLimit) throw InvalidInput("bundle target weight length out of range");
  b.target_weight = get_vector(is, len);
  if (header_out) *header_out = h;
  return b;
}

inline void write_bundle_file(const std::string& path, const EnsembleSpec& spec,
                              const TaskBundle& b) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("cannot open '" + path + "' for writing");
  write_bundle(os, spec, b);
}

inline TaskBundle read_bundle_file(const std::string& path, BundleHeader* header_out = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot open '" + path + "'");
  return read_bundle(is, header_out);
}

}  // namespace replearn::bundle_io

#pragma once
// Shared fixtures for the unit and acceptance tests.

#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>

#include "mqsrom/mqsrom.hpp"

namespace mqsrom::test {

namespace fs = std::filesystem;

inline std::shared_ptr<const MqsDae> transformer(int n = 8, ReluctivityCurve curve = ReluctivityCurve::brauer()) {
  TransformerParams prm;
  prm.nx = prm.ny = n;
  prm.curve = std::move(curve);
  return std::make_shared<MqsDae>(std::make_shared<FemProblem>(build_transformer_2d(prm)));
}

/// Cached default-material transformer, shared across tests of one binary.
inline std::shared_ptr<const MqsDae> transformer_cached(int n = 8) {
  static std::map<int, std::shared_ptr<const MqsDae>> cache;
  auto& slot = cache[n];
  if (!slot) slot = transformer(n);
  return slot;
}

inline std::shared_ptr<const MqsDae> synthetic(Synthetic3dParams prm = {}) {
  return std::make_shared<MqsDae>(std::make_shared<FemProblem>(build_synthetic_3d(prm)));
}

inline Vector random_vector(Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = scale * nd(rng);
  return v;
}

inline DenseMatrix random_matrix(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  DenseMatrix m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = nd(rng);
  return m;
}

/// Random potential with the largest element flux density equal to peak.
inline Vector random_potential(const MqsDae& dae, std::mt19937_64& rng, double peak = 1.5) {
  Vector a = random_vector(dae.n(), rng);
  return a * (peak / dae.max_flux(a));
}

/// Fresh empty directory under the system temp dir.
inline fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mqsrom_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Distance between the column spans of two orthonormal bases of equal size.
inline double subspace_distance(const DenseMatrix& a, const DenseMatrix& b) {
  return (a * a.transpose() - b * b.transpose()).norm();
}

}  // namespace mqsrom::test

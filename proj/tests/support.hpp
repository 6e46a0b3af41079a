#pragma once

#include "specrage/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

namespace specrage::testing {

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

// Symmetric, non-negative, zero diagonal, roughly half the entries nonzero.
inline Matrix random_affinity(Index m, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix w = Matrix::Zero(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = i + 1; j < m; ++j)
      if (u(rng) < 0.5) w(i, j) = w(j, i) = u(rng);
  return w;
}

// Row-stochastic matrix with strictly positive entries.
inline Matrix random_simplex_rows(Index m, Index v, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Matrix a(m, v);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < v; ++j) a(i, j) = u(rng);
    a.row(i) /= a.row(i).sum();
  }
  return a;
}

inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("specrage_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace specrage::testing

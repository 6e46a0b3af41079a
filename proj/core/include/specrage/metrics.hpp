#pragma once

#include "specrage/types.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace specrage {

// Minimum-cost perfect assignment on a square cost matrix (Hungarian
// algorithm, O(c^3)). Returns assignment[row] = column.
std::vector<Index> solve_assignment(const Matrix& cost);

// Contingency table with rows = distinct predicted labels, cols = distinct
// true labels, both in ascending label order.
Matrix contingency_table(std::span<const int> pred, std::span<const int> truth);

// Best matched fraction over one-to-one label maps.
double clustering_accuracy(std::span<const int> pred, std::span<const int> truth);

// I(pred; truth) / sqrt(H(pred) H(truth)) with natural logs. Two constant
// labelings score 1, exactly one constant labeling scores 0.
double nmi(std::span<const int> pred, std::span<const int> truth);

// Pair-counting Rand index adjusted for chance.
double ari(std::span<const int> pred, std::span<const int> truth);

// 100 * (clean - contaminated) / clean.
double relative_degradation(double clean_metric, double contaminated_metric);

struct EvalReport {
  double acc = 0.0;
  double nmi = 0.0;
  double ari = 0.0;
  std::optional<double> grassmann_dist_sq;
  std::vector<double> offdiag_ratios;
  std::optional<double> degradation_pct;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;

  // One "key value" pair per line; config entries are prefixed "config.".
  std::string serialize() const;
  static EvalReport parse(const std::string& text);
  void write(const std::filesystem::path& path) const;
  static EvalReport read(const std::filesystem::path& path);
};

struct KMeansResult {
  Labels labels;
  Matrix centroids;
  double inertia = 0.0;
  int iterations = 0;
  // Inertia after every Lloyd assignment of the winning restart.
  std::vector<double> inertia_trace;
};

struct KMeansOptions {
  int restarts = 10;
  int max_iterations = 300;
  double tolerance = 1e-8;  // largest centroid shift that counts as converged
};

// k-means++ seeding followed by Lloyd iterations; best restart by inertia,
// ties resolved by the earlier restart.
KMeansResult kmeans(const Matrix& points, Index num_clusters, std::uint64_t seed, const KMeansOptions& options = {});

// Clusters `embedding` with k-means and scores it against `truth`.
EvalReport evaluate_embedding(const Matrix& embedding, std::span<const int> truth, Index num_clusters,
                              std::uint64_t seed, int restarts = 10);

}  // namespace specrage

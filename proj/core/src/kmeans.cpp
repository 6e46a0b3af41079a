#include "specrage/error.hpp"
#include "specrage/metrics.hpp"

#include <algorithm>
#include <limits>

namespace specrage {

namespace {

Matrix plus_plus_seed(const Matrix& x, Index c, Rng& rng) {
  const Index n = x.rows();
  Matrix centroids(c, x.cols());
  std::uniform_int_distribution<Index> first(0, n - 1);
  centroids.row(0) = x.row(first(rng));
  Vector closest = (x.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Index k = 1; k < c; ++k) {
    const double total = closest.sum();
    Index chosen = 0;
    if (total > 0.0) {
      double target = unit(rng) * total;
      for (chosen = 0; chosen < n - 1; ++chosen) {
        target -= closest(chosen);
        if (target <= 0.0) break;
      }
    } else {
      chosen = first(rng);
    }
    centroids.row(k) = x.row(chosen);
    closest = closest.cwiseMin((x.rowwise() - centroids.row(k)).rowwise().squaredNorm());
  }
  return centroids;
}

// Assigns every point to its nearest centroid; returns the inertia.
double assign(const Matrix& x, const Matrix& centroids, Labels& labels, Vector& best_dist) {
  const Index n = x.rows();
  best_dist.setConstant(n, std::numeric_limits<double>::infinity());
  for (Index k = 0; k < centroids.rows(); ++k) {
    const Vector d = (x.rowwise() - centroids.row(k)).rowwise().squaredNorm();
    for (Index i = 0; i < n; ++i)
      if (d(i) < best_dist(i)) {
        best_dist(i) = d(i);
        labels[i] = static_cast<int>(k);
      }
  }
  return best_dist.sum();
}

KMeansResult lloyd(const Matrix& x, Index c, Rng& rng, const KMeansOptions& options) {
  const Index n = x.rows();
  KMeansResult result;
  result.centroids = plus_plus_seed(x, c, rng);
  result.labels.assign(static_cast<std::size_t>(n), 0);
  Vector dist(n);
  for (int it = 0; it < options.max_iterations; ++it) {
    result.inertia = assign(x, result.centroids, result.labels, dist);
    result.inertia_trace.push_back(result.inertia);
    result.iterations = it + 1;

    Matrix next = Matrix::Zero(c, x.cols());
    Vector counts = Vector::Zero(c);
    for (Index i = 0; i < n; ++i) {
      next.row(result.labels[i]) += x.row(i);
      counts(result.labels[i]) += 1.0;
    }
    for (Index k = 0; k < c; ++k) {
      if (counts(k) > 0) {
        next.row(k) /= counts(k);
      } else {
        // Empty cluster: move it onto the point farthest from its centroid.
        Index far = 0;
        dist.maxCoeff(&far);
        next.row(k) = x.row(far);
        dist(far) = 0.0;
      }
    }
    const double shift = (next - result.centroids).rowwise().norm().maxCoeff();
    result.centroids = std::move(next);
    if (shift < options.tolerance) break;
  }
  result.inertia = assign(x, result.centroids, result.labels, dist);
  if (result.inertia_trace.empty() || result.inertia != result.inertia_trace.back())
    result.inertia_trace.push_back(result.inertia);
  return result;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, Index num_clusters, std::uint64_t seed, const KMeansOptions& options) {
  if (num_clusters < 1 || num_clusters > points.rows())
    throw ParameterError("kmeans: need 1 <= clusters <= n");
  if (options.restarts < 1) throw ParameterError("kmeans: restarts must be >= 1");
  if (!points.allFinite()) throw ParameterError("kmeans: non-finite input");
  Rng rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < options.restarts; ++r) {
    auto result = lloyd(points, num_clusters, rng, options);
    if (result.inertia < best.inertia) best = std::move(result);
  }
  return best;
}

}  // namespace specrage

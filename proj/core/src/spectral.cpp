#include "specrage/spectral.hpp"

#include "specrage/error.hpp"

#include <cmath>

namespace specrage {

namespace {

void require_symmetric(const Matrix& a, double tol, const char* who) {
  if (a.rows() != a.cols()) throw InputError(std::string(who) + ": matrix is not square");
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > tol) throw InputError(std::string(who) + ": matrix is not symmetric (max asymmetry " + std::to_string(asym) + ")");
}

}  // namespace

Matrix laplacian(const Matrix& w) {
  require_symmetric(w, 1e-10, "laplacian");
  Matrix l = -w;
  l.diagonal() += w.rowwise().sum();
  return l;
}

Matrix average_laplacian(std::span<const Matrix> laplacians, std::optional<std::span<const double>> alpha) {
  if (laplacians.empty()) throw ParameterError("average_laplacian: no matrices");
  const auto count = laplacians.size();
  if (alpha && alpha->size() != count) throw ParameterError("average_laplacian: weight count mismatch");
  Matrix sum = Matrix::Zero(laplacians.front().rows(), laplacians.front().cols());
  for (std::size_t v = 0; v < count; ++v) {
    if (laplacians[v].rows() != sum.rows() || laplacians[v].cols() != sum.cols())
      throw ParameterError("average_laplacian: shape mismatch");
    const double weight = alpha ? (*alpha)[v] : 1.0 / static_cast<double>(count);
    sum += weight * laplacians[v];
  }
  return sum;
}

EigenPairs smallest_eigvecs(const Matrix& l, Index k) {
  require_symmetric(l, 1e-8 * std::max(1.0, l.cwiseAbs().maxCoeff()), "smallest_eigvecs");
  if (k < 1 || k > l.rows()) throw ParameterError("smallest_eigvecs: need 1 <= k <= n");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(l);
  if (solver.info() != Eigen::Success) throw InputError("smallest_eigvecs: eigensolver failed");
  return {solver.eigenvectors().leftCols(k), solver.eigenvalues().head(k)};
}

Matrix orthonormal_basis(const Matrix& u) {
  const Index k = u.cols();
  if (k < 1 || u.rows() < k) throw InputError("orthonormal_basis: need n >= k >= 1");
  Eigen::ColPivHouseholderQR<Matrix> qr(u);
  const Vector diag = qr.matrixR().diagonal().cwiseAbs();
  if (!(diag.minCoeff() > 1e-10 * diag.maxCoeff())) throw InputError("orthonormal_basis: rank deficient input");
  return qr.householderQ() * Matrix::Identity(u.rows(), k);
}

double grassmann_distance_sq(const Matrix& u1, const Matrix& u2) {
  if (u1.rows() != u2.rows() || u1.cols() != u2.cols())
    throw ParameterError("grassmann_distance_sq: subspaces must have the same shape");
  const Matrix q1 = orthonormal_basis(u1);
  const Matrix q2 = orthonormal_basis(u2);
  const double k = static_cast<double>(u1.cols());
  const double d = k - (q1.transpose() * q2).squaredNorm();
  return std::clamp(d, 0.0, k);
}

double offdiag_ratio(const Matrix& y, const Matrix& l) {
  if (l.rows() != y.rows() || l.cols() != y.rows()) throw ParameterError("offdiag_ratio: shape mismatch");
  const Matrix m = y.transpose() * l * y;
  const double total = m.norm();
  if (total == 0.0) return 0.0;
  Matrix off = m;
  off.diagonal().setZero();
  return off.norm() / total;
}

LaplacianSet make_commuting_laplacian_like(Index n, Index num_views, std::uint64_t seed) {
  if (n < 3) throw ParameterError("make_commuting_laplacian_like: n must be >= 3");
  if (num_views < 1) throw ParameterError("make_commuting_laplacian_like: need at least one view");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  // Random Gaussian matrix whose first column is the constant vector; QR keeps
  // that direction as the first basis vector.
  Matrix g(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) g(i, j) = normal(rng);
  g.col(0).setOnes();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix u = qr.householderQ() * Matrix::Identity(n, n);
  if (u.col(0).sum() < 0.0) u.col(0) *= -1.0;
  u.col(0).setConstant(1.0 / std::sqrt(static_cast<double>(n)));

  LaplacianSet set;
  set.eigenvectors = u;
  std::uniform_real_distribution<double> eig(0.5, 5.0);
  for (Index v = 0; v < num_views; ++v) {
    Vector lambda(n);
    lambda(0) = 0.0;
    for (Index i = 1; i < n; ++i) lambda(i) = eig(rng);
    Matrix l = u * lambda.asDiagonal() * u.transpose();
    l = 0.5 * (l + l.transpose());
    set.laplacians.push_back(std::move(l));
    set.eigenvalues.push_back(std::move(lambda));
  }
  return set;
}

}  // namespace specrage

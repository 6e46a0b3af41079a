#pragma once

#include "specrage/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace specrage {

// Unnormalised graph Laplacian L = D - W. Throws InputError when W is not
// symmetric to 1e-10.
Matrix laplacian(const Matrix& w);

// sum_v alpha_v L_v; without alpha every view gets weight 1/V.
Matrix average_laplacian(std::span<const Matrix> laplacians, std::optional<std::span<const double>> alpha = {});

struct EigenPairs {
  Matrix vectors;  // n x k, orthonormal columns
  Vector values;   // ascending
};

// k smallest eigenpairs of a symmetric matrix (dense solver).
EigenPairs smallest_eigvecs(const Matrix& l, Index k);

// Orthonormal basis of the column space via Householder QR. Throws InputError
// when the columns are numerically rank deficient.
Matrix orthonormal_basis(const Matrix& u);

// k - |U1^T U2|_F^2 after orthonormalising both inputs; the sum of squared
// sines of the principal angles.
double grassmann_distance_sq(const Matrix& u1, const Matrix& u2);

// |offdiag(Y^T L Y)|_F / |Y^T L Y|_F, 0 when Y^T L Y vanishes.
double offdiag_ratio(const Matrix& y, const Matrix& l);

struct LaplacianSet {
  std::vector<Matrix> laplacians;
  Matrix eigenvectors;               // shared orthonormal basis, first column 1/sqrt(n)
  std::vector<Vector> eigenvalues;   // per member, eigenvalues[v](0) == 0
};

// Symmetric PSD matrices with zero row sums that pairwise commute because
// they share one planted eigenbasis.
LaplacianSet make_commuting_laplacian_like(Index n, Index num_views, std::uint64_t seed);

}  // namespace specrage

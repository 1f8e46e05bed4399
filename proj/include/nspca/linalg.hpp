#pragma once

#include <Eigen/Core>

#include "nspca/errors.hpp"

namespace nspca::linalg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Thin singular value decomposition, M = U * diag(D) * V^T.
// D is nonincreasing and nonnegative; U and V have orthonormal columns.
// Columns are sign-normalized so the largest-magnitude entry of each left
// singular vector is positive, which makes golden-file tests reproducible.
struct Svd {
  Matrix U;
  Vector D;
  Matrix V;
};

bool all_finite(const Matrix& m);

// Numerical rank threshold: a column space counts as deficient when
// s_min <= 1e-10 * s_max * max(rows, cols).
double rank_tolerance(double s_max, Index rows, Index cols);

Svd svd(const Matrix& m);

Vector singular_values(const Matrix& m);

double spectral_norm(const Matrix& m);

// Spectral norm of a symmetric matrix through the eigendecomposition; a
// second route used to cross-check the SVD-based norm.
double sym_spectral_norm(const Matrix& m);

// Orthonormal basis of span(m) for rows >= cols, full column rank.
// Throws RankDeficientError when the smallest singular value falls below the
// rank tolerance; callers that can recover (e.g. a collapsed power iterate)
// handle it explicitly.
Matrix orthonormal_basis(const Matrix& m);

// Projection distance between the column spans of two p-by-k matrices:
// the spectral norm of b(M)^T applied to the orthogonal complement of
// span(N). Equals the sine of the largest principal angle, in [0, 1].
double projection_distance(const Matrix& m, const Matrix& n);

// Same quantity via ||P_M - P_N||_2 with explicit orthogonal projectors.
// Kept as an independent evaluation path for cross-validation.
double projection_distance_via_projectors(const Matrix& m, const Matrix& n);

// s_k(m) - s_{k+1}(m) with 1-indexed k.
double spectral_gap(const Matrix& m, int k);

// Top-k eigenvectors of a symmetric PSD matrix, ordered by decreasing
// eigenvalue. Deliberately uses the self-adjoint eigensolver rather than
// svd() so the two routes can validate each other.
Matrix top_eigenvectors_sym(const Matrix& m, int k);

}  // namespace nspca::linalg

#include "nspca/linalg.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace nspca::linalg {

namespace {

constexpr double kRankTolFactor = 1e-10;

void normalize_signs(Matrix& u, Matrix* v) {
  for (Index j = 0; j < u.cols(); ++j) {
    Index imax = 0;
    u.col(j).cwiseAbs().maxCoeff(&imax);
    if (u(imax, j) < 0.0) {
      u.col(j) = -u.col(j);
      if (v != nullptr && j < v->cols()) v->col(j) = -v->col(j);
    }
  }
}

}  // namespace

bool all_finite(const Matrix& m) { return m.allFinite(); }

double rank_tolerance(double s_max, Index rows, Index cols) {
  return kRankTolFactor * s_max * static_cast<double>(std::max(rows, cols));
}

// Jacobi throughout: every decomposition in this project is small (tens of
// rows), and the bidiagonal divide-and-conquer kernel in Eigen 3.4 mis-handles
// deflation on clustered spectra (wrong values on rank-deficient input with
// repeated singular values), which spiked covariances hit constantly.
Svd svd(const Matrix& m) {
  if (!all_finite(m)) throw InvalidParamsError("svd: input has non-finite entries");
  Eigen::JacobiSVD<Matrix> dec(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (dec.info() != Eigen::Success)
    throw ConvergenceFailureError("svd: Jacobi kernel did not converge");
  Svd out;
  out.U = dec.matrixU();
  out.D = dec.singularValues();
  out.V = dec.matrixV();
  normalize_signs(out.U, &out.V);
  return out;
}

Vector singular_values(const Matrix& m) {
  if (!all_finite(m)) throw InvalidParamsError("singular_values: non-finite input");
  return Eigen::JacobiSVD<Matrix>(m).singularValues();
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return singular_values(m)(0);
}

double sym_spectral_norm(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw ConvergenceFailureError("sym_spectral_norm: eigensolver failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix orthonormal_basis(const Matrix& m) {
  if (m.rows() < m.cols())
    throw ShapeMismatchError("orthonormal_basis: need rows >= cols");
  if (m.cols() == 0) throw ShapeMismatchError("orthonormal_basis: empty input");
  Svd dec = svd(m);
  const double tol = rank_tolerance(dec.D(0), m.rows(), m.cols());
  if (dec.D(dec.D.size() - 1) <= tol)
    throw RankDeficientError("orthonormal_basis: column space is rank deficient");
  return dec.U;
}

double projection_distance(const Matrix& m, const Matrix& n) {
  if (m.rows() != n.rows() || m.cols() != n.cols())
    throw ShapeMismatchError("projection_distance: shapes differ");
  const Matrix qm = orthonormal_basis(m);
  const Matrix qn = orthonormal_basis(n);
  // b(M)^T (I - Q_N Q_N^T) without forming the p-by-p complement.
  const Matrix g = qm.transpose() * qn;
  const Matrix r = qm.transpose() - g * qn.transpose();
  return std::clamp(spectral_norm(r), 0.0, 1.0);
}

double projection_distance_via_projectors(const Matrix& m, const Matrix& n) {
  if (m.rows() != n.rows() || m.cols() != n.cols())
    throw ShapeMismatchError("projection_distance: shapes differ");
  const Matrix qm = orthonormal_basis(m);
  const Matrix qn = orthonormal_basis(n);
  const Matrix diff = qm * qm.transpose() - qn * qn.transpose();
  return std::clamp(sym_spectral_norm(diff), 0.0, 1.0);
}

double spectral_gap(const Matrix& m, int k) {
  const Vector s = singular_values(m);
  if (k < 1 || k >= s.size())
    throw IndexOutOfRangeError("spectral_gap: k out of range");
  return s(k - 1) - s(k);
}

Matrix top_eigenvectors_sym(const Matrix& m, int k) {
  if (m.rows() != m.cols()) throw ShapeMismatchError("top_eigenvectors_sym: not square");
  if (k < 1 || k > m.rows()) throw IndexOutOfRangeError("top_eigenvectors_sym: bad k");
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success)
    throw ConvergenceFailureError("top_eigenvectors_sym: eigensolver failed");
  // Eigen returns eigenvalues in increasing order.
  Matrix u(m.rows(), k);
  for (int j = 0; j < k; ++j) u.col(j) = es.eigenvectors().col(m.rows() - 1 - j);
  normalize_signs(u, nullptr);
  return u;
}

}  // namespace nspca::linalg

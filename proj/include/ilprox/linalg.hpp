// Dense float64 linear algebra used by every other ilprox module.
//
// Thin layer over Eigen: the types are Eigen matrices (row-major) and the
// free functions add the dimension checks and the conventions the rest of
// the library relies on (SVD cutoff for pseudo-inverses, errors on zero
// vectors for cosine similarity).
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ilprox {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Raised for shape mismatches and singular systems.
class LinalgError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Relative singular-value cutoff used by pinv().
inline constexpr double kPinvRelativeCutoff = 1e-12;

inline Vector matvec(const Matrix& w, const Vector& v) {
  if (w.cols() != v.size()) {
    throw LinalgError("matvec: matrix has " + std::to_string(w.cols()) +
                      " columns but vector has " + std::to_string(v.size()) + " entries");
  }
  return w * v;
}

/// Moore-Penrose pseudo-inverse via SVD.
///
/// Singular values below kPinvRelativeCutoff * sigma_max are treated as zero,
/// so rank-deficient inputs are handled without error. For a tall or square
/// matrix with independent columns the result is the left inverse
/// (pinv(M) * M = I); for a wide matrix with independent rows it is the right
/// inverse (M * pinv(M) = I).
inline Matrix pinv(const Matrix& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? kPinvRelativeCutoff * sv(0) : 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Left pseudo-inverse of a tall or square matrix.
inline Matrix pinv_left(const Matrix& m) {
  if (m.rows() < m.cols()) {
    throw LinalgError("pinv_left: expected rows >= cols, got " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()));
  }
  return pinv(m);
}

/// u = (W^T W + lambda I)^{-1} W^T v.
///
/// With lambda = 0 the Gram matrix must be non-singular (W full column rank).
inline Vector ridge_solve(const Matrix& w, double lambda, const Vector& v) {
  if (w.rows() != v.size()) {
    throw LinalgError("ridge_solve: W has " + std::to_string(w.rows()) + " rows but v has " +
                      std::to_string(v.size()) + " entries");
  }
  if (lambda < 0.0) throw LinalgError("ridge_solve: lambda must be >= 0");
  Eigen::MatrixXd gram = w.transpose() * w;
  gram.diagonal().array() += lambda;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw LinalgError("ridge_solve: Gram matrix is not positive definite");
  }
  // LDLT succeeds on semidefinite input, so check the pivots explicitly.
  const Eigen::VectorXd d = ldlt.vectorD();
  const double scale = std::max(1.0, gram.diagonal().cwiseAbs().maxCoeff());
  if (d.minCoeff() <= 1e-13 * scale) {
    throw LinalgError("ridge_solve: singular system (rank-deficient W with lambda = 0)");
  }
  return ldlt.solve(Eigen::VectorXd(w.transpose() * v));
}

inline double cosine_similarity(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw LinalgError("cosine_similarity: dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw LinalgError("cosine_similarity: zero vector");
  const double c = a.dot(b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

inline double frobenius_norm(const Matrix& m) { return m.norm(); }

/// Appends a trailing 1 (bias input).
inline Vector augment(const Vector& v) {
  Vector out(v.size() + 1);
  out.head(v.size()) = v;
  out(v.size()) = 1.0;
  return out;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace ilprox

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "hjrobust/errors.hpp"

namespace hjrobust {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace linalg {

inline constexpr double kPdTolerance = 1e-10;

inline double max_abs_diag(const MatrixXd& a) {
  return a.rows() == 0 ? 0.0 : a.diagonal().cwiseAbs().maxCoeff();
}

/// Cholesky factorization of a symmetric matrix with an explicit
/// positive-definiteness check: every pivot must exceed
/// kPdTolerance * max|a_ii|.
class SpdFactor {
 public:
  SpdFactor() = default;
  explicit SpdFactor(const MatrixXd& a) { compute(a); }

  bool compute(const MatrixXd& a) {
    llt_.compute(a);
    ok_ = llt_.info() == Eigen::Success;
    if (ok_) {
      const double scale = max_abs_diag(a);
      const auto d = llt_.matrixLLT().diagonal();
      ok_ = scale > 0.0 && d.allFinite() && d.cwiseAbs2().minCoeff() > kPdTolerance * scale;
    }
    return ok_;
  }

  bool ok() const noexcept { return ok_; }

  template <typename Rhs>
  auto solve(const Rhs& b) const {
    return llt_.solve(b);
  }

  MatrixXd inverse() const {
    return llt_.solve(MatrixXd::Identity(llt_.rows(), llt_.cols()));
  }

  /// Upper-triangular U with A = U'U.
  MatrixXd upper() const { return llt_.matrixU(); }

  /// x' A^{-1} x
  double inverse_quadratic(const VectorXd& x) const {
    const VectorXd y = llt_.matrixL().solve(x);
    return y.squaredNorm();
  }

 private:
  Eigen::LLT<MatrixXd> llt_;
  bool ok_ = false;
};

inline SpdFactor spd_factor_or_throw(const MatrixXd& a, ErrorCode code, const std::string& what) {
  SpdFactor f(a);
  require(f.ok(), code, what + " is not positive definite");
  return f;
}

inline MatrixXd symmetrize(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
struct SymmetricEigen {
  VectorXd values;
  MatrixXd vectors;
};

inline SymmetricEigen sym_eigen_desc(const MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(a));
  const Index n = a.rows();
  SymmetricEigen out{VectorXd(n), MatrixXd(n, n)};
  for (Index i = 0; i < n; ++i) {
    out.values(i) = es.eigenvalues()(n - 1 - i);
    out.vectors.col(i) = es.eigenvectors().col(n - 1 - i);
  }
  return out;
}

inline VectorXd sym_eigenvalues_desc(const MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues().reverse();
}

/// Upper-triangular square root U (A = U'U) of a symmetric PSD matrix. Falls
/// back to the symmetric eigen root when A is singular, which yields the same
/// sandwich eigenvalues.
inline MatrixXd psd_root_upper(const MatrixXd& a) {
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().allFinite()) {
    return llt.matrixU();
  }
  const auto eig = sym_eigen_desc(a);
  const VectorXd root = eig.values.cwiseMax(0.0).cwiseSqrt();
  return root.asDiagonal() * eig.vectors.transpose();
}

/// Lower-triangular-like factor L with L L' = A for a PSD matrix; used to
/// draw correlated normals.
inline MatrixXd psd_sampling_factor(const MatrixXd& a, double tol = 1e-10) {
  const auto eig = sym_eigen_desc(a);
  const double scale = std::max(1.0, eig.values.cwiseAbs().maxCoeff());
  require(eig.values.minCoeff() >= -tol * scale, ErrorCode::InvalidCalibration,
          "covariance matrix is not positive semidefinite");
  return eig.vectors * eig.values.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

inline double condition_number(const MatrixXd& a) {
  Eigen::JacobiSVD<MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 0.0;
  const double smin = s(s.size() - 1);
  return smin > 0.0 ? s(0) / smin : std::numeric_limits<double>::infinity();
}

inline Index numerical_rank(const MatrixXd& a, double rel_tol = 1e-10) {
  Eigen::JacobiSVD<MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  return (s.array() > rel_tol * s(0)).count();
}

}  // namespace linalg
}  // namespace hjrobust

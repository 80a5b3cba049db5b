#pragma once

#include <vector>

#include <Eigen/Dense>

#include "hjrobust/errors.hpp"
#include "hjrobust/linalg.hpp"
#include "hjrobust/panel_io.hpp"

namespace hjrobust {

/// Returns paired with augmented factors; the input every test consumes.
struct ModelData {
  MatrixXd returns;       // T x N
  AugmentedFactors factors;  // T x (K+1)

  Index t_len() const { return returns.rows(); }
  Index n_assets() const { return returns.cols(); }
  Index k_factors() const { return factors.k_factors(); }
  const MatrixXd& G() const { return factors.values; }
};

inline ModelData make_model_data(const MatrixXd& returns, const MatrixXd& factors) {
  require(returns.rows() == factors.rows(), ErrorCode::DimensionMismatch,
          "returns and factors have different numbers of periods");
  return ModelData{returns, augment(factors)};
}

inline ModelData make_model_data(const ReturnPanel& r, const FactorPanel& g) {
  require(r.periods == g.periods, ErrorCode::DimensionMismatch,
          "return and factor panels are not aligned");
  return make_model_data(r.values, g.values);
}

/// Restrict to a subset of assets (columns of the return matrix).
inline ModelData select_assets(const ModelData& d, const std::vector<Index>& assets) {
  ModelData out{MatrixXd(d.t_len(), static_cast<Index>(assets.size())), d.factors};
  for (std::size_t j = 0; j < assets.size(); ++j) {
    require(assets[j] >= 0 && assets[j] < d.n_assets(), ErrorCode::InvalidArgument,
            "asset index " + std::to_string(assets[j]) + " out of range");
    out.returns.col(static_cast<Index>(j)) = d.returns.col(assets[j]);
  }
  return out;
}

/// Uncentered sample second moments.
struct MomentSet {
  MatrixXd q_GT;  // N x (K+1): (1/T) sum r_t G_t'
  MatrixXd Q_r;   // N x N:     (1/T) sum r_t r_t'
  MatrixXd Q_G;   // (K+1) x (K+1)
  Index t_len = 0;
  Index n_assets = 0;
  Index k_factors = 0;
};

inline MomentSet compute_moments(const MatrixXd& r, const AugmentedFactors& G) {
  require(r.rows() == G.values.rows(), ErrorCode::DimensionMismatch,
          "returns and factors have different numbers of periods");
  const double T = static_cast<double>(r.rows());
  MomentSet m;
  m.t_len = r.rows();
  m.n_assets = r.cols();
  m.k_factors = G.k_factors();
  m.q_GT = r.transpose() * G.values / T;
  m.Q_r = linalg::symmetrize(r.transpose() * r / T);
  m.Q_G = linalg::symmetrize(G.values.transpose() * G.values / T);
  return m;
}

inline MomentSet compute_moments(const ModelData& d) { return compute_moments(d.returns, d.factors); }

struct PricingErrors {
  VectorXd mean_error;  // N:     iota - q_GT theta
  MatrixXd per_period;  // T x N: row t = iota' - (G_t' theta) r_t'
};

inline PricingErrors pricing_errors(const MatrixXd& r, const AugmentedFactors& G, const VectorXd& theta) {
  require(theta.size() == G.values.cols(), ErrorCode::DimensionMismatch,
          "theta has " + std::to_string(theta.size()) + " entries, expected " +
              std::to_string(G.values.cols()));
  require(r.rows() == G.values.rows(), ErrorCode::DimensionMismatch, "period mismatch");
  const VectorXd m = G.values * theta;  // SDF realisations
  PricingErrors e;
  e.per_period = (-(r.array().colwise() * m.array())).matrix();
  e.per_period.array() += 1.0;
  e.mean_error = e.per_period.colwise().mean().transpose();
  return e;
}

inline PricingErrors pricing_errors(const ModelData& d, const VectorXd& theta) {
  return pricing_errors(d.returns, d.factors, theta);
}

/// Mean pricing error from moments alone.
inline VectorXd mean_pricing_error(const MomentSet& m, const VectorXd& theta) {
  require(theta.size() == m.q_GT.cols(), ErrorCode::DimensionMismatch, "theta dimension mismatch");
  return VectorXd::Ones(m.n_assets) - m.q_GT * theta;
}

/// S_T = (1/T) sum e_t e_t' (no centering, no dof correction).
inline MatrixXd error_covariance(const MatrixXd& per_period) {
  require(per_period.rows() >= 1, ErrorCode::EmptyPanel, "no periods");
  return linalg::symmetrize(per_period.transpose() * per_period / static_cast<double>(per_period.rows()));
}

/// Precomputed pieces so that e_T(theta) and S_T(theta) cost O(N^2 K^2) per
/// evaluation instead of O(T N^2):
///   S_T(theta) = 11' - 1 m' - m 1' + sum_{a,b} theta_a theta_b M_ab,
/// with m = q_GT theta and M_ab = (1/T) sum_t G_ta G_tb r_t r_t'.
class ErrorMomentCube {
 public:
  ErrorMomentCube() = default;

  explicit ErrorMomentCube(const ModelData& d) : moments_(compute_moments(d)) {
    const Index p = d.G().cols();
    const Index n = d.n_assets();
    const double T = static_cast<double>(d.t_len());
    cube_.reserve(static_cast<std::size_t>(p * (p + 1) / 2));
    MatrixXd weighted(d.t_len(), n);
    for (Index a = 0; a < p; ++a) {
      for (Index b = a; b < p; ++b) {
        const VectorXd w = d.G().col(a).cwiseProduct(d.G().col(b));
        weighted = d.returns.array().colwise() * w.array();
        cube_.push_back(linalg::symmetrize(d.returns.transpose() * weighted / T));
      }
    }
    q_inv_factor_ = linalg::SpdFactor(moments_.Q_r);
  }

  const MomentSet& moments() const { return moments_; }
  Index n_assets() const { return moments_.n_assets; }
  Index dim() const { return moments_.q_GT.cols(); }

  VectorXd mean_error(const VectorXd& theta) const { return mean_pricing_error(moments_, theta); }

  MatrixXd covariance(const VectorXd& theta) const {
    const Index p = dim();
    const Index n = n_assets();
    const VectorXd m = moments_.q_GT * theta;
    MatrixXd s = MatrixXd::Ones(n, n);
    s.colwise() -= m;
    s.rowwise() -= m.transpose();
    std::size_t k = 0;
    for (Index a = 0; a < p; ++a) {
      for (Index b = a; b < p; ++b, ++k) {
        const double c = (a == b ? 1.0 : 2.0) * theta(a) * theta(b);
        if (c != 0.0) s.noalias() += c * cube_[k];
      }
    }
    return s;
  }

  /// HJ objective e_T(theta)' Q_r^{-1} e_T(theta).
  double hj_objective(const VectorXd& theta) const {
    require(q_inv_factor_.ok(), ErrorCode::NonPositiveDefinite, "Q_r is not positive definite");
    return q_inv_factor_.inverse_quadratic(mean_error(theta));
  }

  const linalg::SpdFactor& q_r_factor() const { return q_inv_factor_; }

 private:
  MomentSet moments_;
  std::vector<MatrixXd> cube_;
  linalg::SpdFactor q_inv_factor_;
};

}  // namespace hjrobust

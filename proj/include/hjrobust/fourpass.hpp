#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include "hjrobust/errors.hpp"
#include "hjrobust/linalg.hpp"
#include "hjrobust/moments.hpp"

namespace hjrobust {

/// Time-series OLS residuals of r_t on G_t, i.e. M_G r.
inline MatrixXd ols_residuals(const MatrixXd& r, const AugmentedFactors& G) {
  require(r.rows() == G.values.rows(), ErrorCode::DimensionMismatch, "period mismatch");
  require(r.rows() > G.values.cols(), ErrorCode::DimensionMismatch, "OLS residuals need T > K+1");
  const Eigen::ColPivHouseholderQR<MatrixXd> qr(G.values);
  require(qr.rank() == G.values.cols(), ErrorCode::RankDeficient, "factor matrix is rank deficient");
  return r - G.values * qr.solve(r);
}

/// phi(N, T) = scale * (N^{-exp_n} + T^{-exp_t}).
struct Penalty {
  double scale = 1.0;
  double exp_n = 0.25;
  double exp_t = 0.25;

  double operator()(double n, double t) const { return scale * (std::pow(n, -exp_n) + std::pow(t, -exp_t)); }
  bool is_default() const { return scale == 1.0 && exp_n == 0.25 && exp_t == 0.25; }
};

/// Parses "default" or "scale:exp_n:exp_t".
inline Penalty parse_penalty(const std::string& text) {
  if (text.empty() || text == "default") return {};
  Penalty p;
  char c1 = 0, c2 = 0;
  std::istringstream is(text);
  is >> p.scale >> c1 >> p.exp_n >> c2 >> p.exp_t;
  require(is && c1 == ':' && c2 == ':' && is.peek() == std::char_traits<char>::eof(), ErrorCode::InvalidArgument,
          "penalty must be 'default' or 'scale:exp_n:exp_t', got '" + text + "'");
  require(p.scale > 0.0 && p.exp_n > 0.0 && p.exp_t > 0.0, ErrorCode::InvalidArgument,
          "penalty scale and exponents must be positive");
  return p;
}

struct FactorCountEstimate {
  Index k_hat = 0;
  std::vector<double> objective_curve;  // F(j), j = 1..k_max+1
  double penalty_value = 0.0;
};

/// Decomposition of u u' (T x T), eigenvalues descending.
inline linalg::SymmetricEigen gram_eigen(const MatrixXd& u_hat) {
  return linalg::sym_eigen_desc(u_hat * u_hat.transpose());
}

inline FactorCountEstimate estimate_factor_count(const VectorXd& gram_values, Index n_assets, Index t_len,
                                                 int k_max, const Penalty& phi = {}) {
  require(k_max >= 1, ErrorCode::InvalidArgument, "k_max must be at least 1");
  FactorCountEstimate out;
  const double N = static_cast<double>(n_assets);
  const double T = static_cast<double>(t_len);
  out.penalty_value = phi(N, T);
  require(out.penalty_value > 0.0, ErrorCode::InvalidArgument, "penalty must be positive");
  Index best = 0;
  for (int j = 1; j <= k_max + 1; ++j) {
    const double lam = j <= gram_values.size() ? std::max(0.0, gram_values(j - 1)) : 0.0;
    out.objective_curve.push_back(lam / (N * T) + j * out.penalty_value);
    if (out.objective_curve.back() < out.objective_curve[static_cast<std::size_t>(best)]) best = j - 1;
  }
  out.k_hat = best;  // argmin j minus one
  return out;
}

inline FactorCountEstimate estimate_factor_count(const MatrixXd& u_hat, int k_max, const Penalty& phi = {}) {
  return estimate_factor_count(gram_eigen(u_hat).values, u_hat.cols(), u_hat.rows(), k_max, phi);
}

struct CommonComponents {
  MatrixXd x_hat;  // T x k, x'x/T = I
  MatrixXd b_hat;  // k x N
  MatrixXd cc;     // T x N
};

inline CommonComponents extract_common(const MatrixXd& u_hat, const linalg::SymmetricEigen& gram, Index k) {
  const Index T = u_hat.rows();
  require(k >= 0 && k <= std::min(T, u_hat.cols()), ErrorCode::InvalidArgument,
          "number of common factors out of range");
  CommonComponents c;
  c.x_hat = std::sqrt(static_cast<double>(T)) * gram.vectors.leftCols(k);
  for (Index j = 0; j < k; ++j) {
    Index imax = 0;
    c.x_hat.col(j).cwiseAbs().maxCoeff(&imax);
    if (c.x_hat(imax, j) < 0.0) c.x_hat.col(j) *= -1.0;
  }
  c.b_hat = c.x_hat.transpose() * u_hat / static_cast<double>(T);
  c.cc = k == 0 ? MatrixXd::Zero(T, u_hat.cols()) : MatrixXd(c.x_hat * c.b_hat);
  return c;
}

inline CommonComponents extract_common(const MatrixXd& u_hat, Index k) {
  return extract_common(u_hat, gram_eigen(u_hat), k);
}

struct CleanedMoments {
  MatrixXd q1;  // N x (K+1)
  MatrixXd q2;
  Index t1 = 0;
  Index t2 = 0;
};

/// Subsample moments q^(i) - (1/T_i) sum cc_t G_t', split at floor(T/2).
inline CleanedMoments split_and_clean(const MatrixXd& r, const AugmentedFactors& G, const MatrixXd& cc) {
  const Index T = r.rows();
  require(T >= 4, ErrorCode::DimensionMismatch, "split sample needs T >= 4");
  require(cc.rows() == T && cc.cols() == r.cols() && G.values.rows() == T, ErrorCode::DimensionMismatch,
          "common component must match the return panel");
  CleanedMoments m;
  m.t1 = T / 2;
  m.t2 = T - m.t1;
  const auto& g = G.values;
  const MatrixXd d = r - cc;
  m.q1 = d.topRows(m.t1).transpose() * g.topRows(m.t1) / static_cast<double>(m.t1);
  m.q2 = d.bottomRows(m.t2).transpose() * g.bottomRows(m.t2) / static_cast<double>(m.t2);
  return m;
}

inline constexpr double kIvConditionLimit = 1e12;

/// Pieces of one split-sample IV fit: regressor x instrumented by z.
struct IvFit {
  VectorXd theta;
  MatrixXd a;          // x' P_z x
  MatrixXd projected;  // x' P_z  ((K+1) x N)
  VectorXd residual;   // iota - x theta
  double condition = 0.0;
};

inline IvFit iv_fit(const MatrixXd& x, const MatrixXd& z) {
  require(x.rows() == z.rows() && x.cols() == z.cols(), ErrorCode::DimensionMismatch,
          "IV regressor and instrument must have equal shape");
  const Eigen::ColPivHouseholderQR<MatrixXd> zqr(z);
  std::ostringstream msg;
  if (zqr.rank() < z.cols()) {
    msg << "instrument matrix is rank deficient (rank " << zqr.rank() << " < " << z.cols() << ")";
    throw Error(ErrorCode::WeakInstrumentSingularity, msg.str());
  }
  const MatrixXd qz = zqr.householderQ() * MatrixXd::Identity(z.rows(), z.cols());
  IvFit f;
  f.projected = (x.transpose() * qz) * qz.transpose();
  f.a = linalg::symmetrize(f.projected * x);
  f.condition = linalg::condition_number(f.a);
  if (!(f.condition <= kIvConditionLimit)) {
    msg << "projected cross-product is near singular (condition number " << f.condition << ")";
    throw Error(ErrorCode::WeakInstrumentSingularity, msg.str());
  }
  const VectorXd iota = VectorXd::Ones(x.rows());
  f.theta = f.a.ldlt().solve(f.projected * iota);
  f.residual = iota - x * f.theta;
  return f;
}

struct FourPassEstimate {
  VectorXd theta_tilde;
  VectorXd theta_sub[2];
  Index k_hat = 0;
  bool k_overridden = false;
  std::optional<FactorCountEstimate> factor_count;
  CleanedMoments cleaned;
  double iv_condition[2] = {0.0, 0.0};
  std::optional<MatrixXd> sigma_theta;
  bool drift_term_included = false;
};

/// Averaged split-sample IV estimates; q1 instruments q2 and vice versa.
inline FourPassEstimate iv_theta(const CleanedMoments& m, IvFit* fits = nullptr) {
  const IvFit f1 = iv_fit(m.q1, m.q2);
  const IvFit f2 = iv_fit(m.q2, m.q1);
  FourPassEstimate e;
  e.theta_sub[0] = f1.theta;
  e.theta_sub[1] = f2.theta;
  e.theta_tilde = (f1.theta + f2.theta) / 2.0;
  e.iv_condition[0] = f1.condition;
  e.iv_condition[1] = f2.condition;
  e.cleaned = m;
  if (fits) {
    fits[0] = f1;
    fits[1] = f2;
  }
  return e;
}

/// IV sandwich A^{-1} (1/N sum_i h_i h_i') A^{-1} with A = x'P_z x / N and
/// h_i = (x'P_z)_i eps_i.
inline MatrixXd sigma_iv(const IvFit& f) {
  const double N = static_cast<double>(f.residual.size());
  const MatrixXd h = f.projected * f.residual.asDiagonal();
  const MatrixXd a_inv = (f.a / N).inverse();
  return linalg::symmetrize(a_inv * (h * h.transpose() / N) * a_inv);
}

/// Sigma = (1/2N) sum_i Sigma_IV^(i) + (1/T) Sigma_drift (when supplied).
inline MatrixXd sigma_theta(const IvFit fits[2], Index t_len, const std::optional<MatrixXd>& drift = std::nullopt) {
  const double N = static_cast<double>(fits[0].residual.size());
  MatrixXd s = (sigma_iv(fits[0]) + sigma_iv(fits[1])) / (2.0 * N);
  if (drift) {
    require(drift->rows() == s.rows() && drift->cols() == s.cols(), ErrorCode::DimensionMismatch,
            "drift covariance has the wrong shape");
    s += *drift / static_cast<double>(t_len);
  }
  return s;
}

struct FourPassConfig {
  int k_max = 10;
  Penalty phi;
  std::optional<Index> k_override;
  bool compute_sigma = true;
  std::optional<MatrixXd> drift_covariance;
};

inline FourPassEstimate four_pass(const ModelData& d, const FourPassConfig& cfg = {}) {
  require(d.n_assets() >= d.G().cols(), ErrorCode::DimensionMismatch, "four-pass needs N >= K+1");
  const MatrixXd u = ols_residuals(d.returns, d.factors);
  std::optional<FactorCountEstimate> fc;
  Index k = 0;
  MatrixXd cc;
  if (cfg.k_override && *cfg.k_override == 0) {
    cc = MatrixXd::Zero(u.rows(), u.cols());  // nothing to extract, skip the T x T eigenproblem
  } else {
    const auto gram = gram_eigen(u);
    if (cfg.k_override) {
      k = *cfg.k_override;
    } else {
      fc = estimate_factor_count(gram.values, d.n_assets(), d.t_len(), cfg.k_max, cfg.phi);
      k = fc->k_hat;
    }
    cc = extract_common(u, gram, k).cc;
  }
  const CleanedMoments cleaned = split_and_clean(d.returns, d.factors, cc);
  IvFit fits[2];
  FourPassEstimate e = iv_theta(cleaned, fits);
  e.k_hat = k;
  e.k_overridden = cfg.k_override.has_value();
  e.factor_count = fc;
  if (cfg.compute_sigma) {
    e.sigma_theta = sigma_theta(fits, d.t_len(), cfg.drift_covariance);
    e.drift_term_included = cfg.drift_covariance.has_value();
  }
  return e;
}

struct RiskPremia {
  VectorXd lambda_tilde;
  MatrixXd v_g;
};

/// lambda = -V_g theta_{2..K+1} / theta_1.
inline RiskPremia risk_premia(const VectorXd& theta, const MatrixXd& v_g) {
  require(theta.size() == v_g.rows() + 1 && v_g.rows() == v_g.cols(), ErrorCode::DimensionMismatch,
          "V_g must be K x K for a (K+1)-vector theta");
  require(std::fabs(theta(0)) > 1e-12, ErrorCode::ZeroConstantCoefficient,
          "constant SDF coefficient is zero; risk premia undefined");
  return {-v_g * theta.tail(theta.size() - 1) / theta(0), v_g};
}

/// Sample second moment of the demeaned factors.
inline MatrixXd factor_second_moment(const AugmentedFactors& G) {
  const MatrixXd g = G.values.rightCols(G.k_factors());
  return linalg::symmetrize(g.transpose() * g / static_cast<double>(g.rows()));
}

}  // namespace hjrobust

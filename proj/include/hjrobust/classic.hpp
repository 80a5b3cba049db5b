#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "hjrobust/detail/nelder_mead.hpp"
#include "hjrobust/errors.hpp"
#include "hjrobust/grid.hpp"
#include "hjrobust/linalg.hpp"
#include "hjrobust/moments.hpp"
#include "hjrobust/wchi2.hpp"

namespace hjrobust {

inline void check_alpha(double alpha, const char* name = "alpha") {
  require(alpha > 0.0 && alpha <= 1.0, ErrorCode::InvalidArgument,
          std::string(name) + " must lie in (0, 1]");
}

/// theta_hat = (q' Q_r^{-1} q)^{-1} q' Q_r^{-1} iota.
inline VectorXd theta_hat(const MomentSet& m) {
  require(m.n_assets >= m.q_GT.cols(), ErrorCode::DimensionMismatch, "need N >= K+1 assets");
  const auto qf = linalg::spd_factor_or_throw(m.Q_r, ErrorCode::NonPositiveDefinite, "Q_r");
  const MatrixXd wq = qf.solve(m.q_GT);
  const linalg::SpdFactor a(m.q_GT.transpose() * wq);
  require(a.ok(), ErrorCode::RankDeficient, "q_GT is not of full column rank");
  return a.solve(wq.transpose() * VectorXd::Ones(m.n_assets));
}

/// iota' (Q^{-1} - Q^{-1} q (q'Q^{-1}q)^{-1} q'Q^{-1}) iota, the minimised HJ objective.
inline double hj_closed_form(const MomentSet& m) {
  const auto qf = linalg::spd_factor_or_throw(m.Q_r, ErrorCode::NonPositiveDefinite, "Q_r");
  const VectorXd iota = VectorXd::Ones(m.n_assets);
  const VectorXd wi = qf.solve(iota);
  const MatrixXd wq = qf.solve(m.q_GT);
  const linalg::SpdFactor a(m.q_GT.transpose() * wq);
  require(a.ok(), ErrorCode::RankDeficient, "q_GT is not of full column rank");
  const VectorXd qwi = m.q_GT.transpose() * wi;
  return iota.dot(wi) - qwi.dot(a.solve(qwi));
}

struct HjResult {
  VectorXd theta_hat;
  double delta_sq = 0.0;
  double scaled_stat = 0.0;
  WeightVector weights;
  double p_value = 1.0;
  double critical_value = 0.0;
  double alpha = 0.05;
  bool reject = false;
  bool mc_fallback = false;
  std::vector<Warning> warnings;
};

/// Classical HJ distance test with weighted chi-square critical values. With
/// decision_only the quantile is skipped: reject iff p-value < alpha.
inline HjResult hj_test(const ModelData& d, double alpha, bool decision_only = false) {
  check_alpha(alpha);
  const Index N = d.n_assets();
  const Index p = d.G().cols();
  require(N > p, ErrorCode::DimensionMismatch, "HJ test needs N > K+1");
  require(d.t_len() > N, ErrorCode::DimensionMismatch, "HJ test needs T > N");

  const MomentSet m = compute_moments(d);
  HjResult r;
  r.alpha = alpha;
  r.theta_hat = theta_hat(m);
  const auto qf = linalg::spd_factor_or_throw(m.Q_r, ErrorCode::NonPositiveDefinite, "Q_r");
  const PricingErrors e = pricing_errors(d, r.theta_hat);
  r.delta_sq = std::max(0.0, qf.inverse_quadratic(e.mean_error));
  r.scaled_stat = static_cast<double>(d.t_len()) * r.delta_sq;

  const MatrixXd S = error_covariance(e.per_period);
  const auto expected = static_cast<std::size_t>(N - p);
  r.weights = wchi2::sandwich_weights(S, m.Q_r, m.q_GT, {false, expected});
  if (r.weights.size() != expected) r.warnings.push_back(Warning::WeightCountMismatch);

  if (r.weights.size() == 0) {
    r.p_value = r.scaled_stat > 0.0 ? 0.0 : 1.0;
    r.critical_value = 0.0;
    r.reject = alpha >= 1.0 || r.scaled_stat > 0.0;
    return r;
  }
  const auto c = wchi2::cdf_or_mc(r.weights, r.scaled_stat);
  r.p_value = std::clamp(1.0 - c.value, 0.0, 1.0);
  r.mc_fallback = c.mc_fallback;
  if (alpha >= 1.0) {
    r.critical_value = 0.0;
    r.reject = true;
  } else if (decision_only) {
    r.critical_value = std::numeric_limits<double>::quiet_NaN();
    r.reject = c.value > 1.0 - alpha;
  } else {
    const auto q = wchi2::quantile_or_mc(r.weights, 1.0 - alpha);
    r.critical_value = q.value;
    r.mc_fallback = r.mc_fallback || q.mc_fallback;
    r.reject = r.scaled_stat > r.critical_value;
  }
  if (r.mc_fallback) r.warnings.push_back(Warning::MonteCarloFallback);
  return r;
}

struct ArValue {
  double statistic = 0.0;
  Index df = 0;
};

/// AR(theta) = T e' S(theta)^{-1} e from the precomputed moment cube. Returns
/// nullopt when S(theta) is not positive definite.
inline std::optional<ArValue> try_ar_stat(const ErrorMomentCube& cube, double t_len, const VectorXd& theta) {
  const linalg::SpdFactor sf(cube.covariance(theta));
  if (!sf.ok()) return std::nullopt;
  return ArValue{std::max(0.0, t_len * sf.inverse_quadratic(cube.mean_error(theta))), cube.n_assets()};
}

inline ArValue ar_stat(const ModelData& d, const VectorXd& theta) {
  const PricingErrors e = pricing_errors(d, theta);
  const linalg::SpdFactor sf(error_covariance(e.per_period));
  require(sf.ok(), ErrorCode::SingularErrorCovariance, "S_T(theta) is not positive definite");
  return {std::max(0.0, static_cast<double>(d.t_len()) * sf.inverse_quadratic(e.mean_error)), d.n_assets()};
}

/// Delta-method GMM sandwich standard errors of theta_hat with W = Q_r^{-1}.
inline VectorXd gmm_standard_errors(const ModelData& d, const VectorXd& theta) {
  const MomentSet m = compute_moments(d);
  const auto qf = linalg::spd_factor_or_throw(m.Q_r, ErrorCode::NonPositiveDefinite, "Q_r");
  const MatrixXd wq = qf.solve(m.q_GT);
  const MatrixXd a_inv = linalg::spd_factor_or_throw(m.q_GT.transpose() * wq, ErrorCode::RankDeficient,
                                                     "q' Q_r^{-1} q")
                             .inverse();
  const MatrixXd S = error_covariance(pricing_errors(d, theta).per_period);
  const MatrixXd V = a_inv * (wq.transpose() * S * wq) * a_inv / static_cast<double>(d.t_len());
  return V.diagonal().cwiseMax(0.0).cwiseSqrt();
}

/// theta_hat +/- multiplier * SE per coordinate.
inline ThetaBox auto_box(const ModelData& d, double multiplier = 10.0) {
  const VectorXd th = theta_hat(compute_moments(d));
  VectorXd se = gmm_standard_errors(d, th);
  for (Index i = 0; i < se.size(); ++i) {
    if (!std::isfinite(se(i)) || se(i) <= 0.0) se(i) = 0.1 * (std::fabs(th(i)) + 1.0);
  }
  return {th - multiplier * se, th + multiplier * se};
}

enum class JDof { NMinusK, NMinusKMinus1 };

struct JConfig {
  std::optional<ThetaBox> box;  // default: auto_box
  int points_per_dim = 0;       // 0: default for the dimension
  JDof dof = JDof::NMinusK;
  double se_multiplier = 10.0;
  bool refine = true;
};

struct JResult {
  double statistic = 0.0;
  VectorXd argmin;
  Index df = 0;
  double critical_value = 0.0;
  double p_value = 1.0;
  double alpha = 0.05;
  bool reject = false;
  bool boundary_contact = false;
  std::size_t singular_points = 0;
  ThetaBox box;
  std::vector<Warning> warnings;
};

/// J = inf_theta AR(theta): grid search over the box, then Nelder-Mead from the
/// best grid point. Ties on the grid go to the lowest index.
inline JResult j_test(const ModelData& d, double alpha, const JConfig& cfg = {}) {
  check_alpha(alpha);
  const Index N = d.n_assets();
  const Index p = d.G().cols();
  require(N > p - 1, ErrorCode::DimensionMismatch, "J test needs N >= K+1");
  const ErrorMomentCube cube(d);
  const double T = static_cast<double>(d.t_len());

  JResult r;
  r.alpha = alpha;
  r.box = cfg.box ? *cfg.box : auto_box(d, cfg.se_multiplier);
  const int ppd = cfg.points_per_dim > 0 ? cfg.points_per_dim : default_points_per_dim(p);
  ThetaGrid grid(r.box, ppd);
  if (!grid.within_cap()) grid = ThetaGrid(r.box, 11);

  double best = std::numeric_limits<double>::infinity();
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto ar = try_ar_stat(cube, T, grid.point(i));
    if (!ar) {
      ++r.singular_points;
      continue;
    }
    if (ar->statistic < best) {
      best = ar->statistic;
      best_i = i;
    }
  }
  VectorXd arg = grid.point(best_i);
  bool on_edge = std::isfinite(best) && grid.on_boundary(best_i);

  // theta_hat is always a candidate, so J <= AR(theta_hat).
  try {
    const VectorXd th = theta_hat(cube.moments());
    if (const auto ar = try_ar_stat(cube, T, th); ar && ar->statistic < best) {
      best = ar->statistic;
      arg = th;
      on_edge = false;
    }
  } catch (const Error&) {
  }
  require(std::isfinite(best), ErrorCode::SingularErrorCovariance, "S_T(theta) singular on the whole grid");

  if (cfg.refine) {
    const auto f = [&](const VectorXd& x) {
      const auto ar = try_ar_stat(cube, T, x);
      return ar ? ar->statistic : std::numeric_limits<double>::infinity();
    };
    const auto nm = detail::nelder_mead(f, arg, grid.spacing(), 1e-8);
    if (nm.value < best) {
      best = nm.value;
      arg = nm.x;
      on_edge = !r.box.contains(arg);
    }
  }
  r.statistic = best;
  r.argmin = arg;
  r.boundary_contact = on_edge;
  r.df = cfg.dof == JDof::NMinusK ? N - (p - 1) : N - p;
  require(r.df >= 1, ErrorCode::DimensionMismatch, "J test has no degrees of freedom");
  const double df = static_cast<double>(r.df);
  r.p_value = 1.0 - wchi2::detail::chi2_cdf(df, r.statistic);
  r.critical_value = alpha >= 1.0 ? 0.0 : wchi2::detail::chi2_quantile(df, 1.0 - alpha);
  r.reject = alpha >= 1.0 || r.statistic > r.critical_value;
  if (r.boundary_contact) r.warnings.push_back(Warning::BoundaryContact);
  if (r.singular_points > 0) r.warnings.push_back(Warning::SingularGridPoints);
  return r;
}

struct FmEstimate {
  MatrixXd beta_hat;   // N x K
  double lambda0_hat = 0.0;
  VectorXd lambda_hat;  // K
};

/// Fama-MacBeth two-pass: time-series OLS of r_t on (1, g_t), then
/// cross-sectional OLS of mean returns on (iota, beta_hat).
inline FmEstimate fm_two_pass(const ModelData& d) {
  const Index T = d.t_len();
  const Index N = d.n_assets();
  const Index p = d.G().cols();
  require(T > p, ErrorCode::DimensionMismatch, "first pass needs T > K+1");
  require(N > p, ErrorCode::DimensionMismatch, "second pass needs N > K+1");
  const Eigen::ColPivHouseholderQR<MatrixXd> first(d.G());
  require(first.rank() == p, ErrorCode::RankDeficient, "factor matrix is rank deficient");
  const MatrixXd coef = first.solve(d.returns);  // (K+1) x N

  FmEstimate fm;
  fm.beta_hat = coef.bottomRows(p - 1).transpose();
  MatrixXd X(N, p);
  X.col(0).setOnes();
  X.rightCols(p - 1) = fm.beta_hat;
  const Eigen::ColPivHouseholderQR<MatrixXd> second(X);
  require(second.rank() == p, ErrorCode::RankDeficient, "second-pass regressors (iota, beta) are collinear");
  const VectorXd rbar = d.returns.colwise().mean().transpose();
  const VectorXd gamma = second.solve(rbar);
  fm.lambda0_hat = gamma(0);
  fm.lambda_hat = gamma.tail(p - 1);
  return fm;
}

/// Characteristic root ratios: top_m eigenvalue shares of the centred sample
/// covariance of returns.
inline VectorXd crr(const MatrixXd& r, Index top_m) {
  require(r.rows() > 1, ErrorCode::EmptyPanel, "CRR needs T > 1");
  const MatrixXd c = r.rowwise() - r.colwise().mean();
  const VectorXd ev = linalg::sym_eigenvalues_desc(c.transpose() * c / static_cast<double>(r.rows() - 1))
                          .cwiseMax(0.0);
  const double total = ev.sum();
  const Index m = std::min(top_m, ev.size());
  if (total <= 0.0) return VectorXd::Zero(m);
  return ev.head(m) / total;
}

}  // namespace hjrobust

#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <vector>

#include "hjrobust/classic.hpp"
#include "hjrobust/fourpass.hpp"
#include "hjrobust/moments.hpp"
#include "hjrobust/wchi2.hpp"

namespace hjrobust {

inline constexpr double kTestingRatioWarning = 0.5;
inline constexpr Index kDefaultTestingCount = 25;

struct HjnConfig {
  std::optional<std::vector<Index>> base;     // default: all assets
  std::optional<std::vector<Index>> testing;  // default: first 25
  double alpha = 0.05;
  FourPassConfig four_pass;
};

struct HjnResult {
  double statistic = 0.0;
  double delta_sq = 0.0;
  WeightVector weights;
  double p_value = 1.0;
  double critical_value = 0.0;
  double alpha = 0.05;
  bool reject = false;
  bool mc_fallback = false;
  VectorXd theta_tilde;
  FourPassEstimate estimate;
  std::vector<Index> base;
  std::vector<Index> testing;
  std::vector<Warning> warnings;
};

inline std::vector<Index> index_range(Index first, Index count) {
  std::vector<Index> v(static_cast<std::size_t>(std::max<Index>(count, 0)));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = first + static_cast<Index>(i);
  return v;
}

/// T e' Q_R^{-1} e on testing assets at the four-pass theta from base assets.
/// All n sandwich weights are kept.
inline HjnResult hjn_evaluate(const ModelData& testing, const VectorXd& theta, double alpha,
                              bool decision_only = false) {
  check_alpha(alpha);
  HjnResult r;
  r.alpha = alpha;
  r.theta_tilde = theta;
  const MomentSet m = compute_moments(testing);
  const linalg::SpdFactor qf(m.Q_r);
  require(qf.ok(), ErrorCode::SingularTestingMoment, "Q_R of the testing assets is not positive definite");
  const PricingErrors e = pricing_errors(testing, theta);
  r.delta_sq = std::max(0.0, qf.inverse_quadratic(e.mean_error));
  r.statistic = static_cast<double>(testing.t_len()) * r.delta_sq;
  const MatrixXd S = error_covariance(e.per_period);
  r.weights = wchi2::sandwich_weights(S, m.Q_r, std::nullopt,
                                      {true, static_cast<std::size_t>(testing.n_assets())});
  const auto c = wchi2::cdf_or_mc(r.weights, r.statistic);
  r.p_value = std::clamp(1.0 - c.value, 0.0, 1.0);
  r.mc_fallback = c.mc_fallback;
  if (alpha >= 1.0) {
    r.reject = true;
  } else if (decision_only) {
    r.critical_value = std::numeric_limits<double>::quiet_NaN();
    r.reject = c.value > 1.0 - alpha;
  } else {
    const auto q = wchi2::quantile_or_mc(r.weights, 1.0 - alpha);
    r.critical_value = q.value;
    r.mc_fallback = r.mc_fallback || q.mc_fallback;
    r.reject = r.statistic > r.critical_value;
  }
  if (r.mc_fallback) r.warnings.push_back(Warning::MonteCarloFallback);
  return r;
}

inline HjnResult hjn_test(const ModelData& d, const HjnConfig& cfg = {}, bool decision_only = false) {
  const std::vector<Index> base = cfg.base ? *cfg.base : index_range(0, d.n_assets());
  const std::vector<Index> testing =
      cfg.testing ? *cfg.testing : index_range(0, std::min(kDefaultTestingCount, d.n_assets()));
  require(!testing.empty(), ErrorCode::InvalidArgument, "testing selector is empty");
  require(!base.empty(), ErrorCode::InvalidArgument, "base selector is empty");
  require(d.t_len() > static_cast<Index>(testing.size()), ErrorCode::DimensionMismatch, "HJN test needs T > n");

  const FourPassEstimate est = four_pass(select_assets(d, base), cfg.four_pass);
  HjnResult r = hjn_evaluate(select_assets(d, testing), est.theta_tilde, cfg.alpha, decision_only);
  r.estimate = est;
  r.base = base;
  r.testing = testing;
  if (static_cast<double>(testing.size()) / static_cast<double>(base.size()) > kTestingRatioWarning) {
    r.warnings.push_back(Warning::TestingRatioHigh);
  }
  if (est.sigma_theta && !est.drift_term_included) r.warnings.push_back(Warning::OmittedThetaDriftTerm);
  return r;
}

}  // namespace hjrobust

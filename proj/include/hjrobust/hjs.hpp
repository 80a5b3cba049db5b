#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <vector>

#include "hjrobust/classic.hpp"
#include "hjrobust/grid.hpp"
#include "hjrobust/moments.hpp"
#include "hjrobust/wchi2.hpp"

namespace hjrobust {

struct AlphaSplit {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
};

/// Symmetric split alpha1 = alpha2 = 1 - sqrt(1 - alpha), or a checked manual split.
inline AlphaSplit resolve_split(double alpha, std::optional<double> alpha1 = std::nullopt,
                                std::optional<double> alpha2 = std::nullopt) {
  check_alpha(alpha);
  if (!alpha1 && !alpha2) {
    const double a = 1.0 - std::sqrt(1.0 - alpha);
    return {a, a};
  }
  require(alpha1 && alpha2, ErrorCode::InvalidArgument, "alpha1 and alpha2 must be given together");
  check_alpha(*alpha1, "alpha1");
  check_alpha(*alpha2, "alpha2");
  require(std::fabs((1.0 - *alpha1) * (1.0 - *alpha2) - (1.0 - alpha)) <= 1e-12, ErrorCode::InvalidArgument,
          "(1 - alpha1)(1 - alpha2) must equal 1 - alpha");
  return {*alpha1, *alpha2};
}

struct RobustConfidenceSet {
  std::vector<VectorXd> members;
  std::vector<double> ar_values;
  double alpha1 = 0.0;
  double chi2_critical = 0.0;
  bool boundary_contact = false;
  std::size_t singular_points = 0;
  std::size_t evaluated_points = 0;
  bool two_stage = false;
  ThetaBox box;

  bool empty() const { return members.empty(); }
  std::size_t size() const { return members.size(); }
};

struct GridSpec {
  std::optional<ThetaBox> box;  // default: theta_hat +/- se_multiplier SEs
  double se_multiplier = 10.0;
  int points_per_dim = 0;  // 0: 41 for K+1 <= 2, else 21
};

inline ThetaGrid make_grid(const ModelData& d, const GridSpec& spec) {
  const ThetaBox box = spec.box ? *spec.box : auto_box(d, spec.se_multiplier);
  require(box.dim() == d.G().cols(), ErrorCode::DimensionMismatch, "grid bounds must have K+1 coordinates");
  const int ppd = spec.points_per_dim > 0 ? spec.points_per_dim : default_points_per_dim(box.dim());
  return ThetaGrid(box, ppd);
}

namespace detail {

inline double chi2_critical(double df, double alpha) {
  if (alpha >= 1.0) return 0.0;
  return wchi2::detail::chi2_quantile(df, 1.0 - alpha);
}

}  // namespace detail

/// {theta in grid : AR(theta) <= chi2_N(1 - alpha1)}. Above the point cap a
/// coarse 11-per-dimension pass is refined by half-spacing stencils around each
/// coarse member.
inline RobustConfidenceSet invert_ar(const ErrorMomentCube& cube, double t_len, const ThetaGrid& grid,
                                     double alpha1) {
  RobustConfidenceSet cs;
  cs.alpha1 = alpha1;
  cs.box = grid.box();
  cs.chi2_critical = detail::chi2_critical(static_cast<double>(cube.n_assets()), alpha1);

  const auto visit = [&](const VectorXd& theta, bool boundary) {
    ++cs.evaluated_points;
    const auto ar = try_ar_stat(cube, t_len, theta);
    if (!ar) {
      ++cs.singular_points;
      return;
    }
    if (ar->statistic <= cs.chi2_critical) {
      cs.members.push_back(theta);
      cs.ar_values.push_back(ar->statistic);
      cs.boundary_contact = cs.boundary_contact || boundary;
    }
  };

  if (grid.within_cap()) {
    for (std::size_t i = 0; i < grid.size(); ++i) visit(grid.point(i), grid.on_boundary(i));
    return cs;
  }

  cs.two_stage = true;
  const ThetaGrid coarse(grid.box(), 11);
  RobustConfidenceSet first = invert_ar(cube, t_len, coarse, alpha1);
  cs.singular_points += first.singular_points;
  cs.evaluated_points += first.evaluated_points;
  const VectorXd half = coarse.spacing() / 2.0;
  std::set<std::vector<long>> seen;
  for (const auto& center : first.members) {
    for (const auto& gp : local_stencil(grid.box(), center, half)) {
      std::vector<long> key(static_cast<std::size_t>(gp.theta.size()));
      for (Index i = 0; i < gp.theta.size(); ++i) {
        key[static_cast<std::size_t>(i)] = std::lround((gp.theta(i) - grid.box().lo(i)) / half(i));
      }
      if (seen.insert(key).second) visit(gp.theta, gp.boundary);
    }
  }
  return cs;
}

/// T * min over members of the HJ objective; +inf for an empty set.
inline std::pair<double, Index> hjs_statistic(const ErrorMomentCube& cube, double t_len,
                                              const RobustConfidenceSet& cs) {
  double best = std::numeric_limits<double>::infinity();
  Index arg = -1;
  for (std::size_t i = 0; i < cs.members.size(); ++i) {
    const double v = t_len * cube.hj_objective(cs.members[i]);
    if (v < best) {
      best = v;
      arg = static_cast<Index>(i);
    }
  }
  return {std::max(best, 0.0), arg};
}

/// Weights of S(theta)^{1/2} Q_r^{-1} S(theta)^{1/2}'.
inline WeightVector member_weights(const ErrorMomentCube& cube, const MatrixXd& q_inv, const VectorXd& theta) {
  const MatrixXd U = linalg::psd_root_upper(cube.covariance(theta));
  const VectorXd ev = linalg::sym_eigenvalues_desc(U * q_inv * U.transpose());
  return wchi2::make_weights(std::vector<double>(ev.data(), ev.data() + ev.size()), false,
                             static_cast<std::size_t>(cube.n_assets()));
}

struct CriticalValue {
  double value = 0.0;
  bool mc_fallback = false;
  Index argmax = -1;
};

/// c* = max over members of the (1 - alpha2) weighted chi-square quantile.
/// Members whose dominance bound p_max chi2_N(1 - alpha2) cannot beat the
/// running maximum are skipped.
inline CriticalValue hjs_critical(const ErrorMomentCube& cube, const RobustConfidenceSet& cs, double alpha2) {
  CriticalValue c;
  if (cs.empty() || alpha2 >= 1.0) return c;
  const MatrixXd q_inv = cube.q_r_factor().inverse();
  std::vector<WeightVector> ws;
  ws.reserve(cs.size());
  for (const auto& th : cs.members) ws.push_back(member_weights(cube, q_inv, th));
  const double chi_q = wchi2::detail::chi2_quantile(static_cast<double>(cube.n_assets()), 1.0 - alpha2);
  std::vector<std::size_t> order(ws.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ws[a].max() > ws[b].max(); });
  for (std::size_t i : order) {
    if (ws[i].size() == 0) continue;
    const double upper = ws[i].max() * chi_q;
    if (c.argmax >= 0 && upper <= c.value) break;
    const auto q = wchi2::quantile_or_mc(ws[i], 1.0 - alpha2);
    c.mc_fallback = c.mc_fallback || q.mc_fallback;
    if (c.argmax < 0 || q.value > c.value) {
      c.value = q.value;
      c.argmax = static_cast<Index>(i);
    }
  }
  return c;
}

/// Decision without forming c*: reject iff every member has cdf(stat) > 1 - alpha2.
inline bool hjs_reject_fast(const ErrorMomentCube& cube, const RobustConfidenceSet& cs, double stat,
                            double alpha2, bool* mc_fallback = nullptr) {
  if (cs.empty() || !std::isfinite(stat)) return true;
  if (alpha2 >= 1.0) return true;
  const MatrixXd q_inv = cube.q_r_factor().inverse();
  const double level = 1.0 - alpha2;
  std::vector<WeightVector> pending;
  for (const auto& th : cs.members) {
    WeightVector w = member_weights(cube, q_inv, th);
    if (w.size() == 0) continue;
    const auto [lo, hi] = wchi2::cdf_bounds(w, stat);
    if (hi <= level) return false;
    if (lo > level) continue;
    pending.push_back(std::move(w));
  }
  std::stable_sort(pending.begin(), pending.end(),
                   [](const WeightVector& a, const WeightVector& b) { return a.sum() > b.sum(); });
  for (const auto& w : pending) {
    const auto c = wchi2::cdf_or_mc(w, stat);
    if (c.mc_fallback && mc_fallback) *mc_fallback = true;
    if (c.value <= level) return false;
  }
  return true;
}

struct HjsConfig {
  double alpha = 0.05;
  std::optional<double> alpha1;
  std::optional<double> alpha2;
  GridSpec grid;
  bool exact_critical = true;  // false: decision only, critical reported as NaN
};

struct HjsResult {
  double statistic = std::numeric_limits<double>::infinity();
  double critical = std::numeric_limits<double>::quiet_NaN();
  bool reject = true;
  std::size_t cs_size = 0;
  double alpha = 0.05;
  AlphaSplit split;
  double chi2_critical = 0.0;
  VectorXd argmin;
  ThetaBox box;
  int points_per_dim = 0;
  bool boundary_contact = false;
  bool two_stage = false;
  bool mc_fallback = false;
  std::size_t singular_points = 0;
  std::size_t evaluated_points = 0;
  std::vector<Warning> warnings;
};

inline HjsResult hjs_test(const ModelData& d, const HjsConfig& cfg = {}) {
  require(d.n_assets() >= d.G().cols(), ErrorCode::DimensionMismatch, "HJS test needs N >= K+1");
  HjsResult r;
  r.alpha = cfg.alpha;
  r.split = resolve_split(cfg.alpha, cfg.alpha1, cfg.alpha2);
  const ErrorMomentCube cube(d);
  require(cube.q_r_factor().ok(), ErrorCode::NonPositiveDefinite, "Q_r is not positive definite");
  const double T = static_cast<double>(d.t_len());
  const ThetaGrid grid = make_grid(d, cfg.grid);
  r.box = grid.box();
  r.points_per_dim = grid.points_per_dim();

  const RobustConfidenceSet cs = invert_ar(cube, T, grid, r.split.alpha1);
  r.cs_size = cs.size();
  r.chi2_critical = cs.chi2_critical;
  r.boundary_contact = cs.boundary_contact;
  r.two_stage = cs.two_stage;
  r.singular_points = cs.singular_points;
  r.evaluated_points = cs.evaluated_points;

  const auto [stat, arg] = hjs_statistic(cube, T, cs);
  r.statistic = stat;
  if (arg >= 0) r.argmin = cs.members[static_cast<std::size_t>(arg)];

  if (cs.empty()) {
    r.reject = true;
    r.warnings.push_back(Warning::EmptyConfidenceSet);
  } else if (cfg.exact_critical) {
    const auto c = hjs_critical(cube, cs, r.split.alpha2);
    r.critical = c.value;
    r.mc_fallback = c.mc_fallback;
    r.reject = cfg.alpha >= 1.0 || r.statistic > r.critical;
  } else {
    r.reject = cfg.alpha >= 1.0 || hjs_reject_fast(cube, cs, r.statistic, r.split.alpha2, &r.mc_fallback);
  }
  if (r.boundary_contact) r.warnings.push_back(Warning::BoundaryContact);
  if (r.singular_points > 0) r.warnings.push_back(Warning::SingularGridPoints);
  if (r.mc_fallback) r.warnings.push_back(Warning::MonteCarloFallback);
  return r;
}

}  // namespace hjrobust

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/random/normal_distribution.hpp>

#include "hjrobust/detail/davies.hpp"
#include "hjrobust/errors.hpp"
#include "hjrobust/linalg.hpp"
#include "hjrobust/rng.hpp"

namespace hjrobust {

/// Non-negative weights p_i of sum_i p_i x_i with x_i ~ iid chi2(1),
/// sorted in descending order.
struct WeightVector {
  std::vector<double> weights;
  std::size_t source_rank = 0;  // expected number of positive weights (0 = unspecified)

  std::size_t size() const { return weights.size(); }
  double max() const { return weights.empty() ? 0.0 : weights.front(); }
  double min() const { return weights.empty() ? 0.0 : weights.back(); }
  double sum() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  }
};

namespace wchi2 {

inline constexpr double kRelativeCutoff = 1e-10;
inline constexpr double kCdfAccuracy = 1e-7;
inline constexpr int kCdfTermLimit = 2'000'000;

/// Build a weight vector from raw eigenvalues. Negative values are clamped to
/// zero; unless retain_all is set, values below kRelativeCutoff * max are dropped.
inline WeightVector make_weights(std::vector<double> values, bool retain_all = false,
                                 std::size_t source_rank = 0) {
  for (double& v : values) v = std::max(v, 0.0);
  std::sort(values.begin(), values.end(), std::greater<>());
  WeightVector w;
  w.source_rank = source_rank;
  const double top = values.empty() ? 0.0 : values.front();
  for (double v : values) {
    if (retain_all || (top > 0.0 && v >= kRelativeCutoff * top)) w.weights.push_back(v);
  }
  return w;
}

struct SandwichOptions {
  bool retain_all = false;
  std::size_t expected_rank = 0;
};

/// Eigenvalues of S^{1/2} M S^{1/2}' with S^{1/2} the upper Cholesky factor of
/// S (S = U'U), and M = W^{-1} - W^{-1} q (q' W^{-1} q)^{-1} q' W^{-1} when a
/// projector basis q is given, otherwise M = W^{-1}.
inline WeightVector sandwich_weights(const MatrixXd& S, const MatrixXd& W,
                                     const std::optional<MatrixXd>& q = std::nullopt,
                                     SandwichOptions opts = {}) {
  require(S.rows() == S.cols() && W.rows() == W.cols() && S.rows() == W.rows(),
          ErrorCode::DimensionMismatch, "S and W must be square and of equal size");
  const auto w_fac = linalg::spd_factor_or_throw(W, ErrorCode::NonPositiveDefinite, "weight matrix W");
  MatrixXd M = w_fac.inverse();
  if (q) {
    require(q->rows() == W.rows(), ErrorCode::DimensionMismatch, "projector basis has wrong row count");
    const MatrixXd wq = w_fac.solve(*q);
    const MatrixXd qwq = q->transpose() * wq;
    linalg::SpdFactor qwq_fac(qwq);
    require(qwq_fac.ok(), ErrorCode::RankDeficient, "projector basis q is not of full column rank");
    M -= wq * qwq_fac.solve(wq.transpose());
  }
  const MatrixXd U = linalg::psd_root_upper(S);
  const MatrixXd sandwich = U * linalg::symmetrize(M) * U.transpose();
  const VectorXd ev = linalg::sym_eigenvalues_desc(sandwich);
  return make_weights(std::vector<double>(ev.data(), ev.data() + ev.size()), opts.retain_all,
                      opts.expected_rank);
}

namespace detail {

inline bool all_equal(const WeightVector& w) {
  if (w.weights.empty()) return true;
  return w.min() >= w.max() * (1.0 - 1e-12);
}

inline double chi2_cdf(double df, double x) {
  if (x <= 0.0) return 0.0;
  return boost::math::cdf(boost::math::chi_squared_distribution<double>(df), x);
}

inline double chi2_quantile(double df, double p) {
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(df), p);
}

}  // namespace detail

/// P(sum p_i x_i <= x). Throws AccuracyNotReached when the inversion fails.
inline double cdf(const WeightVector& w, double x) {
  require(std::isfinite(x), ErrorCode::InvalidArgument, "cdf argument must be finite");
  if (w.weights.empty() || w.max() <= 0.0) return x >= 0.0 ? 1.0 : 0.0;
  if (x <= 0.0) return 0.0;
  if (detail::all_equal(w)) return detail::chi2_cdf(static_cast<double>(w.size()), x / w.max());
  hjrobust::detail::Davies davies(w.weights);
  const auto res = davies.evaluate(x, kCdfAccuracy, kCdfTermLimit);
  require(res.fault == 0 || res.fault == 2, ErrorCode::AccuracyNotReached,
          "characteristic-function inversion failed (fault " + std::to_string(res.fault) + ")");
  return std::clamp(res.value, 0.0, 1.0);
}

/// Draw sum p_i x_i `draws` times; result is sorted ascending.
inline std::vector<double> mc_sample(const WeightVector& w, std::size_t draws, std::uint64_t seed) {
  std::vector<double> out(draws, 0.0);
  if (w.weights.empty()) return out;
  Rng rng(seed);
  boost::random::normal_distribution<double> normal;
  for (auto& v : out) {
    double s = 0.0;
    for (double p : w.weights) {
      const double z = normal(rng);
      s += p * z * z;
    }
    v = s;
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct McSummary {
  std::size_t draws = 0;
  double mean = 0.0;
  double sd = 0.0;
  std::vector<std::pair<double, double>> quantiles;  // (prob, value)
};

inline double empirical_quantile(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) return 0.0;
  const double pos = prob * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

inline double empirical_cdf(const std::vector<double>& sorted, double x) {
  const auto it = std::upper_bound(sorted.begin(), sorted.end(), x);
  return static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size());
}

inline McSummary summarize(const std::vector<double>& sorted, const std::vector<double>& probs) {
  McSummary s;
  s.draws = sorted.size();
  if (sorted.empty()) return s;
  double sum = 0.0, sumsq = 0.0;
  for (double v : sorted) {
    sum += v;
    sumsq += v * v;
  }
  const double n = static_cast<double>(sorted.size());
  s.mean = sum / n;
  s.sd = n > 1 ? std::sqrt(std::max(0.0, (sumsq - n * s.mean * s.mean) / (n - 1))) : 0.0;
  for (double p : probs) s.quantiles.emplace_back(p, empirical_quantile(sorted, p));
  return s;
}

/// Result of a distribution evaluation that may have fallen back to Monte Carlo.
struct Evaluation {
  double value = 0.0;
  bool mc_fallback = false;
};

inline constexpr std::size_t kFallbackDraws = 1'000'000;
inline constexpr std::uint64_t kFallbackSeed = 0x5eedULL;

inline Evaluation cdf_or_mc(const WeightVector& w, double x) {
  try {
    return {cdf(w, x), false};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::AccuracyNotReached) throw;
  }
  return {empirical_cdf(mc_sample(w, kFallbackDraws, kFallbackSeed), x), true};
}

/// x with cdf(x) = prob, by bracketed root search on the monotone CDF.
inline double quantile(const WeightVector& w, double prob) {
  require(prob > 0.0 && prob < 1.0, ErrorCode::InvalidArgument, "probability must lie in (0, 1)");
  require(!w.weights.empty() && w.max() > 0.0, ErrorCode::InvalidArgument,
          "quantile needs at least one positive weight");
  const double k = static_cast<double>(w.size());
  if (detail::all_equal(w)) return w.max() * detail::chi2_quantile(k, prob);

  // p_min chi2_k <= Q <= p_max chi2_k stochastically, so the quantile is bracketed.
  double lo = w.min() * detail::chi2_quantile(k, prob);
  double hi = w.max() * detail::chi2_quantile(k, prob);
  lo = std::max(lo * (1.0 - 1e-9), 0.0);
  hi = hi * (1.0 + 1e-9) + 1e-300;
  const auto f = [&](double x) { return cdf(w, x) - prob; };
  double flo = lo > 0.0 ? f(lo) : -prob;
  double fhi = f(hi);
  for (int i = 0; i < 60 && fhi < 0.0; ++i) {
    lo = hi;
    flo = fhi;
    hi *= 2.0;
    fhi = f(hi);
  }
  require(flo <= 0.0 && fhi >= 0.0, ErrorCode::AccuracyNotReached, "could not bracket quantile");
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  std::uintmax_t iters = 200;
  const auto tol = [](double a, double b) { return std::fabs(b - a) <= 1e-13 * std::max(std::fabs(a), 1e-300); };
  const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
  return 0.5 * (a + b);
}

inline Evaluation quantile_or_mc(const WeightVector& w, double prob) {
  try {
    return {quantile(w, prob), false};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::AccuracyNotReached) throw;
  }
  return {empirical_quantile(mc_sample(w, kFallbackDraws, kFallbackSeed), prob), true};
}

/// Cheap stochastic-dominance bounds on the CDF: F_k(x/p_max) <= cdf(x) <= F_k(x/p_min).
inline std::pair<double, double> cdf_bounds(const WeightVector& w, double x) {
  if (w.weights.empty() || w.max() <= 0.0) return {x >= 0.0 ? 1.0 : 0.0, x >= 0.0 ? 1.0 : 0.0};
  const double k = static_cast<double>(w.size());
  const double lower = detail::chi2_cdf(k, x / w.max());
  const double upper = w.min() > 0.0 ? detail::chi2_cdf(k, x / w.min()) : 1.0;
  return {lower, upper};
}

}  // namespace wchi2
}  // namespace hjrobust

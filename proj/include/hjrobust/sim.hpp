#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "hjrobust/classic.hpp"
#include "hjrobust/errors.hpp"
#include "hjrobust/hjn.hpp"
#include "hjrobust/hjs.hpp"
#include "hjrobust/linalg.hpp"
#include "hjrobust/moments.hpp"
#include "hjrobust/panel_io.hpp"
#include "hjrobust/rng.hpp"

namespace hjrobust {

// ---------------------------------------------------------------------------
// Calibration bundles

/// Single-factor design. beta_hat holds up to N_max loadings; V_u is N_max x N_max.
struct Sf1Calibration {
  double v_f = 0.0;
  VectorXd beta_hat;
  double proxy_beta_multiplier = 10.0;
  double lambda = 0.0;
  MatrixXd v_u;
  std::string source = "synthetic";
};

/// Three-factor design with proxy, strong and useless factors.
struct Ll3Calibration {
  MatrixXd v_F;      // 3 x 3
  MatrixXd beta;     // N x 3
  VectorXd lambda;   // 3
  MatrixXd v_u;      // N x N
  double proxy_loading = 0.1;
  double omitted_scale = 0.99;
  std::string source = "synthetic";
};

/// Latent-factor design: three priced factors and one omitted factor.
struct LatentCalibration {
  VectorXd mu;      // 4: mean of (beta_i', gamma_i)'
  MatrixXd v_bg;    // 4 x 4
  double sigma_e = 0.0;
  MatrixXd d_g;     // 3 x 3
  MatrixXd v_v;     // 3 x 3
  VectorXd lambda;  // 3
  std::string source = "synthetic";
};

inline Sf1Calibration default_sf1_calibration() {
  constexpr Index n = 31;
  Sf1Calibration c;
  c.v_f = 0.0004;
  c.lambda = 0.04;
  c.beta_hat.resize(n);
  c.v_u.resize(n, n);
  VectorXd sd(n);
  for (Index i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) / static_cast<double>(n - 1);
    c.beta_hat(i) = 1.0 + 3.0 * s;
    sd(i) = 0.15 + 0.10 * s;
  }
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) c.v_u(i, j) = (i == j ? 1.0 : 0.8) * sd(i) * sd(j);
  }
  return c;
}

inline Ll3Calibration default_ll3_calibration() {
  Ll3Calibration c;
  const Eigen::Vector3d sd(0.045, 0.030, 0.028);
  Eigen::Matrix3d corr;
  corr << 1.0, 0.3, -0.4, 0.3, 1.0, -0.2, -0.4, -0.2, 1.0;
  c.v_F = sd.asDiagonal() * corr * sd.asDiagonal();
  c.lambda = Eigen::Vector3d(0.006, 0.002, 0.004);
  constexpr Index n = 25;
  c.beta.resize(n, 3);
  c.v_u.resize(n, n);
  VectorXd usd(n);
  for (Index s = 0; s < 5; ++s) {
    for (Index b = 0; b < 5; ++b) {
      const Index i = 5 * s + b;
      c.beta(i, 0) = 1.1 - 0.05 * static_cast<double>(s) - 0.02 * static_cast<double>(b);
      c.beta(i, 1) = 1.2 - 0.35 * static_cast<double>(s);
      c.beta(i, 2) = -0.4 + 0.3 * static_cast<double>(b);
      usd(i) = 0.010 + 0.001 * static_cast<double>(s + b);
    }
  }
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) c.v_u(i, j) = (i == j ? 1.0 : 0.2) * usd(i) * usd(j);
  }
  return c;
}

inline LatentCalibration default_latent_calibration() {
  LatentCalibration c;
  c.mu = Eigen::Vector4d(0.053, 0.0, 0.0, 0.0);
  c.v_bg = Eigen::Vector4d(0.008, 0.014, 0.010, 0.007).cwiseAbs2().asDiagonal();
  c.sigma_e = 0.012;
  c.d_g.resize(3, 3);
  c.d_g << 0.90, 0.05, 0.05, 0.05, 0.80, 0.05, 0.05, 0.05, 0.60;
  c.v_v = MatrixXd::Identity(3, 3) - c.d_g * c.d_g.transpose();
  c.lambda = Eigen::Vector3d(0.12, 0.05, 0.60);
  return c;
}

// ---------------------------------------------------------------------------
// DGP specification and draws

enum class DgpVariant { LL3, SF1, LATENT };
enum class Sf1Mode { Proxy, Strength };

inline std::string to_string(DgpVariant v) {
  switch (v) {
    case DgpVariant::LL3: return "LL3";
    case DgpVariant::SF1: return "SF1";
    case DgpVariant::LATENT: return "LATENT";
  }
  return "?";
}

inline std::string to_string(Sf1Mode m) { return m == Sf1Mode::Proxy ? "proxy" : "strength"; }

struct DgpSpec {
  DgpVariant variant = DgpVariant::SF1;
  Sf1Mode sf1_mode = Sf1Mode::Proxy;
  Index n_assets = 5;
  Index t_len = 100;
  double d_g = 1.0;      // SF1 proxy quality / strength
  double d = 0.0;        // misspecification level
  double d_alpha = 1.0;  // LATENT third-factor strength
  std::optional<Sf1Calibration> sf1;
  std::optional<Ll3Calibration> ll3;
  std::optional<LatentCalibration> latent;

  void validate() const {
    require(t_len >= 2, ErrorCode::InvalidCalibration, "t_len must be at least 2");
    require(n_assets >= 1, ErrorCode::InvalidCalibration, "n_assets must be at least 1");
    require(d >= 0.0 && std::isfinite(d), ErrorCode::InvalidCalibration, "d must be non-negative");
    require(std::isfinite(d_g) && std::isfinite(d_alpha), ErrorCode::InvalidCalibration,
            "d_g and d_alpha must be finite");
  }
};

struct TruthRecord {
  std::optional<VectorXd> theta_G;  // for the default observed factor set
  VectorXd lambda;
  MatrixXd beta;
  VectorXd beta_perp;
};

struct SimDraw {
  MatrixXd returns;  // T x N gross returns
  MatrixXd factors;  // T x K_all raw factors
  std::vector<std::string> factor_names;
  std::vector<std::string> default_factors;
  TruthRecord truth;
};

namespace detail {

inline MatrixXd standard_normals(Rng& rng, Index rows, Index cols) {
  boost::random::normal_distribution<double> normal;
  MatrixXd z(rows, cols);
  for (Index t = 0; t < rows; ++t) {
    for (Index j = 0; j < cols; ++j) z(t, j) = normal(rng);
  }
  return z;
}

/// T draws of N(0, V) stacked as rows.
inline MatrixXd mvn_rows(Rng& rng, Index rows, const MatrixXd& cov) {
  const MatrixXd L = linalg::psd_sampling_factor(cov);
  return standard_normals(rng, rows, cov.rows()) * L.transpose();
}

/// First column of the orthogonal complement of span{iota, beta}, unit norm.
inline VectorXd complement_direction(const MatrixXd& beta) {
  const Index n = beta.rows();
  MatrixXd X(n, beta.cols() + 1);
  X.col(0).setOnes();
  X.rightCols(beta.cols()) = beta;
  require(n > X.cols(), ErrorCode::InvalidCalibration, "need N > K+1 for the misspecification direction");
  const Eigen::HouseholderQR<MatrixXd> qr(X);
  const MatrixXd Q = qr.householderQ();
  return Q.col(X.cols()).normalized();
}

inline std::vector<std::string> numbered(const std::string& stem, int count) {
  std::vector<std::string> v;
  for (int i = 1; i <= count; ++i) v.push_back(stem + std::to_string(i));
  return v;
}

inline SimDraw simulate_sf1(const DgpSpec& s, Rng& rng) {
  const Sf1Calibration cal = s.sf1 ? *s.sf1 : default_sf1_calibration();
  const Index N = s.n_assets;
  const Index T = s.t_len;
  require(N <= cal.beta_hat.size() && N <= cal.v_u.rows(), ErrorCode::InvalidCalibration,
          "calibration bundle has fewer than n_assets assets");
  require(cal.v_f > 0.0, ErrorCode::InvalidCalibration, "v_f must be positive");
  SimDraw out;
  const bool proxy = s.sf1_mode == Sf1Mode::Proxy;
  const VectorXd beta = (proxy ? cal.proxy_beta_multiplier : 1.0) * cal.beta_hat.head(N);
  out.truth.beta = beta;
  out.truth.lambda = VectorXd::Constant(1, cal.lambda);
  out.truth.beta_perp = detail::complement_direction(beta) / std::sqrt(static_cast<double>(T));

  VectorXd g, f;
  if (proxy) {
    const double v_g = cal.v_f / 4.0;
    const double v_v = cal.v_f - s.d_g * s.d_g * v_g;
    require(v_v >= 0.0, ErrorCode::InvalidCalibration, "d_g too large: omitted factor variance negative");
    g = std::sqrt(v_g) * standard_normals(rng, T, 1).col(0);
    const VectorXd v = std::sqrt(v_v) * standard_normals(rng, T, 1).col(0);
    f = s.d_g * g + v;
    if (s.d_g != 0.0) out.truth.theta_G = Eigen::Vector2d(1.0, -cal.lambda / (s.d_g * v_g));
  } else {
    f = std::sqrt(cal.v_f) * standard_normals(rng, T, 1).col(0);
    g = f;
    f *= s.d_g;
    if (s.d_g != 0.0) out.truth.theta_G = Eigen::Vector2d(1.0, -cal.lambda / (s.d_g * cal.v_f));
  }
  const MatrixXd u = mvn_rows(rng, T, cal.v_u.topLeftCorner(N, N));
  const VectorXd mean = VectorXd::Ones(N) + beta * cal.lambda + out.truth.beta_perp * s.d;
  out.returns = (f * beta.transpose() + u).rowwise() + mean.transpose();
  out.factors = g;
  out.factor_names = {"g"};
  out.default_factors = {"g"};
  return out;
}

inline SimDraw simulate_ll3(const DgpSpec& s, Rng& rng) {
  const Ll3Calibration cal = s.ll3 ? *s.ll3 : default_ll3_calibration();
  const Index N = s.n_assets;
  const Index T = s.t_len;
  require(cal.v_F.rows() == 3 && cal.beta.cols() == 3 && cal.lambda.size() == 3, ErrorCode::InvalidCalibration,
          "LL3 calibration must have three factors");
  require(N <= cal.beta.rows() && N <= cal.v_u.rows(), ErrorCode::InvalidCalibration,
          "calibration bundle has fewer than n_assets assets");
  SimDraw out;
  const MatrixXd beta = cal.beta.topRows(N);
  out.truth.beta = beta;
  out.truth.lambda = cal.lambda;
  out.truth.beta_perp = N > 4 ? detail::complement_direction(beta) : VectorXd::Zero(N);

  const MatrixXd g = mvn_rows(rng, T, cal.v_F);
  const MatrixXd v = mvn_rows(rng, T, cal.omitted_scale * cal.v_F);
  const MatrixXd f = cal.proxy_loading * g + v;
  const MatrixXd w = mvn_rows(rng, T, cal.v_F);
  const MatrixXd u = mvn_rows(rng, T, cal.v_u.topLeftCorner(N, N));
  const VectorXd mean = VectorXd::Ones(N) + beta * cal.lambda + out.truth.beta_perp * s.d;
  out.returns = (f * beta.transpose() + u).rowwise() + mean.transpose();
  out.factors.resize(T, 9);
  out.factors << g, f, w;
  for (const auto& stem : {"g", "f", "w"}) {
    for (const auto& n : numbered(stem, 3)) out.factor_names.push_back(n);
  }
  out.default_factors = numbered("g", 3);
  // Cov(f, g) = proxy_loading * V_F, so E[m r] = iota at this theta.
  const VectorXd th2 = -(cal.proxy_loading * cal.v_F).ldlt().solve(cal.lambda);
  VectorXd th(4);
  th << 1.0, th2;
  out.truth.theta_G = th;
  return out;
}

inline SimDraw simulate_latent(const DgpSpec& s, Rng& rng) {
  const LatentCalibration cal = s.latent ? *s.latent : default_latent_calibration();
  require(cal.mu.size() == 4 && cal.v_bg.rows() == 4 && cal.d_g.rows() == 3 && cal.v_v.rows() == 3 &&
              cal.lambda.size() == 3,
          ErrorCode::InvalidCalibration, "LATENT calibration has wrong dimensions");
  require(cal.sigma_e >= 0.0, ErrorCode::InvalidCalibration, "sigma_e must be non-negative");
  const Index N = s.n_assets;
  const Index T = s.t_len;
  SimDraw out;

  MatrixXd A = MatrixXd::Identity(3, 3);
  A(2, 2) = s.d_alpha;
  const MatrixXd IA = MatrixXd::Identity(3, 3) - A;
  const MatrixXd ad = A * cal.d_g;
  const MatrixXd v_cov = IA * cal.d_g * cal.d_g.transpose() * IA.transpose() + cal.v_v;

  const MatrixXd loadings = mvn_rows(rng, N, cal.v_bg).rowwise() + cal.mu.transpose();
  const MatrixXd beta = loadings.leftCols(3);
  const VectorXd gamma = loadings.col(3);
  out.truth.beta = beta;
  out.truth.lambda = cal.lambda;
  out.truth.beta_perp = detail::complement_direction(beta);

  const MatrixXd g = standard_normals(rng, T, 3);
  const MatrixXd v = mvn_rows(rng, T, v_cov);
  const MatrixXd f = g * ad.transpose() + v;
  const VectorXd z = standard_normals(rng, T, 1).col(0);
  const MatrixXd e = cal.sigma_e * standard_normals(rng, T, N);
  const VectorXd mean = VectorXd::Ones(N) + beta * cal.lambda + out.truth.beta_perp * s.d;
  out.returns = (f * beta.transpose() + z * gamma.transpose() + e).rowwise() + mean.transpose();
  out.factors = g;
  out.factor_names = numbered("g", 3);
  out.default_factors = out.factor_names;
  const Eigen::FullPivLU<MatrixXd> lu(ad);
  if (lu.isInvertible()) {
    VectorXd th(4);
    th << 1.0, -lu.solve(cal.lambda);
    out.truth.theta_G = th;
  }
  return out;
}

}  // namespace detail

/// One dataset from the spec; deterministic given the seed.
inline SimDraw simulate_dgp(const DgpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  switch (spec.variant) {
    case DgpVariant::SF1: return detail::simulate_sf1(spec, rng);
    case DgpVariant::LL3: return detail::simulate_ll3(spec, rng);
    case DgpVariant::LATENT: return detail::simulate_latent(spec, rng);
  }
  throw Error(ErrorCode::InvalidCalibration, "unknown DGP variant");
}

/// Model data for a subset of the generated factors (default: the observed proxies).
inline ModelData model_data(const SimDraw& draw, const std::vector<std::string>& factors = {}) {
  const auto& names = factors.empty() ? draw.default_factors : factors;
  MatrixXd g(draw.factors.rows(), static_cast<Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto it = std::find(draw.factor_names.begin(), draw.factor_names.end(), names[j]);
    require(it != draw.factor_names.end(), ErrorCode::InvalidArgument, "unknown factor '" + names[j] + "'");
    g.col(static_cast<Index>(j)) = draw.factors.col(it - draw.factor_names.begin());
  }
  return make_model_data(draw.returns, g);
}

inline std::pair<ReturnPanel, FactorPanel> to_panels(const SimDraw& draw) {
  ReturnPanel r;
  FactorPanel g;
  const Index T = draw.returns.rows();
  const auto width = std::to_string(T).size();
  for (Index t = 0; t < T; ++t) {
    std::string label = std::to_string(t + 1);
    label.insert(0, width - label.size(), '0');
    r.periods.push_back(label);
  }
  g.periods = r.periods;
  r.values = draw.returns;
  g.values = draw.factors;
  for (Index i = 0; i < draw.returns.cols(); ++i) r.names.push_back("a" + std::to_string(i + 1));
  g.names = draw.factor_names;
  return {r, g};
}

// ---------------------------------------------------------------------------
// Experiments

enum class TestKind { Hj, Hjs, Hjn, J, ArCoverage };

inline std::string to_string(TestKind k) {
  switch (k) {
    case TestKind::Hj: return "hj";
    case TestKind::Hjs: return "hjs";
    case TestKind::Hjn: return "hjn";
    case TestKind::J: return "jtest";
    case TestKind::ArCoverage: return "ar_noncoverage";
  }
  return "?";
}

/// A test applied to every replication. For ArCoverage a "rejection" is the
/// event that the true theta lies outside the AR confidence set.
struct TestSpec {
  TestKind kind = TestKind::Hj;
  std::string label;
  std::vector<std::string> factors;                 // empty: DGP default
  std::optional<std::vector<Index>> hj_assets;      // HJ/HJS/J on a subset of assets
  GridSpec grid;                                    // HJS/J
  JDof j_dof = JDof::NMinusK;
  HjnConfig hjn;                                    // alpha overridden by the experiment

  std::string name() const { return label.empty() ? to_string(kind) : label; }
};

struct CellSpec {
  std::string label;
  DgpSpec dgp;
  std::map<std::string, double> axis;
};

struct TestTally {
  std::string test;
  std::size_t rejections = 0;
  std::size_t failures = 0;
  std::size_t completed = 0;

  double frequency() const {
    return completed == 0 ? 0.0 : static_cast<double>(rejections) / static_cast<double>(completed);
  }
  double mc_se() const {
    if (completed == 0) return 0.0;
    const double p = frequency();
    return std::sqrt(p * (1.0 - p) / static_cast<double>(completed));
  }
};

struct CellResult {
  std::string label;
  std::map<std::string, double> axis;
  std::vector<TestTally> tests;

  const TestTally& tally(const std::string& name) const {
    for (const auto& t : tests) {
      if (t.test == name) return t;
    }
    throw Error(ErrorCode::InvalidArgument, "no test named '" + name + "' in cell " + label);
  }
};

struct ExperimentResult {
  std::vector<CellResult> cells;
  std::size_t reps = 0;
  std::uint64_t master_seed = 0;
  double alpha = 0.05;
};

/// Decision of one test on one dataset (true = reject).
inline bool run_test_once(const TestSpec& t, const SimDraw& draw, double alpha) {
  ModelData d = model_data(draw, t.factors);
  if (t.hj_assets && t.kind != TestKind::Hjn) d = select_assets(d, *t.hj_assets);
  switch (t.kind) {
    case TestKind::Hj: return hj_test(d, alpha, true).reject;
    case TestKind::Hjs: {
      HjsConfig c;
      c.alpha = alpha;
      c.grid = t.grid;
      c.exact_critical = false;
      return hjs_test(d, c).reject;
    }
    case TestKind::Hjn: {
      HjnConfig c = t.hjn;
      c.alpha = alpha;
      c.four_pass.compute_sigma = false;
      return hjn_test(d, c, true).reject;
    }
    case TestKind::J: {
      JConfig c;
      c.box = t.grid.box;
      c.se_multiplier = t.grid.se_multiplier;
      c.points_per_dim = t.grid.points_per_dim;
      c.dof = t.j_dof;
      return j_test(d, alpha, c).reject;
    }
    case TestKind::ArCoverage: {
      require(draw.truth.theta_G.has_value(), ErrorCode::InvalidArgument, "DGP has no true theta_G");
      const double crit = detail::chi2_critical(static_cast<double>(d.n_assets()), alpha);
      return ar_stat(d, *draw.truth.theta_G).statistic > crit;
    }
  }
  return false;
}

/// Runs fn(i) for i in [0, count) on `jobs` threads. Work is claimed through an
/// atomic counter; callers write results by index so output is order-free.
inline void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, count); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

inline int default_jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

/// Replication r of every cell uses seed derive_seed(master, {r}), so cells
/// share common random numbers and results do not depend on `jobs`.
inline ExperimentResult run_experiment(const std::vector<CellSpec>& cells, const std::vector<TestSpec>& tests,
                                       std::size_t reps, double alpha, std::uint64_t master_seed, int jobs = 1,
                                       const std::function<void(const std::string&)>& progress = {}) {
  require(reps >= 1, ErrorCode::InvalidArgument, "reps must be at least 1");
  check_alpha(alpha);
  ExperimentResult res;
  res.reps = reps;
  res.master_seed = master_seed;
  res.alpha = alpha;
  const std::size_t nt = tests.size();
  for (const auto& cell : cells) {
    // 0 = accept, 1 = reject, 2 = failure
    std::vector<std::uint8_t> outcome(reps * nt, 2);
    parallel_for(reps, jobs, [&](std::size_t r) {
      SimDraw draw;
      try {
        draw = simulate_dgp(cell.dgp, derive_seed(master_seed, {r}));
      } catch (const Error&) {
        return;
      }
      for (std::size_t k = 0; k < nt; ++k) {
        try {
          outcome[r * nt + k] = run_test_once(tests[k], draw, alpha) ? 1 : 0;
        } catch (const Error&) {
          outcome[r * nt + k] = 2;
        }
      }
    });
    CellResult cr{cell.label, cell.axis, {}};
    for (std::size_t k = 0; k < nt; ++k) {
      TestTally tally{tests[k].name()};
      for (std::size_t r = 0; r < reps; ++r) {
        const auto o = outcome[r * nt + k];
        if (o == 2) {
          ++tally.failures;
        } else {
          ++tally.completed;
          tally.rejections += o;
        }
      }
      cr.tests.push_back(tally);
    }
    if (progress) progress(cell.label);
    res.cells.push_back(std::move(cr));
  }
  return res;
}

/// Sets a named scalar parameter of the spec.
inline void set_parameter(DgpSpec& s, const std::string& name, double value) {
  if (name == "d_g") {
    s.d_g = value;
  } else if (name == "d") {
    s.d = value;
  } else if (name == "d_alpha") {
    s.d_alpha = value;
  } else if (name == "t_len" || name == "T") {
    s.t_len = static_cast<Index>(std::llround(value));
  } else if (name == "n_assets" || name == "N") {
    s.n_assets = static_cast<Index>(std::llround(value));
  } else {
    throw Error(ErrorCode::SchemaError, "unknown sweep parameter '" + name + "'");
  }
}

/// Cartesian product of parameter axes over a base spec; the first axis varies slowest.
inline std::vector<CellSpec> sweep(const DgpSpec& base,
                                   const std::vector<std::pair<std::string, std::vector<double>>>& axes) {
  std::vector<CellSpec> cells{{"", base, {}}};
  for (const auto& [name, values] : axes) {
    std::vector<CellSpec> next;
    for (const auto& c : cells) {
      for (double v : values) {
        CellSpec n = c;
        set_parameter(n.dgp, name, v);
        n.axis[name] = v;
        next.push_back(std::move(n));
      }
    }
    cells = std::move(next);
  }
  for (auto& c : cells) {
    std::string label;
    for (const auto& [name, values] : axes) {
      if (!label.empty()) label += ",";
      char buf[64];
      std::snprintf(buf, sizeof buf, "%s=%g", name.c_str(), c.axis[name]);
      label += buf;
    }
    c.label = label.empty() ? "base" : label;
  }
  return cells;
}

/// HJN rejection frequency along a grid of misspecification levels.
inline std::vector<double> hjn_power_profile(const HjnConfig& cfg, const DgpSpec& dgp,
                                             const std::vector<double>& d_values, std::size_t reps,
                                             std::uint64_t seed, int jobs = 1) {
  TestSpec t;
  t.kind = TestKind::Hjn;
  t.hjn = cfg;
  const auto res = run_experiment(sweep(dgp, {{"d", d_values}}), {t}, reps, cfg.alpha, seed, jobs);
  std::vector<double> out;
  for (const auto& c : res.cells) out.push_back(c.tests.front().frequency());
  return out;
}

struct DensityProfile {
  std::vector<double> values;  // sorted ascending
  wchi2::McSummary summary;
  std::size_t failures = 0;
};

/// Sorted T * delta^2 over replications for one factor selection.
inline DensityProfile density_profile(const DgpSpec& spec, const std::vector<std::string>& factors,
                                      std::size_t reps, std::uint64_t seed, int jobs = 1) {
  require(reps >= 100, ErrorCode::InvalidArgument, "density profiles need at least 100 replications");
  std::vector<double> vals(reps, std::numeric_limits<double>::quiet_NaN());
  parallel_for(reps, jobs, [&](std::size_t r) {
    try {
      const SimDraw draw = simulate_dgp(spec, derive_seed(seed, {r}));
      const ModelData d = model_data(draw, factors);
      vals[r] = static_cast<double>(d.t_len()) * hj_closed_form(compute_moments(d));
    } catch (const Error&) {
    }
  });
  DensityProfile p;
  for (double v : vals) {
    if (std::isnan(v)) {
      ++p.failures;
    } else {
      p.values.push_back(v);
    }
  }
  std::sort(p.values.begin(), p.values.end());
  p.summary = wchi2::summarize(p.values, {0.05, 0.25, 0.5, 0.75, 0.95});
  return p;
}

}  // namespace hjrobust

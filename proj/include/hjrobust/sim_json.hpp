#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hjrobust/sim.hpp"

namespace hjrobust {

using json = nlohmann::json;

namespace jsonio {

/// Field access that reports the dotted path of the offending field.
class Field {
 public:
  Field(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const json& raw() const { return j_; }

  bool has(const std::string& key) const { return j_.is_object() && j_.contains(key) && !j_.at(key).is_null(); }

  Field at(const std::string& key) const {
    require(j_.is_object(), ErrorCode::SchemaError, path_ + ": expected an object");
    require(j_.contains(key), ErrorCode::SchemaError, join(key) + ": required field missing");
    return {j_.at(key), join(key)};
  }

  Field at(std::size_t i) const { return {j_.at(i), path_ + "[" + std::to_string(i) + "]"}; }

  std::size_t size() const {
    require(j_.is_array(), ErrorCode::SchemaError, path_ + ": expected an array");
    return j_.size();
  }

  double number() const {
    require(j_.is_number(), ErrorCode::SchemaError, path_ + ": expected a number");
    return j_.get<double>();
  }

  long long integer() const {
    require(j_.is_number_integer() || (j_.is_number() && j_.get<double>() == std::floor(j_.get<double>())),
            ErrorCode::SchemaError, path_ + ": expected an integer");
    return j_.is_number_integer() ? j_.get<long long>() : static_cast<long long>(j_.get<double>());
  }

  std::string text() const {
    require(j_.is_string(), ErrorCode::SchemaError, path_ + ": expected a string");
    return j_.get<std::string>();
  }

  bool boolean() const {
    require(j_.is_boolean(), ErrorCode::SchemaError, path_ + ": expected true or false");
    return j_.get<bool>();
  }

  VectorXd vector() const {
    VectorXd v(static_cast<Index>(size()));
    for (std::size_t i = 0; i < j_.size(); ++i) v(static_cast<Index>(i)) = at(i).number();
    return v;
  }

  MatrixXd matrix() const {
    const std::size_t rows = size();
    require(rows > 0, ErrorCode::SchemaError, path_ + ": empty matrix");
    const std::size_t cols = at(0).size();
    MatrixXd m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
      const Field row = at(i);
      require(row.size() == cols, ErrorCode::SchemaError, row.path() + ": ragged matrix row");
      for (std::size_t k = 0; k < cols; ++k) m(static_cast<Index>(i), static_cast<Index>(k)) = row.at(k).number();
    }
    return m;
  }

  std::vector<std::string> strings() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back(at(i).text());
    return out;
  }

  std::vector<Index> indices() const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back(static_cast<Index>(at(i).integer()));
    return out;
  }

 private:
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
};

inline json parse_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::SchemaError, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaError, path + ": " + e.what());
  }
}

inline json to_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(VectorXd(m.row(i).transpose())));
  return rows;
}

inline void check_psd(const MatrixXd& m, const std::string& path) {
  require(m.rows() == m.cols(), ErrorCode::InvalidCalibration, path + ": matrix must be square");
  require((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, m.cwiseAbs().maxCoeff()),
          ErrorCode::InvalidCalibration, path + ": matrix must be symmetric");
  const VectorXd ev = linalg::sym_eigenvalues_desc(linalg::symmetrize(m));
  require(ev.size() == 0 || ev(ev.size() - 1) >= -1e-10 * std::max(1.0, ev(0)), ErrorCode::InvalidCalibration,
          path + ": matrix must be positive semidefinite");
}

}  // namespace jsonio

// ---------------------------------------------------------------------------
// Calibration bundles

inline json calibration_to_json(const Sf1Calibration& c) {
  return {{"variant", "SF1"},
          {"source", c.source},
          {"v_f", c.v_f},
          {"beta_hat", jsonio::to_json(c.beta_hat)},
          {"proxy_beta_multiplier", c.proxy_beta_multiplier},
          {"lambda", c.lambda},
          {"v_u", jsonio::to_json(c.v_u)}};
}

inline json calibration_to_json(const Ll3Calibration& c) {
  return {{"variant", "LL3"},
          {"source", c.source},
          {"v_F", jsonio::to_json(c.v_F)},
          {"beta", jsonio::to_json(c.beta)},
          {"lambda", jsonio::to_json(c.lambda)},
          {"v_u", jsonio::to_json(c.v_u)},
          {"proxy_loading", c.proxy_loading},
          {"omitted_scale", c.omitted_scale}};
}

inline json calibration_to_json(const LatentCalibration& c) {
  return {{"variant", "LATENT"},
          {"source", c.source},
          {"mu", jsonio::to_json(c.mu)},
          {"v_bg", jsonio::to_json(c.v_bg)},
          {"sigma_e", c.sigma_e},
          {"d_g", jsonio::to_json(c.d_g)},
          {"v_v", jsonio::to_json(c.v_v)},
          {"lambda", jsonio::to_json(c.lambda)}};
}

inline Sf1Calibration sf1_calibration_from_json(const jsonio::Field& f) {
  Sf1Calibration c;
  c.v_f = f.at("v_f").number();
  c.beta_hat = f.at("beta_hat").vector();
  c.lambda = f.at("lambda").number();
  c.v_u = f.at("v_u").matrix();
  if (f.has("proxy_beta_multiplier")) c.proxy_beta_multiplier = f.at("proxy_beta_multiplier").number();
  if (f.has("source")) c.source = f.at("source").text();
  require(c.v_f > 0.0, ErrorCode::InvalidCalibration, f.path() + ".v_f: must be positive");
  require(c.v_u.rows() == c.beta_hat.size(), ErrorCode::InvalidCalibration,
          f.path() + ".v_u: size must match beta_hat");
  jsonio::check_psd(c.v_u, f.path() + ".v_u");
  return c;
}

inline Ll3Calibration ll3_calibration_from_json(const jsonio::Field& f) {
  Ll3Calibration c;
  c.v_F = f.at("v_F").matrix();
  c.beta = f.at("beta").matrix();
  c.lambda = f.at("lambda").vector();
  c.v_u = f.at("v_u").matrix();
  if (f.has("proxy_loading")) c.proxy_loading = f.at("proxy_loading").number();
  if (f.has("omitted_scale")) c.omitted_scale = f.at("omitted_scale").number();
  if (f.has("source")) c.source = f.at("source").text();
  require(c.v_F.rows() == 3 && c.beta.cols() == 3 && c.lambda.size() == 3, ErrorCode::InvalidCalibration,
          f.path() + ": LL3 needs three factors");
  require(c.v_u.rows() == c.beta.rows(), ErrorCode::InvalidCalibration, f.path() + ".v_u: size must match beta");
  jsonio::check_psd(c.v_F, f.path() + ".v_F");
  jsonio::check_psd(c.v_u, f.path() + ".v_u");
  return c;
}

inline LatentCalibration latent_calibration_from_json(const jsonio::Field& f) {
  LatentCalibration c;
  c.mu = f.at("mu").vector();
  c.v_bg = f.at("v_bg").matrix();
  c.sigma_e = f.at("sigma_e").number();
  c.d_g = f.at("d_g").matrix();
  c.v_v = f.at("v_v").matrix();
  c.lambda = f.at("lambda").vector();
  if (f.has("source")) c.source = f.at("source").text();
  require(c.mu.size() == 4 && c.v_bg.rows() == 4, ErrorCode::InvalidCalibration,
          f.path() + ": mu and v_bg must describe (beta', gamma)'");
  require(c.d_g.rows() == 3 && c.d_g.cols() == 3 && c.v_v.rows() == 3 && c.lambda.size() == 3,
          ErrorCode::InvalidCalibration, f.path() + ": d_g, v_v and lambda must be three-dimensional");
  jsonio::check_psd(c.v_bg, f.path() + ".v_bg");
  jsonio::check_psd(c.v_v, f.path() + ".v_v");
  return c;
}

inline DgpVariant parse_variant(const jsonio::Field& f) {
  const std::string v = f.text();
  if (v == "SF1") return DgpVariant::SF1;
  if (v == "LL3") return DgpVariant::LL3;
  if (v == "LATENT") return DgpVariant::LATENT;
  throw Error(ErrorCode::SchemaError, f.path() + ": unknown variant '" + v + "' (SF1, LL3 or LATENT)");
}

/// Loads a calibration bundle into the matching slot of the spec.
inline void apply_calibration(DgpSpec& s, const jsonio::Field& f) {
  const DgpVariant v = parse_variant(f.at("variant"));
  require(v == s.variant, ErrorCode::SchemaError, f.path() + ".variant: does not match the DGP variant");
  switch (v) {
    case DgpVariant::SF1: s.sf1 = sf1_calibration_from_json(f); break;
    case DgpVariant::LL3: s.ll3 = ll3_calibration_from_json(f); break;
    case DgpVariant::LATENT: s.latent = latent_calibration_from_json(f); break;
  }
}

inline json default_calibration_json(DgpVariant v) {
  switch (v) {
    case DgpVariant::SF1: return calibration_to_json(default_sf1_calibration());
    case DgpVariant::LL3: return calibration_to_json(default_ll3_calibration());
    case DgpVariant::LATENT: return calibration_to_json(default_latent_calibration());
  }
  return {};
}

// ---------------------------------------------------------------------------
// DGP and experiment specs

inline json dgp_to_json(const DgpSpec& s) {
  json j = {{"variant", to_string(s.variant)}, {"n_assets", s.n_assets}, {"t_len", s.t_len},
            {"d_g", s.d_g},                    {"d", s.d},               {"d_alpha", s.d_alpha}};
  if (s.variant == DgpVariant::SF1) j["sf1_mode"] = to_string(s.sf1_mode);
  if (s.sf1) j["calibration"] = calibration_to_json(*s.sf1);
  if (s.ll3) j["calibration"] = calibration_to_json(*s.ll3);
  if (s.latent) j["calibration"] = calibration_to_json(*s.latent);
  return j;
}

/// `base_dir` resolves relative calibration file paths.
inline DgpSpec dgp_from_json(const jsonio::Field& f, const std::string& base_dir = "") {
  DgpSpec s;
  s.variant = parse_variant(f.at("variant"));
  s.n_assets = static_cast<Index>(f.at("n_assets").integer());
  s.t_len = static_cast<Index>(f.at("t_len").integer());
  if (f.has("d_g")) s.d_g = f.at("d_g").number();
  if (f.has("d")) s.d = f.at("d").number();
  if (f.has("d_alpha")) s.d_alpha = f.at("d_alpha").number();
  if (f.has("sf1_mode")) {
    const auto m = f.at("sf1_mode").text();
    require(m == "proxy" || m == "strength", ErrorCode::SchemaError,
            f.path() + ".sf1_mode: expected 'proxy' or 'strength'");
    s.sf1_mode = m == "proxy" ? Sf1Mode::Proxy : Sf1Mode::Strength;
  }
  if (f.has("calibration")) {
    const jsonio::Field c = f.at("calibration");
    if (c.raw().is_string()) {
      std::string path = c.text();
      if (!base_dir.empty() && !path.empty() && path.front() != '/') path = base_dir + "/" + path;
      const json loaded = jsonio::parse_file(path);
      apply_calibration(s, jsonio::Field(loaded, path));
    } else {
      apply_calibration(s, c);
    }
  }
  try {
    s.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::SchemaError, f.path() + ": " + e.what());
  }
  return s;
}

inline std::optional<TestKind> parse_test_kind(const std::string& k) {
  if (k == "hj") return TestKind::Hj;
  if (k == "hjs") return TestKind::Hjs;
  if (k == "hjn") return TestKind::Hjn;
  if (k == "jtest") return TestKind::J;
  if (k == "ar_coverage") return TestKind::ArCoverage;
  return std::nullopt;
}

inline GridSpec grid_from_json(const jsonio::Field& f) {
  GridSpec g;
  if (f.has("bounds") && !(f.at("bounds").raw().is_string() && f.at("bounds").text() == "auto")) {
    const jsonio::Field b = f.at("bounds");
    ThetaBox box;
    box.lo.resize(static_cast<Index>(b.size()));
    box.hi.resize(static_cast<Index>(b.size()));
    for (std::size_t i = 0; i < b.size(); ++i) {
      const jsonio::Field p = b.at(i);
      require(p.size() == 2, ErrorCode::SchemaError, p.path() + ": expected [lo, hi]");
      box.lo(static_cast<Index>(i)) = p.at(0).number();
      box.hi(static_cast<Index>(i)) = p.at(1).number();
    }
    try {
      box.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::SchemaError, b.path() + ": " + e.what());
    }
    g.box = box;
  }
  if (f.has("se_multiplier")) g.se_multiplier = f.at("se_multiplier").number();
  if (f.has("points_per_dim")) g.points_per_dim = static_cast<int>(f.at("points_per_dim").integer());
  return g;
}

inline json grid_to_json(const GridSpec& g) {
  json j = {{"se_multiplier", g.se_multiplier}, {"points_per_dim", g.points_per_dim}};
  if (g.box) {
    json b = json::array();
    for (Index i = 0; i < g.box->dim(); ++i) b.push_back({g.box->lo(i), g.box->hi(i)});
    j["bounds"] = b;
  } else {
    j["bounds"] = "auto";
  }
  return j;
}

inline FourPassConfig four_pass_from_json(const jsonio::Field& f) {
  FourPassConfig c;
  if (f.has("kmax")) c.k_max = static_cast<int>(f.at("kmax").integer());
  if (f.has("k_override")) c.k_override = static_cast<Index>(f.at("k_override").integer());
  if (f.has("phi")) {
    try {
      c.phi = parse_penalty(f.at("phi").text());
    } catch (const Error& e) {
      throw Error(ErrorCode::SchemaError, f.path() + ".phi: " + e.what());
    }
  }
  return c;
}

inline TestSpec test_from_json(const jsonio::Field& f) {
  TestSpec t;
  const jsonio::Field kind = f.at("kind");
  const auto k = parse_test_kind(kind.text());
  require(k.has_value(), ErrorCode::SchemaError,
          kind.path() + ": unknown test '" + kind.text() + "' (hj, hjs, hjn, jtest, ar_coverage)");
  t.kind = *k;
  if (f.has("label")) t.label = f.at("label").text();
  if (f.has("factors")) t.factors = f.at("factors").strings();
  if (f.has("assets")) t.hj_assets = f.at("assets").indices();
  if (f.has("grid")) t.grid = grid_from_json(f.at("grid"));
  if (f.has("j_dof")) {
    const auto d = f.at("j_dof").text();
    require(d == "N-K" || d == "N-K-1", ErrorCode::SchemaError, f.path() + ".j_dof: expected 'N-K' or 'N-K-1'");
    t.j_dof = d == "N-K" ? JDof::NMinusK : JDof::NMinusKMinus1;
  }
  if (f.has("base")) t.hjn.base = f.at("base").indices();
  if (f.has("testing")) t.hjn.testing = f.at("testing").indices();
  if (f.has("four_pass")) t.hjn.four_pass = four_pass_from_json(f.at("four_pass"));
  return t;
}

struct ExperimentSpec {
  DgpSpec dgp;
  std::vector<std::pair<std::string, std::vector<double>>> axes;
  std::vector<TestSpec> tests;
  std::size_t reps = 100;
  double alpha = 0.05;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

inline ExperimentSpec experiment_from_json(const json& j, const std::string& base_dir = "") {
  const jsonio::Field root(j, "");
  require(j.is_object(), ErrorCode::SchemaError, "experiment spec must be a JSON object");
  ExperimentSpec e;
  e.dgp = dgp_from_json(root.at("dgp"), base_dir);
  if (root.has("axes")) {
    const jsonio::Field axes = root.at("axes");
    for (std::size_t i = 0; i < axes.size(); ++i) {
      const jsonio::Field a = axes.at(i);
      const std::string name = a.at("name").text();
      DgpSpec probe = e.dgp;
      try {
        set_parameter(probe, name, 0.0);
      } catch (const Error&) {
        throw Error(ErrorCode::SchemaError, a.path() + ".name: unknown sweep parameter '" + name + "'");
      }
      const jsonio::Field vals = a.at("values");
      require(vals.size() > 0, ErrorCode::SchemaError, vals.path() + ": needs at least one value");
      e.axes.emplace_back(name, std::vector<double>());
      for (std::size_t k = 0; k < vals.size(); ++k) e.axes.back().second.push_back(vals.at(k).number());
    }
  }
  const jsonio::Field tests = root.at("tests");
  require(tests.size() > 0, ErrorCode::SchemaError, "tests: needs at least one test");
  for (std::size_t i = 0; i < tests.size(); ++i) e.tests.push_back(test_from_json(tests.at(i)));
  if (root.has("reps")) {
    const long long r = root.at("reps").integer();
    require(r >= 1, ErrorCode::SchemaError, "reps: must be at least 1");
    e.reps = static_cast<std::size_t>(r);
  }
  if (root.has("alpha")) {
    e.alpha = root.at("alpha").number();
    require(e.alpha > 0.0 && e.alpha <= 1.0, ErrorCode::SchemaError, "alpha: must lie in (0, 1]");
  }
  if (root.has("seed")) e.seed = static_cast<std::uint64_t>(root.at("seed").integer());
  if (root.has("jobs")) e.jobs = static_cast<int>(root.at("jobs").integer());
  return e;
}

}  // namespace hjrobust

#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hjrobust/classic.hpp"
#include "hjrobust/fourpass.hpp"
#include "hjrobust/hjn.hpp"
#include "hjrobust/hjs.hpp"
#include "hjrobust/sim.hpp"

namespace hjrobust {

namespace report {

using json = nlohmann::json;

/// Non-finite values become null so every report stays valid JSON.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json vec(const VectorXd& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
  return a;
}

inline json mat(const MatrixXd& m) {
  json a = json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(vec(m.row(i).transpose()));
  return a;
}

inline json weights(const WeightVector& w) {
  json a = json::array();
  for (double x : w.weights) a.push_back(num(x));
  return a;
}

inline json warnings(const std::vector<Warning>& ws) {
  json a = json::array();
  for (auto w : ws) a.push_back(std::string(to_string(w)));
  return a;
}

inline json box(const ThetaBox& b) {
  json a = json::array();
  for (Index i = 0; i < b.dim(); ++i) a.push_back({num(b.lo(i)), num(b.hi(i))});
  return a;
}

inline json indices(const std::vector<Index>& v) {
  json a = json::array();
  for (Index i : v) a.push_back(i);
  return a;
}

}  // namespace report

/// Shared TestReport layout: test_name, statistic, weights or df, p_value,
/// critical_value, alpha, reject, config, warnings.
inline nlohmann::json test_report(const HjResult& r, const nlohmann::json& config = nlohmann::json::object()) {
  using report::num;
  return {{"test_name", "hj"},
          {"statistic", num(r.scaled_stat)},
          {"delta_sq", num(r.delta_sq)},
          {"theta_hat", report::vec(r.theta_hat)},
          {"weights", report::weights(r.weights)},
          {"p_value", num(r.p_value)},
          {"critical_value", num(r.critical_value)},
          {"alpha", r.alpha},
          {"reject", r.reject},
          {"config", config},
          {"warnings", report::warnings(r.warnings)}};
}

inline nlohmann::json test_report(const HjsResult& r, const nlohmann::json& config = nlohmann::json::object()) {
  using report::num;
  nlohmann::json cfg = config;
  cfg["grid_bounds"] = report::box(r.box);
  cfg["grid_points"] = r.points_per_dim;
  cfg["alpha1"] = r.split.alpha1;
  cfg["alpha2"] = r.split.alpha2;
  return {{"test_name", "hjs"},
          {"statistic", num(r.statistic)},
          {"df", nullptr},
          {"p_value", nullptr},
          {"critical_value", num(r.critical)},
          {"alpha", r.alpha},
          {"reject", r.reject},
          {"argmin", report::vec(r.argmin)},
          {"confidence_set_size", r.cs_size},
          {"chi2_critical", num(r.chi2_critical)},
          {"two_stage_grid", r.two_stage},
          {"evaluated_points", r.evaluated_points},
          {"singular_points", r.singular_points},
          {"config", cfg},
          {"warnings", report::warnings(r.warnings)}};
}

inline nlohmann::json test_report(const JResult& r, const nlohmann::json& config = nlohmann::json::object()) {
  using report::num;
  nlohmann::json cfg = config;
  cfg["grid_bounds"] = report::box(r.box);
  return {{"test_name", "jtest"},
          {"statistic", num(r.statistic)},
          {"df", r.df},
          {"argmin", report::vec(r.argmin)},
          {"p_value", num(r.p_value)},
          {"critical_value", num(r.critical_value)},
          {"alpha", r.alpha},
          {"reject", r.reject},
          {"singular_points", r.singular_points},
          {"config", cfg},
          {"warnings", report::warnings(r.warnings)}};
}

inline nlohmann::json four_pass_report(const FourPassEstimate& e, const AugmentedFactors& G,
                                       const std::optional<VectorXd>& theta_hat = std::nullopt) {
  using report::num;
  nlohmann::json j = {{"k_hat", e.k_hat},
                      {"k_overridden", e.k_overridden},
                      {"theta_tilde", report::vec(e.theta_tilde)},
                      {"theta_sub", {report::vec(e.theta_sub[0]), report::vec(e.theta_sub[1])}},
                      {"iv_condition", {num(e.iv_condition[0]), num(e.iv_condition[1])}}};
  if (e.factor_count) {
    j["objective_curve"] = e.factor_count->objective_curve;
    j["penalty_value"] = num(e.factor_count->penalty_value);
  }
  try {
    j["lambda_tilde"] = report::vec(risk_premia(e.theta_tilde, factor_second_moment(G)).lambda_tilde);
  } catch (const Error&) {
    j["lambda_tilde"] = nullptr;
  }
  if (theta_hat) j["theta_hat"] = report::vec(*theta_hat);
  if (e.sigma_theta) {
    j["sigma_theta_diagonal"] = report::vec(e.sigma_theta->diagonal());
    j["drift_term_included"] = e.drift_term_included;
  }
  return j;
}

inline nlohmann::json test_report(const HjnResult& r, const AugmentedFactors& G,
                                  const nlohmann::json& config = nlohmann::json::object()) {
  using report::num;
  nlohmann::json cfg = config;
  cfg["base"] = report::indices(r.base);
  cfg["testing"] = report::indices(r.testing);
  cfg["n_testing"] = r.testing.size();
  cfg["n_base"] = r.base.size();
  return {{"test_name", "hjn"},
          {"statistic", num(r.statistic)},
          {"delta_sq", num(r.delta_sq)},
          {"weights", report::weights(r.weights)},
          {"p_value", num(r.p_value)},
          {"critical_value", num(r.critical_value)},
          {"alpha", r.alpha},
          {"reject", r.reject},
          {"four_pass", four_pass_report(r.estimate, G)},
          {"config", cfg},
          {"warnings", report::warnings(r.warnings)}};
}

// ---------------------------------------------------------------------------
// Experiment results

inline void write_experiment_csv(std::ostream& out, const ExperimentResult& res) {
  std::vector<std::string> axes;
  for (const auto& c : res.cells) {
    for (const auto& [name, v] : c.axis) {
      if (std::find(axes.begin(), axes.end(), name) == axes.end()) axes.push_back(name);
    }
  }
  out << "cell";
  for (const auto& a : axes) out << ',' << a;
  out << ",test,rejections,completed,failures,frequency,mc_se\n";
  for (const auto& c : res.cells) {
    for (const auto& t : c.tests) {
      out << '"' << c.label << '"';
      for (const auto& a : axes) {
        out << ',';
        const auto it = c.axis.find(a);
        if (it != c.axis.end()) out << detail::format_double(it->second);
      }
      out << ',' << t.test << ',' << t.rejections << ',' << t.completed << ',' << t.failures << ','
          << detail::format_double(t.frequency()) << ',' << detail::format_double(t.mc_se()) << '\n';
    }
  }
}

inline nlohmann::json experiment_json(const ExperimentResult& res, const nlohmann::json& spec = nullptr) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : res.cells) {
    nlohmann::json tests = nlohmann::json::array();
    for (const auto& t : c.tests) {
      tests.push_back({{"test", t.test},
                       {"rejections", t.rejections},
                       {"completed", t.completed},
                       {"failures", t.failures},
                       {"frequency", t.frequency()},
                       {"mc_se", t.mc_se()}});
    }
    nlohmann::json axis = nlohmann::json::object();
    for (const auto& [name, v] : c.axis) axis[name] = v;
    cells.push_back({{"label", c.label}, {"axis", axis}, {"tests", tests}});
  }
  nlohmann::json j = {{"reps", res.reps}, {"master_seed", res.master_seed}, {"alpha", res.alpha}, {"cells", cells}};
  if (!spec.is_null()) j["spec"] = spec;
  return j;
}

inline nlohmann::json error_report(const Error& e) {
  return {{"error", std::string(to_string(e.code()))}, {"message", e.what()}};
}

}  // namespace hjrobust

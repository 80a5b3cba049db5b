// hjrobust command-line front end.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hjrobust/classic.hpp"
#include "hjrobust/fourpass.hpp"
#include "hjrobust/hjn.hpp"
#include "hjrobust/hjs.hpp"
#include "hjrobust/panel_io.hpp"
#include "hjrobust/report.hpp"
#include "hjrobust/rolling.hpp"
#include "hjrobust/sim.hpp"
#include "hjrobust/sim_json.hpp"

using namespace hjrobust;
using nlohmann::json;

namespace {

// The standard penalty assumes returns in percent; loaded panels hold decimal
// gross returns, so eigenvalues are 1e-4 times smaller.
constexpr double kPercentPenaltyScale = 1e-4;

struct Common {
  std::string returns;
  std::string factors;
  bool percent = true;
  std::string out;
  double alpha = 0.05;
};

struct Inputs {
  ReturnPanel r;
  FactorPanel g;
  ModelData d;
};

Inputs load_inputs(const Common& c, const std::vector<std::string>& factor_names = {}) {
  Inputs in;
  const ReturnPanel r = load_returns_csv(c.returns, c.percent);
  const FactorPanel g = pick_factors(load_factors_csv(c.factors, c.percent), factor_names);
  std::tie(in.r, in.g) = align(r, g);
  in.d = make_model_data(in.r, in.g);
  return in;
}

/// "0..24", "3,5,9" or a mix such as "0..9,20".
std::vector<Index> parse_selector(const std::string& text) {
  std::vector<Index> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto dots = part.find("..");
    try {
      if (dots == std::string::npos) {
        out.push_back(std::stol(part));
      } else {
        const long a = std::stol(part.substr(0, dots));
        const long b = std::stol(part.substr(dots + 2));
        require(a <= b, ErrorCode::InvalidArgument, "selector range '" + part + "' is decreasing");
        for (long i = a; i <= b; ++i) out.push_back(i);
      }
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::InvalidArgument, "cannot parse selector '" + text + "'");
    }
  }
  require(!out.empty(), ErrorCode::InvalidArgument, "empty selector '" + text + "'");
  return out;
}

/// "auto" or "lo:hi,lo:hi,..." with one pair per SDF coefficient.
std::optional<ThetaBox> parse_bounds(const std::string& text) {
  if (text.empty() || text == "auto") return std::nullopt;
  std::vector<double> lo, hi;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto colon = part.find(':');
    require(colon != std::string::npos, ErrorCode::InvalidArgument, "grid bound '" + part + "' must be lo:hi");
    const auto a = detail::parse_double(part.substr(0, colon));
    const auto b = detail::parse_double(part.substr(colon + 1));
    require(a && b, ErrorCode::InvalidArgument, "grid bound '" + part + "' is not numeric");
    lo.push_back(*a);
    hi.push_back(*b);
  }
  ThetaBox box{Eigen::Map<VectorXd>(lo.data(), static_cast<Index>(lo.size())),
               Eigen::Map<VectorXd>(hi.data(), static_cast<Index>(hi.size()))};
  box.validate();
  return box;
}

Penalty cli_penalty(const std::string& text) {
  if (text.empty() || text == "default") return Penalty{kPercentPenaltyScale};
  return parse_penalty(text);
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  require(f.good(), ErrorCode::InvalidArgument, "cannot write '" + path + "'");
  f << text;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback = 0) {
  if (flag) return *flag;
  if (const char* env = std::getenv("HJROBUST_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::InvalidArgument, "HJROBUST_SEED is not an unsigned integer");
    }
  }
  return fallback;
}

void add_common(CLI::App* cmd, Common& c, bool data = true) {
  if (data) {
    cmd->add_option("--returns", c.returns, "Return panel CSV (date column + one column per asset)")->required();
    cmd->add_option("--factors", c.factors, "Factor panel CSV (date column + one column per factor)")->required();
    cmd->add_flag("--percent,!--no-percent", c.percent, "Inputs are in percent (default) or already gross/decimal");
  }
  cmd->add_option("--out,-o", c.out, "Output file (default stdout)");
  cmd->add_option("--alpha", c.alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Specification tests for linear factor asset pricing models"};
  app.require_subcommand(1);

  Common c;
  std::vector<std::string> factor_names;
  std::optional<double> alpha1, alpha2;
  std::string grid_bounds = "auto";
  int grid_points = 0;
  double se_mult = 10.0;
  int kmax = 10;
  std::optional<Index> k_override;
  std::string phi = "default";
  std::string base_sel, testing_sel;
  std::optional<std::uint64_t> seed;
  std::size_t reps = 0;
  int jobs = 0;
  std::string j_dof = "N-K";

  auto* test = app.add_subcommand("test", "Run one specification test on CSV data");
  test->require_subcommand(1);
  const auto add_test_flags = [&](CLI::App* t) {
    add_common(t, c);
    t->add_option("--factor-names", factor_names, "Subset of factor columns to use");
  };
  auto* t_hj = test->add_subcommand("hj", "Classical HJ distance test");
  add_test_flags(t_hj);
  auto* t_hjs = test->add_subcommand("hjs", "Weak-identification robust HJS test");
  add_test_flags(t_hjs);
  t_hjs->add_option("--alpha1", alpha1, "Level of the AR confidence set");
  t_hjs->add_option("--alpha2", alpha2, "Level of the second step");
  t_hjs->add_option("--grid-bounds", grid_bounds, "'auto' or lo:hi per coefficient, comma separated");
  t_hjs->add_option("--grid-points", grid_points, "Grid points per coordinate (0 = default)");
  t_hjs->add_option("--se-multiplier", se_mult, "Half-width of the auto box in standard errors");
  auto* t_j = test->add_subcommand("jtest", "Continuously updated GMM J test");
  add_test_flags(t_j);
  t_j->add_option("--grid-bounds", grid_bounds, "'auto' or lo:hi per coefficient, comma separated");
  t_j->add_option("--grid-points", grid_points, "Grid points per coordinate (0 = default)");
  t_j->add_option("--se-multiplier", se_mult, "Half-width of the auto box in standard errors");
  t_j->add_option("--dof", j_dof, "Degrees of freedom: N-K or N-K-1")->check(CLI::IsMember({"N-K", "N-K-1"}));
  auto* t_hjn = test->add_subcommand("hjn", "Large-N HJN test with the four-pass estimator");
  add_test_flags(t_hjn);
  for (auto* cmd : {t_hjn}) {
    cmd->add_option("--base", base_sel, "Base asset selector, e.g. 0..99 (default all)");
    cmd->add_option("--testing", testing_sel, "Testing asset selector, e.g. 0..24 (default first 25)");
    cmd->add_option("--kmax", kmax, "Largest candidate number of omitted factors");
    cmd->add_option("--k-override", k_override, "Fix the number of omitted factors");
    cmd->add_option("--phi", phi, "'default' or scale:exp_n:exp_t on decimal returns");
  }

  auto* fp = app.add_subcommand("fourpass", "Four-pass estimate of the SDF coefficients");
  add_common(fp, c);
  fp->add_option("--factor-names", factor_names, "Subset of factor columns to use");
  fp->add_option("--base", base_sel, "Asset selector (default all)");
  fp->add_option("--kmax", kmax, "Largest candidate number of omitted factors");
  fp->add_option("--k-override", k_override, "Fix the number of omitted factors");
  fp->add_option("--phi", phi, "'default' or scale:exp_n:exp_t on decimal returns");
  bool no_sigma = false;
  fp->add_flag("--no-sigma", no_sigma, "Skip the covariance of the estimate");

  auto* roll = app.add_subcommand("rolling", "Rolling-window CRRs and test p-values (CSV)");
  add_common(roll, c);
  Index window = 240, step = 12;
  std::vector<std::string> sets, tests_list{"hj", "hjn"};
  roll->add_option("--window", window, "Window length W");
  roll->add_option("--step", step, "Step s between windows");
  roll->add_option("--set", sets, "Factor set name=f1,f2,... (repeatable; default: all factors)");
  roll->add_option("--tests", tests_list, "Tests per factor set: hj, hjn, jtest")->delimiter(',');
  roll->add_option("--testing", testing_sel, "HJN testing asset selector");
  roll->add_option("--kmax", kmax, "Largest candidate number of omitted factors");
  roll->add_option("--phi", phi, "'default' or scale:exp_n:exp_t on decimal returns");

  auto* simc = app.add_subcommand("simulate", "Run a simulation experiment from a JSON spec");
  std::string spec_path, out_prefix;
  simc->add_option("--spec", spec_path, "Experiment spec JSON")->required();
  simc->add_option("--out,-o", out_prefix, "Output prefix; writes <prefix>.csv and <prefix>.json")->required();
  simc->add_option("--reps", reps, "Override the number of replications");
  simc->add_option("--seed", seed, "Master seed (fallback: HJROBUST_SEED, then the spec)");
  simc->add_option("--jobs", jobs, "Worker threads (default: spec, then hardware)");

  auto* draw = app.add_subcommand("draw", "Write one simulated dataset as CSV panels");
  std::string dgp_path, out_returns, out_factors;
  draw->add_option("--spec", dgp_path, "DGP spec JSON (the 'dgp' object of an experiment)")->required();
  draw->add_option("--returns-out", out_returns, "Return panel CSV to write")->required();
  draw->add_option("--factors-out", out_factors, "Factor panel CSV to write")->required();
  draw->add_option("--seed", seed, "Seed (fallback: HJROBUST_SEED, then 0)");

  auto* cal = app.add_subcommand("calibration", "Calibration bundle utilities");
  cal->require_subcommand(1);
  auto* cal_export = cal->add_subcommand("export", "Write the built-in synthetic bundle as JSON");
  std::string variant = "SF1";
  cal_export->add_option("--variant", variant, "SF1, LL3 or LATENT")
      ->check(CLI::IsMember({"SF1", "LL3", "LATENT"}));
  cal_export->add_option("--out,-o", c.out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (t_hj->parsed()) {
      const Inputs in = load_inputs(c, factor_names);
      const HjResult r = hj_test(in.d, c.alpha);
      json cfg = {{"factors", in.g.names}, {"n_assets", in.d.n_assets()}, {"t_len", in.d.t_len()}};
      emit(c.out, test_report(r, cfg).dump(2) + "\n");
    } else if (t_hjs->parsed()) {
      const Inputs in = load_inputs(c, factor_names);
      HjsConfig hc;
      hc.alpha = c.alpha;
      hc.alpha1 = alpha1;
      hc.alpha2 = alpha2;
      hc.grid.box = parse_bounds(grid_bounds);
      hc.grid.points_per_dim = grid_points;
      hc.grid.se_multiplier = se_mult;
      const HjsResult r = hjs_test(in.d, hc);
      json cfg = {{"factors", in.g.names}, {"n_assets", in.d.n_assets()}, {"t_len", in.d.t_len()},
                  {"grid_mode", hc.grid.box ? "manual" : "auto"}};
      emit(c.out, test_report(r, cfg).dump(2) + "\n");
    } else if (t_j->parsed()) {
      const Inputs in = load_inputs(c, factor_names);
      JConfig jc;
      jc.box = parse_bounds(grid_bounds);
      jc.points_per_dim = grid_points;
      jc.se_multiplier = se_mult;
      jc.dof = j_dof == "N-K" ? JDof::NMinusK : JDof::NMinusKMinus1;
      const JResult r = j_test(in.d, c.alpha, jc);
      json cfg = {{"factors", in.g.names}, {"n_assets", in.d.n_assets()}, {"t_len", in.d.t_len()},
                  {"dof_rule", j_dof}};
      emit(c.out, test_report(r, cfg).dump(2) + "\n");
    } else if (t_hjn->parsed()) {
      const Inputs in = load_inputs(c, factor_names);
      HjnConfig hc;
      hc.alpha = c.alpha;
      if (!base_sel.empty()) hc.base = parse_selector(base_sel);
      if (!testing_sel.empty()) hc.testing = parse_selector(testing_sel);
      hc.four_pass.k_max = kmax;
      hc.four_pass.k_override = k_override;
      hc.four_pass.phi = cli_penalty(phi);
      const HjnResult r = hjn_test(in.d, hc);
      json cfg = {{"factors", in.g.names}, {"n_assets", in.d.n_assets()}, {"t_len", in.d.t_len()},
                  {"kmax", kmax}, {"phi", phi}};
      if (k_override) cfg["k_override"] = *k_override;
      emit(c.out, test_report(r, in.d.factors, cfg).dump(2) + "\n");
    } else if (fp->parsed()) {
      const Inputs in = load_inputs(c, factor_names);
      const ModelData d = base_sel.empty() ? in.d : select_assets(in.d, parse_selector(base_sel));
      FourPassConfig fc;
      fc.k_max = kmax;
      fc.k_override = k_override;
      fc.phi = cli_penalty(phi);
      fc.compute_sigma = !no_sigma;
      const FourPassEstimate e = four_pass(d, fc);
      std::optional<VectorXd> th;
      try {
        th = theta_hat(compute_moments(d));
      } catch (const Error&) {
      }
      json j = four_pass_report(e, d.factors, th);
      j["factors"] = in.g.names;
      j["n_assets"] = d.n_assets();
      j["t_len"] = d.t_len();
      std::vector<std::string> warns;
      if (e.sigma_theta && !e.drift_term_included) warns.emplace_back(to_string(Warning::OmittedThetaDriftTerm));
      j["warnings"] = warns;
      emit(c.out, j.dump(2) + "\n");
    } else if (roll->parsed()) {
      const ReturnPanel r = load_returns_csv(c.returns, c.percent);
      const FactorPanel g = load_factors_csv(c.factors, c.percent);
      RollingConfig rc;
      rc.window = window;
      rc.step = step;
      rc.alpha = c.alpha;
      rc.hjn.four_pass.k_max = kmax;
      rc.hjn.four_pass.phi = cli_penalty(phi);
      if (!testing_sel.empty()) rc.hjn.testing = parse_selector(testing_sel);
      std::vector<FactorSet> fsets;
      for (const auto& s : sets) {
        const auto eq = s.find('=');
        require(eq != std::string::npos && eq > 0, ErrorCode::InvalidArgument, "--set must be name=f1,f2,...");
        FactorSet fs{s.substr(0, eq), {}};
        std::stringstream ss(s.substr(eq + 1));
        std::string f;
        while (std::getline(ss, f, ',')) fs.factors.push_back(f);
        fsets.push_back(fs);
      }
      if (fsets.empty()) fsets.push_back({"all", {}});
      for (const auto& fs : fsets) {
        for (const auto& t : tests_list) {
          RollingTestKind k;
          if (t == "hj") {
            k = RollingTestKind::Hj;
          } else if (t == "hjn") {
            k = RollingTestKind::Hjn;
          } else if (t == "jtest") {
            k = RollingTestKind::J;
          } else {
            throw Error(ErrorCode::InvalidArgument, "unknown rolling test '" + t + "' (hj, hjn, jtest)");
          }
          rc.tests.push_back({k, fs});
        }
      }
      const RollingReport rep = rolling_analysis(r, g, rc);
      std::ostringstream os;
      write_rolling_csv(os, rep, rc.crr_count);
      emit(c.out, os.str());
    } else if (simc->parsed()) {
      const json raw = jsonio::parse_file(spec_path);
      const auto dir = std::filesystem::path(spec_path).parent_path().string();
      ExperimentSpec e = experiment_from_json(raw, dir);
      if (reps > 0) e.reps = reps;
      const std::uint64_t s = resolve_seed(seed, e.seed.value_or(0));
      const int j = jobs > 0 ? jobs : (raw.contains("jobs") ? e.jobs : default_jobs());
      const auto cells = sweep(e.dgp, e.axes);
      const ExperimentResult res = run_experiment(cells, e.tests, e.reps, e.alpha, s, j, [&](const std::string& l) {
        std::cerr << "cell " << l << " done\n";
      });
      std::ostringstream os;
      write_experiment_csv(os, res);
      emit(out_prefix + ".csv", os.str());
      emit(out_prefix + ".json", experiment_json(res, raw).dump(2) + "\n");
    } else if (draw->parsed()) {
      const json raw = jsonio::parse_file(dgp_path);
      const auto dir = std::filesystem::path(dgp_path).parent_path().string();
      const jsonio::Field root(raw, "");
      const DgpSpec spec = dgp_from_json(raw.contains("dgp") ? root.at("dgp") : root, dir);
      const SimDraw sd = simulate_dgp(spec, resolve_seed(seed));
      auto [rp, gp] = to_panels(sd);
      // Written in percent so the default --percent reading round-trips.
      rp.values = (rp.values.array() - 1.0) * 100.0;
      gp.values *= 100.0;
      write_panel_csv(out_returns, rp);
      write_panel_csv(out_factors, gp);
    } else if (cal_export->parsed()) {
      const DgpVariant v = variant == "SF1" ? DgpVariant::SF1 : variant == "LL3" ? DgpVariant::LL3 : DgpVariant::LATENT;
      emit(c.out, default_calibration_json(v).dump(2) + "\n");
    }
  } catch (const Error& e) {
    std::cerr << error_report(e).dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "Internal"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }
  return 0;
}

#pragma once

#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "hjrobust/classic.hpp"
#include "hjrobust/hjn.hpp"
#include "hjrobust/panel_io.hpp"

namespace hjrobust {

struct FactorSet {
  std::string name;
  std::vector<std::string> factors;
};

enum class RollingTestKind { Hj, Hjn, J };

struct RollingTest {
  RollingTestKind kind = RollingTestKind::Hj;
  FactorSet set;

  std::string column() const {
    const char* k = kind == RollingTestKind::Hj ? "hj" : kind == RollingTestKind::Hjn ? "hjn" : "jtest";
    return std::string(k) + "_" + set.name;
  }
};

struct RollingConfig {
  Index window = 240;
  Index step = 12;
  Index crr_count = 4;
  double alpha = 0.05;
  std::vector<RollingTest> tests;
  HjnConfig hjn;
  JConfig j;
};

struct RollingRow {
  std::string start;
  std::string end;
  VectorXd crr;
  double crr_sum = 0.0;
  std::vector<double> p_values;     // NaN where the test failed
  std::vector<std::string> errors;  // empty where the test succeeded
};

struct RollingReport {
  std::vector<std::string> columns;
  std::vector<RollingRow> rows;
};

inline Index rolling_window_count(Index t_len, Index window, Index step) {
  require(window >= 2 && step >= 1, ErrorCode::InvalidArgument, "window must be >= 2 and step >= 1");
  require(t_len >= window, ErrorCode::InvalidArgument, "rolling analysis needs T >= window");
  return (t_len - window) / step + 1;
}

inline FactorPanel pick_factors(const FactorPanel& g, const std::vector<std::string>& names) {
  if (names.empty()) return g;
  std::vector<Index> cols;
  for (const auto& n : names) {
    const auto it = std::find(g.names.begin(), g.names.end(), n);
    require(it != g.names.end(), ErrorCode::InvalidArgument, "unknown factor '" + n + "'");
    cols.push_back(static_cast<Index>(it - g.names.begin()));
  }
  return select_columns(g, cols);
}

/// Per-window CRRs and test p-values over aligned panels. A failing test marks
/// its cell and the run continues.
inline RollingReport rolling_analysis(const ReturnPanel& returns, const FactorPanel& factors,
                                      const RollingConfig& cfg) {
  const auto [r, g] = align(returns, factors);
  const Index T = r.values.rows();
  const Index windows = rolling_window_count(T, cfg.window, cfg.step);
  RollingReport rep;
  for (const auto& t : cfg.tests) rep.columns.push_back(t.column());

  std::vector<FactorPanel> sets;
  for (const auto& t : cfg.tests) sets.push_back(pick_factors(g, t.set.factors));

  for (Index w = 0; w < windows; ++w) {
    const Index begin = w * cfg.step;
    RollingRow row;
    row.start = r.periods[static_cast<std::size_t>(begin)];
    row.end = r.periods[static_cast<std::size_t>(begin + cfg.window - 1)];
    const MatrixXd rw = r.values.middleRows(begin, cfg.window);
    row.crr = crr(rw, cfg.crr_count);
    row.crr_sum = row.crr.sum();
    for (std::size_t k = 0; k < cfg.tests.size(); ++k) {
      double p = std::numeric_limits<double>::quiet_NaN();
      std::string err;
      try {
        const ModelData d = make_model_data(rw, sets[k].values.middleRows(begin, cfg.window));
        switch (cfg.tests[k].kind) {
          case RollingTestKind::Hj: p = hj_test(d, cfg.alpha, true).p_value; break;
          case RollingTestKind::Hjn: {
            HjnConfig h = cfg.hjn;
            h.alpha = cfg.alpha;
            h.four_pass.compute_sigma = false;
            p = hjn_test(d, h, true).p_value;
            break;
          }
          case RollingTestKind::J: p = j_test(d, cfg.alpha, cfg.j).p_value; break;
        }
      } catch (const Error& e) {
        err = e.what();
      }
      row.p_values.push_back(p);
      row.errors.push_back(err);
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

inline void write_rolling_csv(std::ostream& out, const RollingReport& rep, Index crr_count = 4) {
  out << "window,start,end";
  for (Index i = 1; i <= crr_count; ++i) out << ",crr" << i;
  out << ",crr_sum";
  for (const auto& c : rep.columns) out << ",p_" << c;
  out << '\n';
  for (std::size_t w = 0; w < rep.rows.size(); ++w) {
    const auto& row = rep.rows[w];
    out << w << ',' << row.start << ',' << row.end;
    for (Index i = 0; i < crr_count; ++i) {
      out << ',';
      if (i < row.crr.size()) out << detail::format_double(row.crr(i));
    }
    out << ',' << detail::format_double(row.crr_sum);
    for (double p : row.p_values) {
      out << ',';
      if (!std::isnan(p)) out << detail::format_double(p);
    }
    out << '\n';
  }
}

}  // namespace hjrobust

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hjrobust/errors.hpp"

namespace hjrobust {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// A labelled T x M panel. Period labels are opaque strings ordered
/// lexicographically (YYYYMM or YYYY-MM both sort correctly).
struct Panel {
  std::vector<std::string> periods;
  MatrixXd values;
  std::vector<std::string> names;

  Index t_len() const { return values.rows(); }
  Index width() const { return values.cols(); }

  void validate(Index min_rows = 2) const {
    require(values.rows() >= min_rows && values.cols() >= 1, ErrorCode::EmptyPanel,
            "panel needs at least " + std::to_string(min_rows) + " periods and one column");
    require(static_cast<Index>(periods.size()) == values.rows(), ErrorCode::DimensionMismatch,
            "period labels do not match row count");
    require(static_cast<Index>(names.size()) == values.cols(), ErrorCode::DimensionMismatch,
            "column names do not match column count");
    require(values.allFinite(), ErrorCode::MalformedCsv, "panel contains non-finite values");
    for (std::size_t i = 1; i < periods.size(); ++i) {
      require(periods[i - 1] < periods[i], ErrorCode::MalformedCsv,
              "periods not strictly increasing at row " + std::to_string(i));
    }
  }
};

/// T x N gross returns.
struct ReturnPanel : Panel {};
/// T x K proxy factors.
struct FactorPanel : Panel {};

/// T x (K+1) matrix with rows G_t = (1, g_t - gbar).
struct AugmentedFactors {
  MatrixXd values;
  VectorXd factor_mean;

  Index k_factors() const { return values.cols() - 1; }
};

enum class PanelKind { Returns, Factors };

struct CsvLayout {
  Index date_col = 0;
  std::vector<Index> value_cols;  // empty = every column except date_col
  bool percent_mode = true;
  PanelKind kind = PanelKind::Returns;
};

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  out.push_back(cell);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

}  // namespace detail

/// Parse CSV text (header row + one row per period). Row indices in error
/// messages are 1-based data rows.
inline Panel parse_panel_csv(std::istream& in, const CsvLayout& layout) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    header = detail::split_csv_line(line);
    break;
  }
  require(!header.empty(), ErrorCode::EmptyPanel, "missing header row");
  const Index ncols = static_cast<Index>(header.size());
  require(layout.date_col >= 0 && layout.date_col < ncols, ErrorCode::MalformedCsv,
          "date column out of range");

  std::vector<Index> cols = layout.value_cols;
  if (cols.empty()) {
    for (Index c = 0; c < ncols; ++c)
      if (c != layout.date_col) cols.push_back(c);
  }
  for (Index c : cols) {
    require(c >= 0 && c < ncols && c != layout.date_col, ErrorCode::MalformedCsv,
            "value column " + std::to_string(c) + " out of range");
  }
  require(!cols.empty(), ErrorCode::EmptyPanel, "no value columns");

  Panel p;
  for (Index c : cols) p.names.push_back(header[static_cast<std::size_t>(c)]);
  std::vector<std::vector<double>> rows;
  std::size_t row_index = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++row_index;
    const auto cells = detail::split_csv_line(line);
    require(static_cast<Index>(cells.size()) == ncols, ErrorCode::MalformedCsv,
            "row " + std::to_string(row_index) + " has " + std::to_string(cells.size()) +
                " cells, expected " + std::to_string(ncols));
    p.periods.push_back(cells[static_cast<std::size_t>(layout.date_col)]);
    std::vector<double> vals;
    vals.reserve(cols.size());
    for (Index c : cols) {
      const auto& cell = cells[static_cast<std::size_t>(c)];
      const auto v = detail::parse_double(cell);
      require(v.has_value(), ErrorCode::MalformedCsv,
              "row " + std::to_string(row_index) + " column '" + header[static_cast<std::size_t>(c)] +
                  "': cannot parse '" + cell + "'");
      double x = *v;
      if (layout.percent_mode) {
        x = layout.kind == PanelKind::Returns ? 1.0 + x / 100.0 : x / 100.0;
      }
      vals.push_back(x);
    }
    rows.push_back(std::move(vals));
  }
  require(!rows.empty(), ErrorCode::EmptyPanel, "no data rows");

  {
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < p.periods.size(); ++i) {
      const auto [it, inserted] = seen.emplace(p.periods[i], i + 1);
      require(inserted, ErrorCode::MalformedCsv,
              "duplicate period '" + p.periods[i] + "' at row " + std::to_string(i + 1));
    }
  }

  p.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t j = 0; j < cols.size(); ++j)
      p.values(static_cast<Index>(t), static_cast<Index>(j)) = rows[t][j];

  // Files are expected chronological; tolerate unsorted input by sorting.
  if (!std::is_sorted(p.periods.begin(), p.periods.end())) {
    std::vector<std::size_t> order(p.periods.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return p.periods[a] < p.periods[b]; });
    Panel sorted;
    sorted.names = p.names;
    sorted.values.resize(p.values.rows(), p.values.cols());
    for (std::size_t i = 0; i < order.size(); ++i) {
      sorted.periods.push_back(p.periods[order[i]]);
      sorted.values.row(static_cast<Index>(i)) = p.values.row(static_cast<Index>(order[i]));
    }
    p = std::move(sorted);
  }
  return p;
}

inline Panel load_panel_csv(const std::string& path, const CsvLayout& layout) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::MalformedCsv, "cannot open '" + path + "'");
  return parse_panel_csv(in, layout);
}

inline ReturnPanel load_returns_csv(const std::string& path, bool percent_mode = true,
                                    std::vector<Index> value_cols = {}) {
  CsvLayout layout{0, std::move(value_cols), percent_mode, PanelKind::Returns};
  ReturnPanel r{load_panel_csv(path, layout)};
  r.validate(2);
  return r;
}

inline FactorPanel load_factors_csv(const std::string& path, bool percent_mode = true,
                                    std::vector<Index> value_cols = {}) {
  CsvLayout layout{0, std::move(value_cols), percent_mode, PanelKind::Factors};
  FactorPanel g{load_panel_csv(path, layout)};
  g.validate(2);
  return g;
}

inline void write_panel_csv(std::ostream& out, const Panel& p, std::string_view date_header = "date") {
  out << date_header;
  for (const auto& n : p.names) out << ',' << n;
  out << '\n';
  for (Index t = 0; t < p.values.rows(); ++t) {
    out << p.periods[static_cast<std::size_t>(t)];
    for (Index j = 0; j < p.values.cols(); ++j) out << ',' << detail::format_double(p.values(t, j));
    out << '\n';
  }
}

inline void write_panel_csv(const std::string& path, const Panel& p) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::MalformedCsv, "cannot write '" + path + "'");
  write_panel_csv(out, p);
}

template <typename P>
P select_rows(const P& p, const std::vector<Index>& rows) {
  P out;
  out.names = p.names;
  out.values.resize(static_cast<Index>(rows.size()), p.values.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.periods.push_back(p.periods[static_cast<std::size_t>(rows[i])]);
    out.values.row(static_cast<Index>(i)) = p.values.row(rows[i]);
  }
  return out;
}

template <typename P>
P slice_rows(const P& p, Index begin, Index count) {
  std::vector<Index> rows(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) rows[static_cast<std::size_t>(i)] = begin + i;
  return select_rows(p, rows);
}

template <typename P>
P select_columns(const P& p, const std::vector<Index>& cols) {
  P out;
  out.periods = p.periods;
  out.values.resize(p.values.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    require(cols[j] >= 0 && cols[j] < p.values.cols(), ErrorCode::InvalidArgument,
            "column index " + std::to_string(cols[j]) + " out of range");
    out.names.push_back(p.names[static_cast<std::size_t>(cols[j])]);
    out.values.col(static_cast<Index>(j)) = p.values.col(cols[j]);
  }
  return out;
}

/// Restrict both panels to their common periods (sorted).
inline std::pair<ReturnPanel, FactorPanel> align(const ReturnPanel& r, const FactorPanel& g) {
  std::map<std::string, Index> g_index;
  for (std::size_t i = 0; i < g.periods.size(); ++i) g_index.emplace(g.periods[i], static_cast<Index>(i));
  std::vector<std::pair<std::string, std::pair<Index, Index>>> common;
  for (std::size_t i = 0; i < r.periods.size(); ++i) {
    const auto it = g_index.find(r.periods[i]);
    if (it != g_index.end()) common.push_back({r.periods[i], {static_cast<Index>(i), it->second}});
  }
  require(!common.empty(), ErrorCode::NoOverlap, "return and factor panels share no periods");
  std::sort(common.begin(), common.end());
  std::vector<Index> rr, gg;
  for (const auto& c : common) {
    rr.push_back(c.second.first);
    gg.push_back(c.second.second);
  }
  return {select_rows(r, rr), select_rows(g, gg)};
}

/// Prepend a constant column and demean the factors.
inline AugmentedFactors augment(const MatrixXd& g) {
  require(g.rows() >= 2, ErrorCode::EmptyPanel, "augment needs T >= 2");
  AugmentedFactors a;
  a.factor_mean = g.colwise().mean().transpose();
  a.values.resize(g.rows(), g.cols() + 1);
  a.values.col(0).setOnes();
  a.values.rightCols(g.cols()) = g.rowwise() - a.factor_mean.transpose();
  return a;
}

inline AugmentedFactors augment(const FactorPanel& g) { return augment(g.values); }

}  // namespace hjrobust

#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "panelfactor/errors.hpp"
#include "panelfactor/numeric.hpp"

namespace panelfactor {

struct ColumnMapping {
  std::string unit = "unit";
  std::string time = "time";
  std::string y = "y";
  std::vector<std::string> x;
  std::vector<std::string> w;
  // x columns the caller asserts vary only over time; validated on load.
  std::vector<std::string> declared_time_only;
};

using VecView = Eigen::Ref<const Eigen::VectorXd>;
using MatView = Eigen::Ref<const Eigen::MatrixXd, 0, Eigen::OuterStride<>>;

// Balanced N x T panel in unit-major row order: row(i, t) = i*T + t.
// Immutable after construction; safe to share read-only across workers.
class PanelDataset {
 public:
  struct UnitBlock {
    VecView y;
    MatView x;
    MatView w;
  };

  static PanelDataset from_arrays(Eigen::VectorXd y, Eigen::MatrixXd x, Eigen::MatrixXd w,
                                  std::vector<std::string> unit_ids,
                                  std::vector<std::string> time_ids,
                                  const std::vector<int>& declared_time_only_x = {}) {
    PanelDataset ds;
    ds.n_units_ = static_cast<int>(unit_ids.size());
    ds.n_periods_ = static_cast<int>(time_ids.size());
    require(ds.n_units_ >= 1 && ds.n_periods_ >= 1, errc::invalid_argument,
            "panel needs at least one unit and one period");
    Eigen::Index n = static_cast<Eigen::Index>(ds.n_units_) * ds.n_periods_;
    require(y.size() == n, errc::dimension_mismatch,
            "y has " + std::to_string(y.size()) + " rows, expected N*T = " + std::to_string(n));
    require(x.rows() == n && w.rows() == n, errc::dimension_mismatch,
            "x and w must have N*T rows");
    require(x.cols() >= 1, errc::invalid_argument, "need at least one regressor column");
    require(w.cols() >= 1, errc::invalid_argument, "need at least one smoothing covariate");
    for (std::size_t a = 0; a < unit_ids.size(); ++a)
      for (std::size_t b = a + 1; b < unit_ids.size(); ++b)
        require(unit_ids[a] != unit_ids[b], errc::duplicate_cell,
                "duplicate unit id '" + unit_ids[a] + "'");
    for (std::size_t a = 0; a < time_ids.size(); ++a)
      for (std::size_t b = a + 1; b < time_ids.size(); ++b)
        require(time_ids[a] != time_ids[b], errc::duplicate_cell,
                "duplicate time id '" + time_ids[a] + "'");
    auto check_finite = [](const auto& m, const char* name) {
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
          require(std::isfinite(m(r, c)), errc::non_finite_value,
                  std::string(name) + " has a non-finite value at row " + std::to_string(r + 1) +
                      ", column " + std::to_string(c + 1));
    };
    check_finite(y, "y");
    check_finite(x, "x");
    check_finite(w, "w");
    ds.y_ = std::move(y);
    ds.x_ = std::move(x);
    ds.w_ = std::move(w);
    ds.unit_ids_ = std::move(unit_ids);
    ds.time_ids_ = std::move(time_ids);
    ds.detect_time_only();
    for (int c : declared_time_only_x) {
      require(c >= 0 && c < ds.d_x(), errc::index_out_of_range,
              "declared time-only column index out of range");
      require(ds.time_only_x_[static_cast<std::size_t>(c)] != 0,
              errc::time_varying_column_violation,
              "column " + std::to_string(c + 1) +
                  " was declared time-only but varies within a period");
    }
    return ds;
  }

  int n_units() const { return n_units_; }
  int n_periods() const { return n_periods_; }
  Eigen::Index n_rows() const { return y_.size(); }
  int d_x() const { return static_cast<int>(x_.cols()); }
  int d_w() const { return static_cast<int>(w_.cols()); }
  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::MatrixXd& x() const { return x_; }
  const Eigen::MatrixXd& w() const { return w_; }
  const std::vector<std::string>& unit_ids() const { return unit_ids_; }
  const std::vector<std::string>& time_ids() const { return time_ids_; }
  // 1 where the x column is constant across units within every period.
  const std::vector<std::uint8_t>& time_only_x() const { return time_only_x_; }

  Eigen::Index row(int i, int t) const {
    require(i >= 0 && i < n_units_, errc::index_out_of_range,
            "unit index " + std::to_string(i) + " outside [0," + std::to_string(n_units_) + ")");
    require(t >= 0 && t < n_periods_, errc::index_out_of_range,
            "time index " + std::to_string(t) + " outside [0," + std::to_string(n_periods_) + ")");
    return static_cast<Eigen::Index>(i) * n_periods_ + t;
  }

  UnitBlock unit_block(int i) const {
    require(i >= 0 && i < n_units_, errc::index_out_of_range,
            "unit index " + std::to_string(i) + " outside [0," + std::to_string(n_units_) + ")");
    Eigen::Index lo = static_cast<Eigen::Index>(i) * n_periods_;
    return UnitBlock{y_.segment(lo, n_periods_), x_.middleRows(lo, n_periods_),
                     w_.middleRows(lo, n_periods_)};
  }

 private:
  void detect_time_only() {
    time_only_x_.assign(static_cast<std::size_t>(d_x()), 1);
    for (int c = 0; c < d_x(); ++c) {
      for (int t = 0; t < n_periods_ && time_only_x_[static_cast<std::size_t>(c)]; ++t) {
        double v0 = x_(row(0, t), c);
        for (int i = 1; i < n_units_; ++i) {
          if (x_(row(i, t), c) != v0) {
            time_only_x_[static_cast<std::size_t>(c)] = 0;
            break;
          }
        }
      }
    }
  }

  Eigen::VectorXd y_;
  Eigen::MatrixXd x_, w_;
  std::vector<std::string> unit_ids_, time_ids_;
  std::vector<std::uint8_t> time_only_x_;
  int n_units_ = 0, n_periods_ = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.emplace_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

}  // namespace detail

// Long-format CSV loader. Rows may arrive in any order; the panel is
// assembled unit-major with units in first-appearance order and periods
// sorted ascending (numerically when every time id parses as a number,
// lexicographically otherwise).
inline PanelDataset load_csv(const std::filesystem::path& path, const ColumnMapping& mapping) {
  require(!mapping.x.empty(), errc::invalid_argument, "mapping needs at least one x column");
  require(!mapping.w.empty(), errc::invalid_argument, "mapping needs at least one w column");
  std::ifstream in(path);
  require(in.good(), errc::io_error, "cannot open '" + path.string() + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), errc::io_error,
          "'" + path.string() + "' is empty");
  std::vector<std::string> header = detail::split_csv_line(line);
  auto find_col = [&](const std::string& name) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return static_cast<int>(c);
    raise(errc::missing_column, "column '" + name + "' not found in '" + path.string() + "'");
  };
  int col_unit = find_col(mapping.unit);
  int col_time = find_col(mapping.time);
  int col_y = find_col(mapping.y);
  std::vector<int> col_x, col_w;
  for (const auto& name : mapping.x) col_x.push_back(find_col(name));
  for (const auto& name : mapping.w) col_w.push_back(find_col(name));

  struct RawRow {
    int unit, time;
    double y;
    std::vector<double> x, w;
  };
  std::vector<RawRow> rows;
  std::vector<std::string> units, times;
  std::unordered_map<std::string, int> unit_index, time_index;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> fields = detail::split_csv_line(line);
    require(fields.size() == header.size(), errc::invalid_argument,
            "line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                " fields, header has " + std::to_string(header.size()));
    auto numeric = [&](int c, const std::string& name) {
      auto v = detail::parse_double(fields[static_cast<std::size_t>(c)]);
      require(v.has_value() && std::isfinite(*v), errc::non_finite_value,
              "line " + std::to_string(line_no) + ", column '" + name + "': value '" +
                  fields[static_cast<std::size_t>(c)] + "' is not a finite number");
      return *v;
    };
    RawRow r;
    const std::string& u = fields[static_cast<std::size_t>(col_unit)];
    const std::string& t = fields[static_cast<std::size_t>(col_time)];
    auto [it_u, new_u] = unit_index.try_emplace(u, static_cast<int>(units.size()));
    if (new_u) units.push_back(u);
    auto [it_t, new_t] = time_index.try_emplace(t, static_cast<int>(times.size()));
    if (new_t) times.push_back(t);
    r.unit = it_u->second;
    r.time = it_t->second;
    r.y = numeric(col_y, mapping.y);
    for (std::size_t k = 0; k < col_x.size(); ++k) r.x.push_back(numeric(col_x[k], mapping.x[k]));
    for (std::size_t k = 0; k < col_w.size(); ++k) r.w.push_back(numeric(col_w[k], mapping.w[k]));
    rows.push_back(std::move(r));
  }
  require(!rows.empty(), errc::invalid_argument, "'" + path.string() + "' has no data rows");

  // Sort periods; remap time indices to the sorted order.
  std::vector<int> time_order(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) time_order[k] = static_cast<int>(k);
  bool all_numeric = true;
  std::vector<double> time_value(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    auto v = detail::parse_double(times[k]);
    if (!v) {
      all_numeric = false;
      break;
    }
    time_value[k] = *v;
  }
  std::sort(time_order.begin(), time_order.end(), [&](int a, int b) {
    if (all_numeric && time_value[a] != time_value[b]) return time_value[a] < time_value[b];
    return times[static_cast<std::size_t>(a)] < times[static_cast<std::size_t>(b)];
  });
  std::vector<int> time_rank(times.size());
  std::vector<std::string> times_sorted(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    time_rank[static_cast<std::size_t>(time_order[k])] = static_cast<int>(k);
    times_sorted[k] = times[static_cast<std::size_t>(time_order[k])];
  }

  int n_units = static_cast<int>(units.size());
  int n_periods = static_cast<int>(times.size());
  Eigen::Index n = static_cast<Eigen::Index>(n_units) * n_periods;
  int d_x = static_cast<int>(mapping.x.size());
  int d_w = static_cast<int>(mapping.w.size());
  Eigen::VectorXd y(n);
  Eigen::MatrixXd x(n, d_x), w(n, d_w);
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(n), 0);
  for (const RawRow& r : rows) {
    int t = time_rank[static_cast<std::size_t>(r.time)];
    Eigen::Index pos = static_cast<Eigen::Index>(r.unit) * n_periods + t;
    require(!seen[static_cast<std::size_t>(pos)], errc::duplicate_cell,
            "duplicate cell (unit '" + units[static_cast<std::size_t>(r.unit)] + "', time '" +
                times_sorted[static_cast<std::size_t>(t)] + "')");
    seen[static_cast<std::size_t>(pos)] = 1;
    y[pos] = r.y;
    for (int k = 0; k < d_x; ++k) x(pos, k) = r.x[static_cast<std::size_t>(k)];
    for (int k = 0; k < d_w; ++k) w(pos, k) = r.w[static_cast<std::size_t>(k)];
  }
  std::string missing;
  int n_missing = 0;
  for (int i = 0; i < n_units; ++i)
    for (int t = 0; t < n_periods; ++t)
      if (!seen[static_cast<std::size_t>(i) * n_periods + static_cast<std::size_t>(t)]) {
        ++n_missing;
        if (n_missing <= 8)
          missing += " (" + units[static_cast<std::size_t>(i)] + ", " +
                     times_sorted[static_cast<std::size_t>(t)] + ")";
      }
  require(n_missing == 0, errc::unbalanced_panel,
          std::to_string(n_missing) + " missing cell(s):" + missing +
              (n_missing > 8 ? " ..." : ""));

  std::vector<int> declared;
  for (const auto& name : mapping.declared_time_only) {
    auto it = std::find(mapping.x.begin(), mapping.x.end(), name);
    require(it != mapping.x.end(), errc::invalid_argument,
            "declared time-only column '" + name + "' is not an x column");
    declared.push_back(static_cast<int>(it - mapping.x.begin()));
  }
  return PanelDataset::from_arrays(std::move(y), std::move(x), std::move(w), std::move(units),
                                   std::move(times_sorted), declared);
}

// Writes the panel back out unit-major; numbers use shortest round-trip
// formatting so a load of the written file reproduces every double exactly.
inline void write_csv(const PanelDataset& ds, const std::filesystem::path& path,
                      const ColumnMapping& mapping) {
  require(static_cast<int>(mapping.x.size()) == ds.d_x(), errc::dimension_mismatch,
          "mapping has " + std::to_string(mapping.x.size()) + " x names, dataset has " +
              std::to_string(ds.d_x()));
  require(static_cast<int>(mapping.w.size()) == ds.d_w(), errc::dimension_mismatch,
          "mapping has " + std::to_string(mapping.w.size()) + " w names, dataset has " +
              std::to_string(ds.d_w()));
  std::ofstream out(path);
  require(out.good(), errc::io_error, "cannot write '" + path.string() + "'");
  out << mapping.unit << ',' << mapping.time << ',' << mapping.y;
  for (const auto& name : mapping.x) out << ',' << name;
  for (const auto& name : mapping.w) out << ',' << name;
  out << '\n';
  for (int i = 0; i < ds.n_units(); ++i) {
    for (int t = 0; t < ds.n_periods(); ++t) {
      Eigen::Index r = ds.row(i, t);
      out << ds.unit_ids()[static_cast<std::size_t>(i)] << ','
          << ds.time_ids()[static_cast<std::size_t>(t)] << ',' << format_double(ds.y()[r]);
      for (int c = 0; c < ds.d_x(); ++c) out << ',' << format_double(ds.x()(r, c));
      for (int c = 0; c < ds.d_w(); ++c) out << ',' << format_double(ds.w()(r, c));
      out << '\n';
    }
  }
  require(out.good(), errc::io_error, "write to '" + path.string() + "' failed");
}

}  // namespace panelfactor

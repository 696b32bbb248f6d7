#pragma once

#include <algorithm>
#include <chrono>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "plf/error.hpp"
#include "plf/timeseries.hpp"
#include "plf/util.hpp"

namespace plf {

/// Humidity index 100 - (drybulb - dewpoint). Deliberately unclamped.
inline double relative_humidity(double drybulb, double dewpoint) { return 100.0 - (drybulb - dewpoint); }

struct CalendarFlags {
  bool month = true;
  bool day_of_week = true;
  bool hour_of_day = true;

  bool operator==(const CalendarFlags&) const = default;
};

struct FeatureSpec {
  std::vector<int> demand_lags;   // hours, each >= 1
  std::vector<int> weather_lags;  // hours, each >= 0
  CalendarFlags calendar;

  bool operator==(const FeatureSpec&) const = default;

  int max_lag() const {
    int lag = 0;
    for (int k : demand_lags) lag = std::max(lag, k);
    for (int k : weather_lags) lag = std::max(lag, k);
    return lag;
  }
};

/// Lags 1..27, 143..145 and 166..168 for demand; 0..24 for temperature and humidity.
inline FeatureSpec default_feature_spec() {
  FeatureSpec spec;
  for (int k = 1; k <= 27; ++k) spec.demand_lags.push_back(k);
  for (int k : {143, 144, 145, 166, 167, 168}) spec.demand_lags.push_back(k);
  for (int k = 0; k <= 24; ++k) spec.weather_lags.push_back(k);
  return spec;
}

inline void validate(FeatureSpec& spec) {
  if (spec.demand_lags.empty()) throw Error(ErrorCode::InvalidSpec, "at least one demand lag required");
  for (int k : spec.demand_lags) {
    if (k < 1) throw Error(ErrorCode::InvalidSpec, "demand lags must be >= 1, got " + std::to_string(k));
  }
  for (int k : spec.weather_lags) {
    if (k < 0) throw Error(ErrorCode::InvalidSpec, "weather lags must be >= 0, got " + std::to_string(k));
  }
  for (auto* lags : {&spec.demand_lags, &spec.weather_lags}) {
    std::sort(lags->begin(), lags->end());
    lags->erase(std::unique(lags->begin(), lags->end()), lags->end());
  }
}

/// Named feature columns with aligned hour-ahead targets. Row-major storage.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;

  FeatureMatrix(std::vector<std::string> column_names, std::vector<double> values, std::vector<double> targets,
                std::vector<Instant> instants)
      : names_(std::move(column_names)),
        values_(std::move(values)),
        targets_(std::move(targets)),
        instants_(std::move(instants)) {
    if (targets_.size() != instants_.size() || values_.size() != targets_.size() * names_.size()) {
      throw Error(ErrorCode::LengthMismatch, "feature matrix dimensions disagree");
    }
    index_.reserve(names_.size());
    for (std::size_t c = 0; c < names_.size(); ++c) {
      if (!index_.emplace(names_[c], c).second) throw Error(ErrorCode::DuplicateColumn, names_[c]);
    }
  }

  std::size_t rows() const { return targets_.size(); }
  std::size_t cols() const { return names_.size(); }
  bool empty() const { return targets_.empty(); }

  const std::vector<std::string>& column_names() const { return names_; }
  const std::vector<double>& targets() const { return targets_; }
  const std::vector<Instant>& instants() const { return instants_; }
  const std::vector<double>& values() const { return values_; }

  double operator()(std::size_t r, std::size_t c) const { return values_[r * names_.size() + c]; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * names_.size(), names_.size()};
  }

  std::optional<std::size_t> column_index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<double> column(std::size_t c) const {
    std::vector<double> out(rows());
    for (std::size_t r = 0; r < rows(); ++r) out[r] = (*this)(r, c);
    return out;
  }

  bool operator==(const FeatureMatrix& other) const {
    return names_ == other.names_ && values_ == other.values_ && targets_ == other.targets_ &&
           instants_ == other.instants_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<double> values_;
  std::vector<double> targets_;
  std::vector<Instant> instants_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline std::string demand_lag_name(int k) { return "demand_lag_" + std::to_string(k); }
inline std::string temp_lag_name(int k) { return "temp_lag_" + std::to_string(k); }
inline std::string humid_lag_name(int k) { return "humid_lag_" + std::to_string(k); }

inline constexpr const char* kPointForecastColumn = "point_forecast";

/// Emits one row per instant with full lag history. Column order: demand lags,
/// temperature lags, humidity lags, then month_1..12, dow_0..6 (Sunday = 0), hour_0..23.
inline FeatureMatrix build_matrix(const Series& series, FeatureSpec spec) {
  validate(spec);
  const auto max_lag = static_cast<std::size_t>(spec.max_lag());
  if (series.size() <= max_lag) {
    throw Error(ErrorCode::SeriesTooShort, "series of " + std::to_string(series.size()) +
                                               " hours cannot supply max lag " + std::to_string(max_lag));
  }

  std::vector<std::string> names;
  for (int k : spec.demand_lags) names.push_back(demand_lag_name(k));
  for (int k : spec.weather_lags) names.push_back(temp_lag_name(k));
  for (int k : spec.weather_lags) names.push_back(humid_lag_name(k));
  if (spec.calendar.month) {
    for (int m = 1; m <= 12; ++m) names.push_back("month_" + std::to_string(m));
  }
  if (spec.calendar.day_of_week) {
    for (int d = 0; d <= 6; ++d) names.push_back("dow_" + std::to_string(d));
  }
  if (spec.calendar.hour_of_day) {
    for (int h = 0; h <= 23; ++h) names.push_back("hour_" + std::to_string(h));
  }

  const std::size_t n_rows = series.size() - max_lag;
  const std::size_t n_cols = names.size();
  std::vector<double> values(n_rows * n_cols, 0.0);
  std::vector<double> targets(n_rows);
  std::vector<Instant> instants(n_rows);
  const auto& rec = series.records();

  for (std::size_t r = 0; r < n_rows; ++r) {
    const std::size_t t = r + max_lag;
    double* out = values.data() + r * n_cols;
    for (int k : spec.demand_lags) *out++ = rec[t - static_cast<std::size_t>(k)].demand;
    for (int k : spec.weather_lags) *out++ = rec[t - static_cast<std::size_t>(k)].drybulb;
    for (int k : spec.weather_lags) {
      const auto& past = rec[t - static_cast<std::size_t>(k)];
      *out++ = relative_humidity(past.drybulb, past.dewpoint);
    }
    const Instant instant = rec[t].timestamp;
    const auto day = std::chrono::floor<std::chrono::days>(instant);
    if (spec.calendar.month) {
      const auto month = static_cast<unsigned>(std::chrono::year_month_day{day}.month());
      out[month - 1] = 1.0;
      out += 12;
    }
    if (spec.calendar.day_of_week) {
      out[std::chrono::weekday{day}.c_encoding()] = 1.0;
      out += 7;
    }
    if (spec.calendar.hour_of_day) {
      out[(instant - day).count()] = 1.0;
    }
    targets[r] = rec[t].demand;
    instants[r] = instant;
  }
  return FeatureMatrix(std::move(names), std::move(values), std::move(targets), std::move(instants));
}

/// Column subset in the order given by `keep`.
inline FeatureMatrix project(const FeatureMatrix& matrix, const std::vector<std::string>& keep) {
  std::vector<std::size_t> cols;
  cols.reserve(keep.size());
  for (const auto& name : keep) {
    auto c = matrix.column_index(name);
    if (!c) throw Error(ErrorCode::UnknownColumn, name);
    cols.push_back(*c);
  }
  std::vector<double> values;
  values.reserve(matrix.rows() * cols.size());
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    for (auto c : cols) values.push_back(matrix(r, c));
  }
  return FeatureMatrix(keep, std::move(values), matrix.targets(), matrix.instants());
}

inline FeatureMatrix append_column(const FeatureMatrix& matrix, const std::string& name,
                                   std::span<const double> column) {
  if (column.size() != matrix.rows()) {
    throw Error(ErrorCode::LengthMismatch, "column '" + name + "' has " + std::to_string(column.size()) +
                                               " values for " + std::to_string(matrix.rows()) + " rows");
  }
  if (matrix.column_index(name)) throw Error(ErrorCode::DuplicateColumn, name);
  auto names = matrix.column_names();
  names.push_back(name);
  std::vector<double> values;
  values.reserve(matrix.rows() * names.size());
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    auto row = matrix.row(r);
    values.insert(values.end(), row.begin(), row.end());
    values.push_back(column[r]);
  }
  return FeatureMatrix(std::move(names), std::move(values), matrix.targets(), matrix.instants());
}

/// Rows whose instant lies in [from, to).
inline FeatureMatrix select_rows(const FeatureMatrix& matrix, Instant from, Instant to) {
  const auto& inst = matrix.instants();
  const auto lo = std::lower_bound(inst.begin(), inst.end(), from) - inst.begin();
  const auto hi = std::max(lo, std::lower_bound(inst.begin(), inst.end(), to) - inst.begin());
  const auto width = static_cast<std::ptrdiff_t>(matrix.cols());
  std::vector<double> values(matrix.values().begin() + lo * width, matrix.values().begin() + hi * width);
  std::vector<double> targets(matrix.targets().begin() + lo, matrix.targets().begin() + hi);
  std::vector<Instant> instants(inst.begin() + lo, inst.begin() + hi);
  return FeatureMatrix(matrix.column_names(), std::move(values), std::move(targets), std::move(instants));
}

/// First `count` rows; used for validation holdouts.
inline FeatureMatrix head_rows(const FeatureMatrix& matrix, std::size_t count) {
  count = std::min(count, matrix.rows());
  if (count == matrix.rows()) return matrix;
  const auto& inst = matrix.instants();
  return select_rows(matrix, inst.front(), inst[count]);
}

inline FeatureMatrix tail_rows(const FeatureMatrix& matrix, std::size_t from_row) {
  if (from_row >= matrix.rows()) return select_rows(matrix, Instant::max(), Instant::max());
  return select_rows(matrix, matrix.instants()[from_row], Instant::max());
}

inline void write_csv(const FeatureMatrix& matrix, std::ostream& out) {
  for (const auto& name : matrix.column_names()) out << name << ',';
  out << "target\n";
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    for (double v : matrix.row(r)) out << format_double(v) << ',';
    out << format_double(matrix.targets()[r]) << '\n';
  }
}

}  // namespace plf

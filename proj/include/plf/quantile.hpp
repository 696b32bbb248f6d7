#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plf/error.hpp"
#include "plf/timeseries.hpp"
#include "plf/util.hpp"

namespace plf {

/// Pinball loss: (1-q)(pred-actual) when over-forecasting, q(actual-pred) otherwise.
inline double pinball(double prediction, double actual, double q) {
  check_level(q);
  return prediction >= actual ? (1.0 - q) * (prediction - actual) : q * (actual - prediction);
}

/// 0.05, 0.10, ..., 0.95.
inline std::vector<double> default_levels() {
  std::vector<double> levels;
  for (int i = 1; i <= 19; ++i) levels.push_back(i / 20.0);
  return levels;
}

inline void validate_levels(std::span<const double> levels) {
  if (levels.empty()) throw Error(ErrorCode::InvalidQuantile, "no quantile levels");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    check_level(levels[i]);
    if (i > 0 && !(levels[i] > levels[i - 1])) {
      throw Error(ErrorCode::InvalidQuantile, "quantile levels must be strictly ascending");
    }
  }
}

inline std::optional<std::size_t> find_level(std::span<const double> levels, double q) {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (std::abs(levels[i] - q) < 1e-9) return i;
  }
  return std::nullopt;
}

/// Column label for a level: 0.05 -> "q05", 0.5 -> "q50", 0.125 -> "q12.5".
inline std::string level_label(double q) {
  const double pct = std::round(q * 1e6) / 1e4;
  if (pct == std::floor(pct)) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "q%02d", static_cast<int>(pct));
    return buf;
  }
  return "q" + format_double(pct);
}

/// Per-instant quantile predictions; every row is non-decreasing across levels.
class QuantileForecast {
 public:
  QuantileForecast() = default;

  /// Rejects crossing rows. Use `sorted` to build from raw model outputs.
  QuantileForecast(std::vector<Instant> instants, std::vector<double> levels, std::vector<double> values,
                   std::size_t extrapolated_rows = 0)
      : instants_(std::move(instants)),
        levels_(std::move(levels)),
        values_(std::move(values)),
        extrapolated_rows_(extrapolated_rows) {
    validate_levels(levels_);
    if (values_.size() != instants_.size() * levels_.size()) {
      throw Error(ErrorCode::LengthMismatch, "forecast values do not match instants x levels");
    }
    for (std::size_t r = 0; r < rows(); ++r) {
      auto row_values = row(r);
      if (!std::is_sorted(row_values.begin(), row_values.end())) {
        throw Error(ErrorCode::InvalidQuantile, "crossing quantiles at " + format_instant(instants_[r]));
      }
    }
  }

  /// Sorts each row ascending. For pinball loss this never increases the total loss.
  static QuantileForecast sorted(std::vector<Instant> instants, std::vector<double> levels,
                                 std::vector<double> values, std::size_t extrapolated_rows = 0) {
    const std::size_t width = levels.size();
    if (width > 0) {
      for (std::size_t off = 0; off + width <= values.size(); off += width) {
        std::sort(values.begin() + static_cast<std::ptrdiff_t>(off),
                  values.begin() + static_cast<std::ptrdiff_t>(off + width));
      }
    }
    return QuantileForecast(std::move(instants), std::move(levels), std::move(values), extrapolated_rows);
  }

  std::size_t rows() const { return instants_.size(); }
  std::size_t width() const { return levels_.size(); }
  const std::vector<Instant>& instants() const { return instants_; }
  const std::vector<double>& levels() const { return levels_; }
  const std::vector<double>& values() const { return values_; }
  /// Rows whose inputs fell far outside the training distribution.
  std::size_t extrapolated_rows() const { return extrapolated_rows_; }

  double operator()(std::size_t r, std::size_t level) const { return values_[r * levels_.size() + level]; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * levels_.size(), levels_.size()};
  }

  std::vector<double> column(std::size_t level) const {
    std::vector<double> out(rows());
    for (std::size_t r = 0; r < rows(); ++r) out[r] = (*this)(r, level);
    return out;
  }

  bool non_crossing() const {
    for (std::size_t r = 0; r < rows(); ++r) {
      auto v = row(r);
      if (!std::is_sorted(v.begin(), v.end())) return false;
    }
    return true;
  }

  bool operator==(const QuantileForecast&) const = default;

 private:
  std::vector<Instant> instants_;
  std::vector<double> levels_;
  std::vector<double> values_;
  std::size_t extrapolated_rows_ = 0;
};

}  // namespace plf

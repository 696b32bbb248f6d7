#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plf/error.hpp"
#include "plf/quantile.hpp"

namespace plf {

/// Central prediction interval between two forecast levels.
struct IntervalSpec {
  double lower_level = 0.05;
  double upper_level = 0.95;
  double alpha = 0.10;

  static IntervalSpec between(double lower, double upper) {
    if (!(lower < upper)) throw Error(ErrorCode::InvalidSpec, "interval lower level must be below upper level");
    check_level(lower);
    check_level(upper);
    return {lower, upper, 1.0 - (upper - lower)};
  }
};

struct EvalReport {
  double mae = 0.0;
  double rmse = 0.0;
  std::optional<double> mape;  // percent; empty when an actual is zero
  double pi_width = 0.0;
  double pinball = 0.0;
  double winkler = 0.0;
  double picp = 0.0;
};

namespace detail {

inline void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(a) + " predictions vs " + std::to_string(b) + " actuals");
  }
}

inline std::size_t level_index(const QuantileForecast& forecast, double q) {
  auto idx = find_level(forecast.levels(), q);
  if (!idx) throw Error(ErrorCode::LevelNotForecast, "level " + format_double(q) + " not in forecast");
  return *idx;
}

}  // namespace detail

/// Mean pinball loss over every (instant, level) pair.
inline double mean_pinball(const QuantileForecast& forecast, std::span<const double> actuals) {
  detail::check_lengths(forecast.rows(), actuals.size());
  if (forecast.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < forecast.rows(); ++r) {
    for (std::size_t j = 0; j < forecast.width(); ++j) {
      total += pinball(forecast(r, j), actuals[r], forecast.levels()[j]);
    }
  }
  return total / static_cast<double>(forecast.rows() * forecast.width());
}

inline double winkler_score(double lower, double upper, double actual, double alpha) {
  const double width = upper - lower;
  if (actual < lower) return width + 2.0 * (lower - actual) / alpha;
  if (actual > upper) return width + 2.0 * (actual - upper) / alpha;
  return width;
}

/// Mean Winkler score of the interval described by `spec`.
inline double winkler(const QuantileForecast& forecast, std::span<const double> actuals,
                      const IntervalSpec& spec = {}) {
  detail::check_lengths(forecast.rows(), actuals.size());
  const auto lo = detail::level_index(forecast, spec.lower_level);
  const auto hi = detail::level_index(forecast, spec.upper_level);
  if (forecast.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < forecast.rows(); ++r) {
    total += winkler_score(forecast(r, lo), forecast(r, hi), actuals[r], spec.alpha);
  }
  return total / static_cast<double>(forecast.rows());
}

/// Fraction of actuals inside the closed interval [L, U].
inline double picp(const QuantileForecast& forecast, std::span<const double> actuals,
                   const IntervalSpec& spec = {}) {
  detail::check_lengths(forecast.rows(), actuals.size());
  const auto lo = detail::level_index(forecast, spec.lower_level);
  const auto hi = detail::level_index(forecast, spec.upper_level);
  if (forecast.rows() == 0) return 0.0;
  std::size_t covered = 0;
  for (std::size_t r = 0; r < forecast.rows(); ++r) {
    if (forecast(r, lo) <= actuals[r] && actuals[r] <= forecast(r, hi)) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(forecast.rows());
}

inline double mean_interval_width(const QuantileForecast& forecast, const IntervalSpec& spec = {}) {
  const auto lo = detail::level_index(forecast, spec.lower_level);
  const auto hi = detail::level_index(forecast, spec.upper_level);
  if (forecast.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < forecast.rows(); ++r) total += forecast(r, hi) - forecast(r, lo);
  return total / static_cast<double>(forecast.rows());
}

struct PointMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  std::optional<double> mape;  // percent
};

inline PointMetrics point_metrics(std::span<const double> predictions, std::span<const double> actuals) {
  detail::check_lengths(predictions.size(), actuals.size());
  PointMetrics out;
  if (actuals.empty()) return out;
  double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
  bool mape_defined = true;
  for (std::size_t i = 0; i < actuals.size(); ++i) {
    const double err = predictions[i] - actuals[i];
    abs_sum += std::abs(err);
    sq_sum += err * err;
    if (actuals[i] == 0.0) {
      mape_defined = false;
    } else {
      pct_sum += std::abs(err / actuals[i]);
    }
  }
  const auto n = static_cast<double>(actuals.size());
  out.mae = abs_sum / n;
  out.rmse = std::sqrt(sq_sum / n);
  if (mape_defined) out.mape = 100.0 * pct_sum / n;
  return out;
}

/// Full report; the point forecast is the median column.
inline EvalReport evaluate(const QuantileForecast& forecast, std::span<const double> actuals,
                           const IntervalSpec& spec = {}) {
  detail::check_lengths(forecast.rows(), actuals.size());
  const auto median = forecast.column(detail::level_index(forecast, 0.5));
  const auto point = point_metrics(median, actuals);
  EvalReport report;
  report.mae = point.mae;
  report.rmse = point.rmse;
  report.mape = point.mape;
  report.pi_width = mean_interval_width(forecast, spec);
  report.pinball = mean_pinball(forecast, actuals);
  report.winkler = winkler(forecast, actuals, spec);
  report.picp = picp(forecast, actuals, spec);
  return report;
}

}  // namespace plf

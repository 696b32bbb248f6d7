#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "plf/error.hpp"
#include "plf/util.hpp"

namespace plf {

/// Hour-resolution calendar instant, local time as recorded (no zone arithmetic).
using Instant = std::chrono::sys_time<std::chrono::hours>;

inline constexpr std::chrono::hours kHour{1};

inline Instant make_instant(int year, unsigned month, unsigned day, int hour = 0) {
  using namespace std::chrono;
  return sys_days{std::chrono::year{year} / std::chrono::month{month} / std::chrono::day{day}} + hours{hour};
}

inline std::string format_instant(Instant t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const auto hour = (t - day).count();
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:00", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hour));
  return buf;
}

/// Parses `YYYY-MM-DDTHH:00`; returns nullopt on any deviation from that form.
inline std::optional<Instant> parse_instant(std::string_view text) {
  if (text.size() != 16 || text[4] != '-' || text[7] != '-' || text[10] != 'T' || text[13] != ':' ||
      text[14] != '0' || text[15] != '0') {
    return std::nullopt;
  }
  auto digits = [&](std::size_t pos, std::size_t len, int& out) {
    out = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (text[i] < '0' || text[i] > '9') return false;
      out = out * 10 + (text[i] - '0');
    }
    return true;
  };
  int y = 0, m = 0, d = 0, h = 0;
  if (!digits(0, 4, y) || !digits(5, 2, m) || !digits(8, 2, d) || !digits(11, 2, h)) return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                           std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23) return std::nullopt;
  return sys_days{ymd} + hours{h};
}

struct HourlyRecord {
  Instant timestamp;
  double demand = 0.0;    // MW
  double drybulb = 0.0;   // degF
  double dewpoint = 0.0;  // degF

  bool operator==(const HourlyRecord&) const = default;
};

/// Dew point may exceed dry bulb by this much before a record is flagged.
inline constexpr double kDewpointTolerance = 0.5;

/// Time-ordered hourly observations for one zone. Spacing is exactly one hour.
class Series {
 public:
  Series() = default;

  Series(std::vector<HourlyRecord> records, std::string zone)
      : records_(std::move(records)), zone_(std::move(zone)) {
    for (std::size_t i = 0; i < records_.size(); ++i) {
      if (!(records_[i].demand >= 0.0)) {
        throw Error(ErrorCode::InvalidRecord,
                    "negative demand at " + format_instant(records_[i].timestamp));
      }
      if (i == 0) continue;
      const auto prev = records_[i - 1].timestamp;
      const auto cur = records_[i].timestamp;
      if (cur == prev) throw Error(ErrorCode::DuplicateTimestamp, format_instant(cur));
      if (cur < prev) {
        throw Error(ErrorCode::InvalidRecord, "timestamps not increasing at " + format_instant(cur));
      }
      if (cur - prev != kHour) {
        throw Error(ErrorCode::NonHourlyGap, "missing hour " + format_instant(prev + kHour));
      }
    }
  }

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::string& zone() const { return zone_; }
  const std::vector<HourlyRecord>& records() const { return records_; }
  const HourlyRecord& operator[](std::size_t i) const { return records_[i]; }

  Instant start() const { return records_.empty() ? Instant{} : records_.front().timestamp; }
  /// One past the last hour.
  Instant end() const { return records_.empty() ? Instant{} : records_.back().timestamp + kHour; }

  std::optional<std::size_t> index_of(Instant t) const {
    if (records_.empty() || t < start() || t >= end()) return std::nullopt;
    return static_cast<std::size_t>((t - start()).count());
  }

  /// Records in [from, to), clipped to the series range.
  Series slice(Instant from, Instant to) const {
    if (records_.empty() || to <= from) return Series({}, zone_);
    from = std::max(from, start());
    to = std::min(to, end());
    if (to <= from) return Series({}, zone_);
    const auto lo = static_cast<std::size_t>((from - start()).count());
    const auto hi = static_cast<std::size_t>((to - start()).count());
    return Series(std::vector<HourlyRecord>(records_.begin() + static_cast<std::ptrdiff_t>(lo),
                                            records_.begin() + static_cast<std::ptrdiff_t>(hi)),
                  zone_);
  }

  /// Indices whose dew point exceeds dry bulb beyond the sensor tolerance.
  std::vector<std::size_t> dewpoint_violations() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      if (records_[i].dewpoint > records_[i].drybulb + kDewpointTolerance) out.push_back(i);
    }
    return out;
  }

  bool operator==(const Series&) const = default;

 private:
  std::vector<HourlyRecord> records_;
  std::string zone_;
};

// ---------------------------------------------------------------------------
// CSV ingestion

inline constexpr std::string_view kSeriesHeader = "timestamp,demand_mw,drybulb_f,dewpoint_f";

namespace detail {

inline std::vector<std::string> split_fields(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(sep, pos);
    out.emplace_back(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

inline void strip_line_end(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace detail

/// Reads and sorts records without enforcing hourly spacing; duplicates are rejected.
inline std::vector<HourlyRecord> read_records(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MissingColumn, "empty file, expected header");
  detail::strip_line_end(line);
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const auto header = detail::split_fields(line);
  const auto expected = detail::split_fields(kSeriesHeader);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (i >= header.size() || header[i] != expected[i]) {
      throw Error(ErrorCode::MissingColumn, "expected column '" + expected[i] + "' at position " +
                                                std::to_string(i + 1));
    }
  }
  if (header.size() != expected.size()) {
    throw Error(ErrorCode::MissingColumn, "unexpected extra column '" + header[expected.size()] + "'");
  }

  std::vector<HourlyRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_line_end(line);
    if (line.empty()) continue;
    const auto fields = detail::split_fields(line);
    HourlyRecord rec;
    const auto ts = fields.size() == 4 ? parse_instant(fields[0]) : std::nullopt;
    if (!ts || !parse_double(fields[1], rec.demand) || !parse_double(fields[2], rec.drybulb) ||
        !parse_double(fields[3], rec.dewpoint)) {
      throw Error(ErrorCode::UnparseableRow, "line " + std::to_string(line_no));
    }
    if (rec.demand < 0.0) {
      throw Error(ErrorCode::InvalidRecord, "negative demand on line " + std::to_string(line_no));
    }
    rec.timestamp = *ts;
    records.push_back(rec);
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const HourlyRecord& a, const HourlyRecord& b) { return a.timestamp < b.timestamp; });
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].timestamp == records[i - 1].timestamp) {
      throw Error(ErrorCode::DuplicateTimestamp, format_instant(records[i].timestamp));
    }
  }
  return records;
}

inline Series load_csv(std::istream& in, std::string zone) {
  return Series(read_records(in), std::move(zone));
}

inline Series load_csv(const std::string& path, std::string zone) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return load_csv(in, std::move(zone));
}

inline void write_csv(const Series& series, std::ostream& out) {
  out << kSeriesHeader << '\n';
  for (const auto& r : series.records()) {
    out << format_instant(r.timestamp) << ',' << format_double(r.demand) << ','
        << format_double(r.drybulb) << ',' << format_double(r.dewpoint) << '\n';
  }
}

inline void write_csv(const Series& series, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  write_csv(series, out);
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
}

/// Fills missing hours by repeating the previous record. Only applied when requested.
inline std::vector<HourlyRecord> fill_forward(const std::vector<HourlyRecord>& sorted) {
  std::vector<HourlyRecord> out;
  out.reserve(sorted.size());
  for (const auto& rec : sorted) {
    while (!out.empty() && out.back().timestamp + kHour < rec.timestamp) {
      HourlyRecord copy = out.back();
      copy.timestamp += kHour;
      out.push_back(copy);
    }
    out.push_back(rec);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Partitioning

struct SplitSpec {
  Instant stage1_end;
  Instant stage2_end;
  Instant test_end;
};

struct Partitions {
  Series stage1;
  Series stage2;
  Series test;
};

inline void validate_split(const Series& series, const SplitSpec& spec) {
  if (series.empty() || !(series.start() < spec.stage1_end && spec.stage1_end < spec.stage2_end &&
                          spec.stage2_end <= spec.test_end && spec.test_end <= series.end())) {
    throw Error(ErrorCode::SpecOutOfRange,
                "need start < stage1_end < stage2_end <= test_end <= end for series [" +
                    format_instant(series.start()) + ", " + format_instant(series.end()) + ")");
  }
}

/// Half-open partitions; a boundary hour belongs to the later partition.
inline Partitions split(const Series& series, const SplitSpec& spec) {
  validate_split(series, spec);
  return {series.slice(series.start(), spec.stage1_end), series.slice(spec.stage1_end, spec.stage2_end),
          series.slice(spec.stage2_end, spec.test_end)};
}

// ---------------------------------------------------------------------------
// Synthetic generator

/// Shape of the synthetic demand/weather process.
struct SynthProfile {
  Instant start = make_instant(2013, 1, 1);
  std::string zone = "SYNTH";
  double base_mw = 1200.0;
  double daily_amp_mw = 180.0;
  double weekly_amp_mw = 60.0;
  // V-shaped weather coupling around a comfort temperature.
  double comfort_f = 62.0;
  double heating_slope = 4.0;   // MW per degF below comfort
  double cooling_slope = 10.0;  // MW per degF above comfort
  double ar_coef = 0.97;
  double noise_mw = 40.0;  // stationary std of the AR component
  double temp_mean_f = 48.0;
  double temp_seasonal_amp_f = 24.0;
  double temp_daily_amp_f = 8.0;
  double temp_noise_f = 3.0;
  double dewpoint_spread_f = 8.0;
};

/// Minimum synthetic length: the 168 h lag plus a week of warm-up.
inline constexpr std::size_t kMinSynthHours = 24 * 8;

inline Series synth_series(std::uint64_t seed, std::size_t n_hours, const SynthProfile& profile = {}) {
  if (n_hours < kMinSynthHours) {
    throw Error(ErrorCode::TooShort, "synthetic series needs at least " + std::to_string(kMinSynthHours) +
                                         " hours (the longest lag is 168), got " +
                                         std::to_string(n_hours));
  }
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Rng rng(seed);
  std::vector<HourlyRecord> records;
  records.reserve(n_hours);
  const double innovation = profile.noise_mw * std::sqrt(1.0 - profile.ar_coef * profile.ar_coef);
  double load_noise = profile.noise_mw * rng.normal();
  double temp_noise = profile.temp_noise_f * rng.normal();
  auto round_to = [](double v, double step) { return std::round(v / step) * step; };

  for (std::size_t i = 0; i < n_hours; ++i) {
    const Instant t = profile.start + std::chrono::hours{static_cast<long>(i)};
    const double hours = static_cast<double>(i);
    const auto day = std::chrono::floor<std::chrono::days>(t);
    const double hour_of_day = static_cast<double>((t - day).count());
    const double day_of_year =
        static_cast<double>((day - std::chrono::sys_days{std::chrono::year_month_day{day}.year() /
                                                          std::chrono::January / 1})
                                .count());

    temp_noise = 0.95 * temp_noise + profile.temp_noise_f * std::sqrt(1.0 - 0.95 * 0.95) * rng.normal();
    const double drybulb = profile.temp_mean_f -
                           profile.temp_seasonal_amp_f * std::cos(two_pi * (day_of_year - 15.0) / 365.25) +
                           profile.temp_daily_amp_f * std::cos(two_pi * (hour_of_day - 15.0) / 24.0) + temp_noise;
    const double spread = profile.dewpoint_spread_f * std::abs(rng.normal());

    const double daily = -std::cos(two_pi * (hour_of_day - 1.0) / 24.0) - 0.35 * std::cos(2.0 * two_pi * hour_of_day / 24.0);
    const double weekly = std::sin(two_pi * hours / 168.0);
    const double weather = drybulb >= profile.comfort_f ? profile.cooling_slope * (drybulb - profile.comfort_f)
                                                        : profile.heating_slope * (profile.comfort_f - drybulb);
    load_noise = profile.ar_coef * load_noise + innovation * rng.normal();
    const double demand = profile.base_mw + profile.daily_amp_mw * daily + profile.weekly_amp_mw * weekly +
                          weather + load_noise;

    const double rounded_drybulb = round_to(drybulb, 0.1);
    records.push_back({t, std::max(0.0, round_to(demand, 0.001)), rounded_drybulb,
                       round_to(rounded_drybulb - spread, 0.1)});
  }
  return Series(std::move(records), profile.zone);
}

}  // namespace plf

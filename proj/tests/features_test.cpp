#include "plf/features.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "test_helpers.hpp"

namespace plf {
namespace {

FeatureSpec small_spec() {
  FeatureSpec spec;
  spec.demand_lags = {1};
  spec.weather_lags = {0};
  return spec;
}

TEST(RelativeHumidity, SaturatedAndSpreadCases) {
  EXPECT_DOUBLE_EQ(relative_humidity(70.0, 70.0), 100.0);
  EXPECT_DOUBLE_EQ(relative_humidity(75.0, 60.0), 85.0);
  EXPECT_DOUBLE_EQ(relative_humidity(60.0, 75.0), 115.0);
}

TEST(RelativeHumidity, AffineInSpread) {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const double t = rng.uniform(-20, 110);
    const double spread = rng.uniform(-5, 40);
    EXPECT_NEAR(relative_humidity(t, t), 100.0, 1e-12);
    EXPECT_NEAR(relative_humidity(t, t - spread), 100.0 - spread, 1e-12 * 100.0);
  }
}

TEST(BuildMatrix, ColumnAndRowCounts) {
  auto s = synth_series(1, 200);
  auto m = build_matrix(s, small_spec());
  EXPECT_EQ(m.cols(), 46u);
  EXPECT_EQ(m.rows(), 199u);
  EXPECT_EQ(m.column_names()[0], "demand_lag_1");
  EXPECT_EQ(m.column_names()[1], "temp_lag_0");
  EXPECT_EQ(m.column_names()[2], "humid_lag_0");
  EXPECT_EQ(m.column_names()[3], "month_1");
  EXPECT_EQ(m.column_names()[15], "dow_0");
  EXPECT_EQ(m.column_names()[22], "hour_0");
  EXPECT_EQ(m.column_names()[45], "hour_23");
}

TEST(BuildMatrix, FridayAfternoonIndicators) {
  // 2013-01-04 is a Friday.
  auto s = synth_series(1, 200);
  auto m = build_matrix(s, small_spec());
  const Instant friday_3pm = make_instant(2013, 1, 4, 15);
  const auto& inst = m.instants();
  const auto r = static_cast<std::size_t>(std::find(inst.begin(), inst.end(), friday_3pm) - inst.begin());
  ASSERT_LT(r, m.rows());
  for (int d = 0; d <= 6; ++d) {
    EXPECT_EQ(m(r, *m.column_index("dow_" + std::to_string(d))), d == 5 ? 1.0 : 0.0);
  }
  for (int h = 0; h <= 23; ++h) {
    EXPECT_EQ(m(r, *m.column_index("hour_" + std::to_string(h))), h == 15 ? 1.0 : 0.0);
  }
  EXPECT_EQ(m(r, *m.column_index("month_1")), 1.0);
}

TEST(BuildMatrix, LagValuesMatchDirectLookup) {
  auto s = synth_series(2, 600);
  auto spec = default_feature_spec();
  auto m = build_matrix(s, spec);
  ASSERT_EQ(m.rows(), s.size() - 168);
  ASSERT_EQ(m.cols(), 33u + 25u + 25u + 43u);
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto r = rng.index(m.rows());
    const auto t = *s.index_of(m.instants()[r]);
    EXPECT_EQ(m.targets()[r], s[t].demand);
    for (int k : spec.demand_lags) {
      EXPECT_EQ(m(r, *m.column_index(demand_lag_name(k))), s[t - static_cast<std::size_t>(k)].demand);
    }
    for (int k : spec.weather_lags) {
      const auto& past = s[t - static_cast<std::size_t>(k)];
      EXPECT_EQ(m(r, *m.column_index(temp_lag_name(k))), past.drybulb);
      EXPECT_EQ(m(r, *m.column_index(humid_lag_name(k))), relative_humidity(past.drybulb, past.dewpoint));
    }
  }
}

TEST(BuildMatrix, OneHotGroupsSumToOne) {
  auto s = synth_series(2, 2000);
  auto m = build_matrix(s, small_spec());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double month = 0, dow = 0, hour = 0;
    for (int i = 1; i <= 12; ++i) month += m(r, *m.column_index("month_" + std::to_string(i)));
    for (int i = 0; i <= 6; ++i) dow += m(r, *m.column_index("dow_" + std::to_string(i)));
    for (int i = 0; i <= 23; ++i) hour += m(r, *m.column_index("hour_" + std::to_string(i)));
    ASSERT_EQ(month, 1.0);
    ASSERT_EQ(dow, 1.0);
    ASSERT_EQ(hour, 1.0);
  }
}

TEST(BuildMatrix, RowCountIndependentOfCalendarFlags) {
  auto s = synth_series(2, 400);
  auto spec = small_spec();
  spec.demand_lags = {1, 24, 168};
  spec.weather_lags = {0, 3};
  const auto full = build_matrix(s, spec);
  spec.calendar = {false, false, false};
  const auto bare = build_matrix(s, spec);
  EXPECT_EQ(full.rows(), s.size() - 168);
  EXPECT_EQ(bare.rows(), full.rows());
  EXPECT_EQ(bare.cols(), 3u + 2u + 2u);
}

TEST(BuildMatrix, SpecErrors) {
  auto s = synth_series(1, 200);
  FeatureSpec spec;
  spec.weather_lags = {0};
  EXPECT_PLF_ERROR(build_matrix(s, spec), ErrorCode::InvalidSpec);
  spec.demand_lags = {0};
  EXPECT_PLF_ERROR(build_matrix(s, spec), ErrorCode::InvalidSpec);
  spec.demand_lags = {1};
  spec.weather_lags = {-1};
  EXPECT_PLF_ERROR(build_matrix(s, spec), ErrorCode::InvalidSpec);
  EXPECT_PLF_ERROR(build_matrix(s.slice(s.start(), s.start() + std::chrono::hours{168}), default_feature_spec()),
                   ErrorCode::SeriesTooShort);
}

TEST(Project, IdentitySubsetAndUnknown) {
  auto m = build_matrix(synth_series(1, 200), small_spec());
  EXPECT_EQ(project(m, m.column_names()), m);
  auto one = project(m, {"demand_lag_1"});
  EXPECT_EQ(one.cols(), 1u);
  EXPECT_EQ(one.targets(), m.targets());
  EXPECT_EQ(one.column(0), m.column(0));
  auto reordered = project(m, {"temp_lag_0", "demand_lag_1"});
  EXPECT_EQ(reordered.column(1), m.column(0));
  EXPECT_PLF_ERROR(project(m, {"demand_lag_l"}), ErrorCode::UnknownColumn);
}

TEST(AppendColumn, ContractAndErrors) {
  auto m = build_matrix(synth_series(1, 200), small_spec());
  std::vector<double> values(m.rows(), 3.5);
  auto out = append_column(m, kPointForecastColumn, values);
  EXPECT_EQ(out.cols(), m.cols() + 1);
  EXPECT_EQ(out.column(out.cols() - 1), values);
  EXPECT_EQ(out.column(0), m.column(0));
  values.pop_back();
  EXPECT_PLF_ERROR(append_column(m, "x", values), ErrorCode::LengthMismatch);
  values.push_back(0.0);
  EXPECT_PLF_ERROR(append_column(m, "demand_lag_1", values), ErrorCode::DuplicateColumn);
}

TEST(SelectRows, HalfOpenInstantRange) {
  auto m = build_matrix(synth_series(1, 300), small_spec());
  const Instant from = m.instants()[10];
  const Instant to = m.instants()[20];
  auto sub = select_rows(m, from, to);
  ASSERT_EQ(sub.rows(), 10u);
  EXPECT_EQ(sub.instants().front(), from);
  EXPECT_EQ(sub.instants().back(), to - kHour);
  EXPECT_EQ(sub.row(0)[0], m.row(10)[0]);
}

TEST(FeatureCsv, HeaderIsColumnsPlusTarget) {
  auto m = build_matrix(synth_series(1, 200), small_spec());
  std::ostringstream out;
  write_csv(m, out);
  const auto text = out.str();
  const auto header = text.substr(0, text.find('\n'));
  EXPECT_EQ(header.rfind("demand_lag_1,temp_lag_0,humid_lag_0,month_1,", 0), 0u);
  EXPECT_EQ(header.substr(header.size() - 14), "hour_23,target");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 200);
}

}  // namespace
}  // namespace plf

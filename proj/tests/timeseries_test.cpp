#include "plf/timeseries.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_helpers.hpp"

namespace plf {
namespace {

Series parse(const std::string& text) {
  std::istringstream in(text);
  return load_csv(in, "T");
}

TEST(Instant, ParsesAndFormatsHourResolution) {
  auto t = parse_instant("2017-06-14T13:00");
  ASSERT_TRUE(t);
  EXPECT_EQ(*t, make_instant(2017, 6, 14, 13));
  EXPECT_EQ(format_instant(*t), "2017-06-14T13:00");
  EXPECT_FALSE(parse_instant("2017-06-14T13:30"));
  EXPECT_FALSE(parse_instant("2017-02-30T00:00"));
  EXPECT_FALSE(parse_instant("2017-06-14 13:00"));
  EXPECT_FALSE(parse_instant("2017-06-14T24:00"));
}

TEST(LoadCsv, WellFormedThreeRows) {
  auto s = parse(
      "timestamp,demand_mw,drybulb_f,dewpoint_f\n"
      "2013-01-01T00:00,1000.5,30,20\n"
      "2013-01-01T01:00,990,29.5,20.1\n"
      "2013-01-01T02:00,985.25,29,21\n");
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.zone(), "T");
  EXPECT_DOUBLE_EQ(s[2].demand, 985.25);
  EXPECT_EQ(s.end(), make_instant(2013, 1, 1, 3));
}

TEST(LoadCsv, SortsRowsAndToleratesCrlf) {
  auto s = parse(
      "timestamp,demand_mw,drybulb_f,dewpoint_f\r\n"
      "2013-01-01T02:00,3,0,0\r\n"
      "2013-01-01T00:00,1,0,0\r\n"
      "2013-01-01T01:00,2,0,0\r\n");
  ASSERT_EQ(s.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(s[i].timestamp, make_instant(2013, 1, 1, static_cast<int>(i)));
    EXPECT_DOUBLE_EQ(s[i].demand, static_cast<double>(i + 1));
  }
}

TEST(LoadCsv, GapNamesMissingHour) {
  try {
    parse(
        "timestamp,demand_mw,drybulb_f,dewpoint_f\n"
        "2013-01-01T00:00,1,0,0\n"
        "2013-01-01T02:00,1,0,0\n");
    FAIL() << "expected NonHourlyGap";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonHourlyGap);
    EXPECT_NE(std::string(e.what()).find("2013-01-01T01:00"), std::string::npos);
  }
}

TEST(LoadCsv, ErrorPaths) {
  EXPECT_PLF_ERROR(parse("timestamp,demand_mw,drybulb_f\n"), ErrorCode::MissingColumn);
  EXPECT_PLF_ERROR(parse("time,demand_mw,drybulb_f,dewpoint_f\n"), ErrorCode::MissingColumn);
  EXPECT_PLF_ERROR(parse("timestamp,demand_mw,drybulb_f,dewpoint_f\n2013-01-01T00:00,abc,0,0\n"),
                   ErrorCode::UnparseableRow);
  EXPECT_PLF_ERROR(parse("timestamp,demand_mw,drybulb_f,dewpoint_f\n2013-01-01T00:00,1,0\n"),
                   ErrorCode::UnparseableRow);
  EXPECT_PLF_ERROR(parse("timestamp,demand_mw,drybulb_f,dewpoint_f\n"
                         "2013-01-01T00:00,1,0,0\n2013-01-01T00:00,2,0,0\n"),
                   ErrorCode::DuplicateTimestamp);
  EXPECT_PLF_ERROR(parse("timestamp,demand_mw,drybulb_f,dewpoint_f\n2013-01-01T00:00,-1,0,0\n"),
                   ErrorCode::InvalidRecord);
  EXPECT_PLF_ERROR(load_csv("/nonexistent/file.csv", "X"), ErrorCode::Io);
}

TEST(LoadCsv, UnparseableRowCitesLine) {
  try {
    parse("timestamp,demand_mw,drybulb_f,dewpoint_f\n2013-01-01T00:00,1,0,0\nbad\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(LoadCsv, DewpointAboveDrybulbIsFlaggedNotRejected) {
  auto s = parse(
      "timestamp,demand_mw,drybulb_f,dewpoint_f\n"
      "2013-01-01T00:00,1,50,50.4\n"
      "2013-01-01T01:00,1,50,51\n");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.dewpoint_violations(), std::vector<std::size_t>{1});
}

TEST(FillForward, RepeatsPreviousRecordOnlyWhenAsked) {
  std::istringstream in(
      "timestamp,demand_mw,drybulb_f,dewpoint_f\n"
      "2013-01-01T00:00,1,0,0\n"
      "2013-01-01T03:00,4,0,0\n");
  auto filled = fill_forward(read_records(in));
  ASSERT_EQ(filled.size(), 4u);
  EXPECT_DOUBLE_EQ(filled[2].demand, 1.0);
  EXPECT_EQ(filled[2].timestamp, make_instant(2013, 1, 1, 2));
  EXPECT_NO_THROW(Series(filled, "F"));
}

TEST(CsvRoundTrip, WriteThenLoadReproducesSeries) {
  auto s = synth_series(3, 400);
  std::stringstream buf;
  write_csv(s, buf);
  const std::string first = buf.str();
  auto back = load_csv(buf, s.zone());
  EXPECT_EQ(back, s);
  std::stringstream again;
  write_csv(back, again);
  EXPECT_EQ(again.str(), first);
}

TEST(Split, FiveSyntheticYearsAtCalendarBoundaries) {
  // 2013..2017 with 2016 a leap year: 3*8760 + 8784 + 8760 hours.
  const std::size_t hours = 3 * 8760 + 8784 + 8760;
  auto s = synth_series(1, hours);
  auto parts = split(s, {make_instant(2016, 1, 1), make_instant(2017, 1, 1), make_instant(2018, 1, 1)});
  EXPECT_EQ(parts.stage1.size(), 26280u);
  EXPECT_EQ(parts.stage2.size(), 8784u);
  EXPECT_EQ(parts.test.size(), 8760u);
}

TEST(Split, BoundaryHourGoesToLaterPartition) {
  auto s = synth_series(1, 300);
  const Instant b1 = s.start() + std::chrono::hours{100};
  const Instant b2 = s.start() + std::chrono::hours{200};
  auto parts = split(s, {b1, b2, s.end()});
  EXPECT_EQ(parts.stage1.records().back().timestamp, b1 - kHour);
  EXPECT_EQ(parts.stage2.records().front().timestamp, b1);
  EXPECT_EQ(parts.test.records().front().timestamp, b2);
}

TEST(Split, DegenerateAndOutOfRangeSpecs) {
  auto s = synth_series(1, 300);
  const Instant mid = s.start() + std::chrono::hours{100};
  EXPECT_PLF_ERROR(split(s, {mid, mid, s.end()}), ErrorCode::SpecOutOfRange);
  EXPECT_PLF_ERROR(split(s, {s.start(), mid, s.end()}), ErrorCode::SpecOutOfRange);
  EXPECT_PLF_ERROR(split(s, {mid, mid + kHour, s.end() + kHour}), ErrorCode::SpecOutOfRange);
}

TEST(Split, PartitionsAreDisjointAndConcatenate) {
  Rng rng(99);
  auto s = synth_series(5, 500);
  for (int trial = 0; trial < 50; ++trial) {
    const long a = 1 + static_cast<long>(rng.index(400));
    const long b = a + 1 + static_cast<long>(rng.index(static_cast<std::size_t>(498 - a)));
    const long c = b + static_cast<long>(rng.index(static_cast<std::size_t>(500 - b + 1)));
    const SplitSpec spec{s.start() + std::chrono::hours{a}, s.start() + std::chrono::hours{b},
                         s.start() + std::chrono::hours{c}};
    auto parts = split(s, spec);
    std::vector<HourlyRecord> joined;
    for (const auto* p : {&parts.stage1, &parts.stage2, &parts.test}) {
      joined.insert(joined.end(), p->records().begin(), p->records().end());
    }
    EXPECT_EQ(Series(joined, s.zone()), s.slice(s.start(), spec.test_end));
  }
}

TEST(Synth, DeterministicAndNonNegative) {
  EXPECT_EQ(synth_series(1, 200), synth_series(1, 200));
  EXPECT_NE(synth_series(1, 200), synth_series(2, 200));
  auto s = synth_series(1, 200);
  for (const auto& r : s.records()) EXPECT_GE(r.demand, 0.0);
  EXPECT_TRUE(s.dewpoint_violations().empty());
}

TEST(Synth, RejectsTooShort) {
  try {
    synth_series(1, 100);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooShort);
    EXPECT_NE(std::string(e.what()).find("168"), std::string::npos);
  }
}

TEST(Synth, Lag24AutocorrelationOverOneYear) {
  auto s = synth_series(7, 8760);
  std::vector<double> d;
  for (const auto& r : s.records()) d.push_back(r.demand);
  const double mean = mean_of(d);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    den += (d[i] - mean) * (d[i] - mean);
    if (i >= 24) num += (d[i] - mean) * (d[i - 24] - mean);
  }
  EXPECT_GT(num / den, 0.5);
}

TEST(Synth, DemandIsVShapedInTemperature) {
  // Mean demand at both temperature extremes exceeds the mean near comfort.
  auto s = synth_series(7, 8760);
  double cold = 0, mild = 0, hot = 0;
  int nc = 0, nm = 0, nh = 0;
  for (const auto& r : s.records()) {
    if (r.drybulb < 30) cold += r.demand, ++nc;
    else if (r.drybulb > 55 && r.drybulb < 68) mild += r.demand, ++nm;
    else if (r.drybulb > 80) hot += r.demand, ++nh;
  }
  ASSERT_GT(nc, 0);
  ASSERT_GT(nm, 0);
  ASSERT_GT(nh, 0);
  EXPECT_GT(cold / nc, mild / nm);
  EXPECT_GT(hot / nh, mild / nm);
}

}  // namespace
}  // namespace plf

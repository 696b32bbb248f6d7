#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "plf/error.hpp"
#include "plf/features.hpp"
#include "plf/gbt.hpp"
#include "plf/metrics.hpp"
#include "plf/qrnn.hpp"
#include "plf/quantile.hpp"
#include "plf/strict_json.hpp"
#include "plf/timeseries.hpp"

namespace plf::pipeline {

struct SelectionPolicy {
  double cumulative_cutoff = 98.7;  // percent
  int max_features = 20;

  bool operator==(const SelectionPolicy&) const = default;
};

inline void validate(const SelectionPolicy& p) {
  if (!(p.cumulative_cutoff > 0.0 && p.cumulative_cutoff <= 100.0)) {
    throw Error(ErrorCode::InvalidConfig, "selection: cumulative_cutoff must lie in (0, 100]");
  }
  if (p.max_features < 1) throw Error(ErrorCode::InvalidConfig, "selection: max_features must be positive");
}

/// Smallest ranked prefix whose cumulative importance reaches the cutoff, capped at max_features.
inline std::vector<std::string> select_features(std::span<const gbt::RankedFeature> ranking,
                                                const SelectionPolicy& policy) {
  validate(policy);
  if (ranking.empty()) throw Error(ErrorCode::InvalidSpec, "cannot select from an empty ranking");
  std::vector<std::string> out;
  for (const auto& f : ranking) {
    if (out.size() >= static_cast<std::size_t>(policy.max_features)) break;
    out.push_back(f.name);
    // Published cumulative columns are rounded to 0.01; allow for the summation error.
    if (f.cumulative >= policy.cumulative_cutoff - 1e-9) break;
  }
  return out;
}

enum class ModelKind { DirectQgbr, DirectQrnn, GbrQgbr, GbrQrnn };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::DirectQgbr: return "direct_qgbr";
    case ModelKind::DirectQrnn: return "direct_qrnn";
    case ModelKind::GbrQgbr: return "gbr_qgbr";
    case ModelKind::GbrQrnn: return "gbr_qrnn";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  for (auto k : {ModelKind::DirectQgbr, ModelKind::DirectQrnn, ModelKind::GbrQgbr, ModelKind::GbrQrnn}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown model kind '" + s + "'");
}

inline bool is_two_stage(ModelKind k) { return k == ModelKind::GbrQgbr || k == ModelKind::GbrQrnn; }
inline bool uses_qrnn(ModelKind k) { return k == ModelKind::DirectQrnn || k == ModelKind::GbrQrnn; }

struct PipelineConfig {
  std::string name;  // empty: derived from kind and structure
  ModelKind kind = ModelKind::GbrQrnn;
  FeatureSpec features = default_feature_spec();
  std::vector<double> levels = default_levels();
  gbt::GbtConfig gbt;   // stage-1 point model
  gbt::GbtConfig qgbt;  // one pinball ensemble per level
  qrnn::QrnnConfig qrnn;
  SelectionPolicy selection;
  SplitSpec split{make_instant(2016, 1, 1), make_instant(2017, 1, 1), make_instant(2018, 1, 1)};
  double validation_fraction = 0.1;  // tail of stage-1 rows, monitored only

  bool operator==(const PipelineConfig& o) const {
    return name == o.name && kind == o.kind && features == o.features && levels == o.levels && gbt == o.gbt &&
           qgbt == o.qgbt && qrnn == o.qrnn && selection == o.selection &&
           split.stage1_end == o.split.stage1_end && split.stage2_end == o.split.stage2_end &&
           split.test_end == o.split.test_end && validation_fraction == o.validation_fraction;
  }
};

inline std::string display_name(const PipelineConfig& c) {
  if (!c.name.empty()) return c.name;
  switch (c.kind) {
    case ModelKind::DirectQgbr: return "Direct QGBR";
    case ModelKind::DirectQrnn: return "Direct QRNN";
    case ModelKind::GbrQgbr: return "GBR+QGBR";
    case ModelKind::GbrQrnn: return "GBR+QRNN" + qrnn::structure_label(c.qrnn.hidden_layers);
  }
  return "?";
}

inline void validate(PipelineConfig& c) {
  validate(c.features);
  validate_levels(c.levels);
  if (!find_level(c.levels, 0.5)) throw Error(ErrorCode::InvalidConfig, "levels must include 0.5");
  gbt::validate(c.gbt);
  gbt::validate(c.qgbt);
  c.qrnn.quantiles = c.levels;
  qrnn::validate(c.qrnn);
  validate(c.selection);
  if (!(c.validation_fraction >= 0.0 && c.validation_fraction < 0.5)) {
    throw Error(ErrorCode::InvalidConfig, "validation_fraction must lie in [0, 0.5)");
  }
  if (!(c.split.stage1_end < c.split.stage2_end && c.split.stage2_end <= c.split.test_end)) {
    throw Error(ErrorCode::InvalidConfig, "split instants must be increasing");
  }
}

using Stage2Model = std::variant<qrnn::QuantileNet, std::vector<gbt::BoostedEnsemble>>;

struct TrainedPipeline {
  PipelineConfig config;
  std::optional<gbt::BoostedEnsemble> stage1;
  std::vector<gbt::RankedFeature> ranking;     // stage-1 importance, two-stage kinds only
  std::vector<std::string> selected_features;  // raw features fed to stage 2
  std::vector<std::string> stage2_inputs;      // selected_features plus point_forecast when two-stage
  Stage2Model stage2;

  bool two_stage() const { return stage1.has_value(); }
  bool operator==(const TrainedPipeline&) const = default;
};

namespace detail {

inline FeatureMatrix augment(const gbt::BoostedEnsemble& stage1, const std::vector<std::string>& selected,
                             const FeatureMatrix& full) {
  const auto point = gbt::predict(stage1, full);
  return append_column(project(full, selected), kPointForecastColumn, point);
}

struct Stage1Result {
  gbt::BoostedEnsemble model;
  std::vector<gbt::RankedFeature> ranking;
  std::vector<std::string> selected;
};

inline Stage1Result fit_stage1(const FeatureMatrix& stage1_rows, const PipelineConfig& c) {
  const auto n_valid = static_cast<std::size_t>(c.validation_fraction * static_cast<double>(stage1_rows.rows()));
  if (stage1_rows.rows() - n_valid < 2) {
    throw Error(ErrorCode::SeriesTooShort, "stage-1 partition has too few rows after lag warm-up");
  }
  const auto train_rows = head_rows(stage1_rows, stage1_rows.rows() - n_valid);
  Stage1Result out;
  if (n_valid > 0) {
    const auto valid_rows = tail_rows(stage1_rows, stage1_rows.rows() - n_valid);
    out.model = gbt::fit(train_rows, c.gbt, gbt::Loss::squared(), &valid_rows);
  } else {
    out.model = gbt::fit(train_rows, c.gbt, gbt::Loss::squared());
  }
  out.ranking = gbt::importance_ranking(out.model);
  out.selected = select_features(out.ranking, c.selection);
  return out;
}

inline Stage2Model fit_stage2(const FeatureMatrix& inputs, const PipelineConfig& c) {
  if (inputs.empty()) throw Error(ErrorCode::SeriesTooShort, "no rows to train the quantile model");
  if (uses_qrnn(c.kind)) return qrnn::fit(inputs, c.qrnn);
  std::vector<gbt::BoostedEnsemble> models;
  for (double q : c.levels) models.push_back(gbt::fit(inputs, c.qgbt, gbt::Loss::pinball(q)));
  return models;
}

inline QuantileForecast predict_stage2(const Stage2Model& model, const std::vector<double>& levels,
                                       const FeatureMatrix& inputs) {
  if (const auto* net = std::get_if<qrnn::QuantileNet>(&model)) return qrnn::predict(*net, inputs);
  const auto& models = std::get<std::vector<gbt::BoostedEnsemble>>(model);
  const std::size_t width = models.size();
  std::vector<double> values(inputs.rows() * width);
  for (std::size_t j = 0; j < width; ++j) {
    const auto col = gbt::predict(models[j], inputs);
    for (std::size_t r = 0; r < inputs.rows(); ++r) values[r * width + j] = col[r];
  }
  return QuantileForecast::sorted(inputs.instants(), levels, std::move(values));
}

/// Matrix over the part of the series before `until`, so later targets never enter training.
inline FeatureMatrix training_matrix(const Series& series, const PipelineConfig& c, Instant until) {
  validate_split(series, c.split);
  if (c.split.stage1_end - series.start() <= std::chrono::hours{c.features.max_lag()}) {
    throw Error(ErrorCode::SeriesTooShort, "stage-1 partition is shorter than the lag warm-up");
  }
  return build_matrix(series.slice(series.start(), until), c.features);
}

inline TrainedPipeline finish_two_stage(const PipelineConfig& c, const Stage1Result& s1, const FeatureMatrix& m) {
  TrainedPipeline p;
  p.config = c;
  p.stage1 = s1.model;
  p.ranking = s1.ranking;
  p.selected_features = s1.selected;
  p.stage2_inputs = s1.selected;
  p.stage2_inputs.push_back(kPointForecastColumn);
  const auto stage2_rows = select_rows(m, c.split.stage1_end, c.split.stage2_end);
  p.stage2 = fit_stage2(augment(s1.model, s1.selected, stage2_rows), c);
  return p;
}

}  // namespace detail

inline TrainedPipeline train(const Series& series, PipelineConfig config) {
  validate(config);
  const auto m = detail::training_matrix(series, config, config.split.stage2_end);
  if (is_two_stage(config.kind)) {
    const auto s1 = detail::fit_stage1(select_rows(m, Instant::min(), config.split.stage1_end), config);
    return detail::finish_two_stage(config, s1, m);
  }
  TrainedPipeline p;
  p.config = config;
  p.selected_features = m.column_names();
  p.stage2_inputs = m.column_names();
  p.stage2 = detail::fit_stage2(m, config);
  return p;
}

/// Hour-ahead quantiles for every instant in [from, to), using actual weather from the series.
inline QuantileForecast forecast(const TrainedPipeline& p, const Series& series, Instant from, Instant to) {
  const auto warmup = std::chrono::hours{p.config.features.max_lag()};
  if (series.empty() || !(from < to) || from < series.start() + warmup || to > series.end()) {
    throw Error(ErrorCode::RangeOutOfSeries, "forecast range [" + format_instant(from) + ", " +
                                                 format_instant(to) + ") needs series coverage from " +
                                                 format_instant(from - warmup));
  }
  const auto m = build_matrix(series.slice(from - warmup, to), p.config.features);
  if (p.two_stage()) {
    return detail::predict_stage2(p.stage2, p.config.levels, detail::augment(*p.stage1, p.selected_features, m));
  }
  return detail::predict_stage2(p.stage2, p.config.levels, m);
}

/// Stage-2 input matrix for [from, to); exposes the point_forecast column for inspection.
inline FeatureMatrix stage2_matrix(const TrainedPipeline& p, const Series& series, Instant from, Instant to) {
  const auto warmup = std::chrono::hours{p.config.features.max_lag()};
  if (series.empty() || !(from < to) || from < series.start() + warmup || to > series.end()) {
    throw Error(ErrorCode::RangeOutOfSeries, "range outside series");
  }
  const auto m = build_matrix(series.slice(from - warmup, to), p.config.features);
  return p.two_stage() ? detail::augment(*p.stage1, p.selected_features, m) : m;
}

inline std::vector<double> actuals_for(const Series& series, const QuantileForecast& f) {
  std::vector<double> out;
  out.reserve(f.rows());
  for (auto t : f.instants()) {
    auto i = series.index_of(t);
    if (!i) throw Error(ErrorCode::Misaligned, "no actual for " + format_instant(t));
    out.push_back(series[*i].demand);
  }
  return out;
}

/// Percent reduction of pinball loss relative to the baseline.
inline double improvement_rate(double pinball, double baseline_pinball) {
  if (!(baseline_pinball > 0.0)) return 0.0;
  return 100.0 * (1.0 - pinball / baseline_pinball);
}

struct BenchmarkRow {
  std::string model;
  EvalReport report;
  double improvement_rate = 0.0;
  QuantileForecast forecast;
  std::vector<double> actuals;
  TrainedPipeline pipeline;
  double train_seconds = 0.0;
};

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Trains and scores each config on [test_from, test_to). The first config is the baseline.
/// `on_row` is invoked as each row completes.
template <class OnRow = std::nullptr_t>
std::vector<BenchmarkRow> benchmark(const Series& series, const std::vector<PipelineConfig>& configs,
                                    Instant test_from, Instant test_to, OnRow on_row = nullptr) {
  if (configs.empty()) throw Error(ErrorCode::InvalidConfig, "benchmark needs at least one model");
  std::vector<BenchmarkRow> rows;
  for (const auto& config : configs) {
    BenchmarkRow row;
    row.model = display_name(config);
    const auto t0 = Clock::now();
    row.pipeline = train(series, config);
    row.train_seconds = seconds_since(t0);
    row.forecast = forecast(row.pipeline, series, test_from, test_to);
    row.actuals = actuals_for(series, row.forecast);
    row.report = evaluate(row.forecast, row.actuals);
    row.improvement_rate = improvement_rate(row.report.pinball, rows.empty() ? row.report.pinball
                                                                             : rows.front().report.pinball);
    rows.push_back(std::move(row));
    if constexpr (!std::is_same_v<OnRow, std::nullptr_t>) on_row(rows.back());
  }
  return rows;
}

inline std::vector<BenchmarkRow> benchmark(const Series& series, const std::vector<PipelineConfig>& configs) {
  if (configs.empty()) throw Error(ErrorCode::InvalidConfig, "benchmark needs at least one model");
  return benchmark(series, configs, configs.front().split.stage2_end, configs.front().split.test_end);
}

struct SweepRow {
  std::vector<int> structure;
  BenchmarkRow result;  // improvement_rate left at 0; callers rebase against their baseline
};

/// One gbr_qrnn pipeline per hidden-layer structure, all sharing a single stage-1 fit.
/// train_seconds covers the stage-2 fit only.
template <class OnRow = std::nullptr_t>
std::vector<SweepRow> structure_sweep(const Series& series, PipelineConfig base,
                                      const std::vector<std::vector<int>>& structures, OnRow on_row = nullptr) {
  if (structures.empty()) throw Error(ErrorCode::InvalidConfig, "structure sweep needs at least one structure");
  base.kind = ModelKind::GbrQrnn;
  base.name.clear();
  validate(base);
  for (const auto& s : structures) {
    auto c = base;
    c.qrnn.hidden_layers = s;
    validate(c);
  }
  const auto m = detail::training_matrix(series, base, base.split.stage2_end);
  const auto s1 = detail::fit_stage1(select_rows(m, Instant::min(), base.split.stage1_end), base);
  std::vector<SweepRow> rows;
  for (const auto& s : structures) {
    auto c = base;
    c.qrnn.hidden_layers = s;
    SweepRow row;
    row.structure = s;
    row.result.model = display_name(c);
    const auto t0 = Clock::now();
    row.result.pipeline = detail::finish_two_stage(c, s1, m);
    row.result.train_seconds = seconds_since(t0);
    row.result.forecast = forecast(row.result.pipeline, series, c.split.stage2_end, c.split.test_end);
    row.result.actuals = actuals_for(series, row.result.forecast);
    row.result.report = evaluate(row.result.forecast, row.result.actuals);
    rows.push_back(std::move(row));
    if constexpr (!std::is_same_v<OnRow, std::nullptr_t>) on_row(rows.back());
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV reports

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

inline constexpr std::string_view kResultsHeader = "model,mae,rmse,pi_width,pinball,winkler,picp,improvement_rate";

inline void write_result_row(std::ostream& out, const std::string& model, const EvalReport& r, double improvement) {
  out << csv_field(model) << ',' << format_double(r.mae) << ',' << format_double(r.rmse) << ','
      << format_double(r.pi_width) << ',' << format_double(r.pinball) << ',' << format_double(r.winkler) << ','
      << format_double(r.picp) << ',' << format_double(improvement) << '\n';
}

inline void write_forecast_csv(const QuantileForecast& f, std::span<const double> actuals, std::ostream& out) {
  if (actuals.size() != f.rows()) throw Error(ErrorCode::LengthMismatch, "actuals do not match forecast rows");
  out << "instant,actual";
  for (double q : f.levels()) out << ',' << level_label(q);
  out << '\n';
  for (std::size_t r = 0; r < f.rows(); ++r) {
    out << format_instant(f.instants()[r]) << ',' << format_double(actuals[r]);
    for (double v : f.row(r)) out << ',' << format_double(v);
    out << '\n';
  }
}

/// Parses "q05" / "q12.5" back to a level.
inline std::optional<double> level_from_label(const std::string& label) {
  if (label.size() < 2 || label[0] != 'q') return std::nullopt;
  double pct = 0.0;
  if (!parse_double(label.substr(1), pct)) return std::nullopt;
  return pct / 100.0;
}

/// Reads the `instant,[actual,]q..` layout. The actual column, if present, is ignored.
inline QuantileForecast read_forecast_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MissingColumn, "empty forecast file");
  plf::detail::strip_line_end(line);
  const auto header = plf::detail::split_fields(line);
  if (header.empty() || header[0] != "instant") throw Error(ErrorCode::MissingColumn, "first column must be instant");
  std::vector<std::size_t> level_cols;
  std::vector<double> levels;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c] == "actual") continue;
    auto q = level_from_label(header[c]);
    if (!q) throw Error(ErrorCode::MissingColumn, "unrecognized column '" + header[c] + "'");
    level_cols.push_back(c);
    levels.push_back(*q);
  }
  if (levels.empty()) throw Error(ErrorCode::MissingColumn, "no quantile columns");
  std::vector<Instant> instants;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    plf::detail::strip_line_end(line);
    if (line.empty()) continue;
    const auto fields = plf::detail::split_fields(line);
    auto t = fields.size() == header.size() ? parse_instant(fields[0]) : std::nullopt;
    if (!t) throw Error(ErrorCode::UnparseableRow, "line " + std::to_string(line_no));
    instants.push_back(*t);
    for (auto c : level_cols) {
      double v = 0.0;
      if (!parse_double(fields[c], v)) throw Error(ErrorCode::UnparseableRow, "line " + std::to_string(line_no));
      values.push_back(v);
    }
  }
  return QuantileForecast(std::move(instants), std::move(levels), std::move(values));
}

// ---------------------------------------------------------------------------
// Config JSON

inline nlohmann::json to_json(const FeatureSpec& s) {
  return {{"demand_lags", s.demand_lags},
          {"weather_lags", s.weather_lags},
          {"calendar", {{"month", s.calendar.month}, {"day_of_week", s.calendar.day_of_week},
                        {"hour_of_day", s.calendar.hour_of_day}}}};
}

inline nlohmann::json to_json(const PipelineConfig& c) {
  auto qrnn_json = qrnn::config_to_json(c.qrnn);
  qrnn_json.erase("quantiles");  // the pipeline's own level list is authoritative
  return {{"name", c.name},
          {"kind", to_string(c.kind)},
          {"features", to_json(c.features)},
          {"levels", c.levels},
          {"gbt", gbt::config_to_json(c.gbt)},
          {"qgbt", gbt::config_to_json(c.qgbt)},
          {"qrnn", qrnn_json},
          {"selection", {{"cumulative_cutoff", c.selection.cumulative_cutoff},
                         {"max_features", c.selection.max_features}}},
          {"split", {{"stage1_end", format_instant(c.split.stage1_end)},
                     {"stage2_end", format_instant(c.split.stage2_end)},
                     {"test_end", format_instant(c.split.test_end)}}},
          {"validation_fraction", c.validation_fraction}};
}

namespace detail {

inline Instant read_instant(StrictObject& o, const std::string& key, Instant fallback) {
  if (!o.has(key)) return fallback;
  const auto text = o.require<std::string>(key);
  auto t = parse_instant(text);
  if (!t) throw Error(ErrorCode::InvalidConfig, o.child(key) + ": expected YYYY-MM-DDTHH:00, got '" + text + "'");
  return *t;
}

inline gbt::GbtConfig read_gbt(StrictObject o, gbt::GbtConfig c) {
  c.n_trees = o.get("n_trees", c.n_trees);
  c.max_depth = o.get("max_depth", c.max_depth);
  c.learning_rate = o.get("learning_rate", c.learning_rate);
  c.min_samples_leaf = o.get("min_samples_leaf", c.min_samples_leaf);
  c.subsample = o.get("subsample", c.subsample);
  c.seed = o.get("seed", c.seed);
  c.max_bins = o.get("max_bins", c.max_bins);
  o.finish();
  return c;
}

inline qrnn::QrnnConfig read_qrnn(StrictObject o, qrnn::QrnnConfig c) {
  c.hidden_layers = o.get("hidden_layers", c.hidden_layers);
  c.epochs = o.get("epochs", c.epochs);
  c.batch_size = o.get("batch_size", c.batch_size);
  c.learning_rate = o.get("learning_rate", c.learning_rate);
  c.momentum = o.get("momentum", c.momentum);
  c.seed = o.get("seed", c.seed);
  if (o.has("activation")) c.activation = qrnn::activation_from_string(o.require<std::string>("activation"));
  o.finish();
  return c;
}

inline FeatureSpec read_features(StrictObject o, FeatureSpec s) {
  s.demand_lags = o.get("demand_lags", s.demand_lags);
  s.weather_lags = o.get("weather_lags", s.weather_lags);
  if (o.has("calendar")) {
    auto cal = o.object("calendar");
    s.calendar.month = cal.get("month", s.calendar.month);
    s.calendar.day_of_week = cal.get("day_of_week", s.calendar.day_of_week);
    s.calendar.hour_of_day = cal.get("hour_of_day", s.calendar.hour_of_day);
    cal.finish();
  }
  o.finish();
  return s;
}

}  // namespace detail

/// Overlays a JSON object onto `base`. Unknown keys raise UnknownConfigKey with their dotted path.
inline PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {},
                                       const std::string& path = "") {
  StrictObject o(j, path);
  auto c = std::move(base);
  c.name = o.get("name", c.name);
  if (o.has("kind")) c.kind = model_kind_from_string(o.require<std::string>("kind"));
  if (o.has("features")) c.features = detail::read_features(o.object("features"), c.features);
  c.levels = o.get("levels", c.levels);
  if (o.has("gbt")) c.gbt = detail::read_gbt(o.object("gbt"), c.gbt);
  if (o.has("qgbt")) c.qgbt = detail::read_gbt(o.object("qgbt"), c.qgbt);
  if (o.has("qrnn")) c.qrnn = detail::read_qrnn(o.object("qrnn"), c.qrnn);
  if (o.has("selection")) {
    auto s = o.object("selection");
    c.selection.cumulative_cutoff = s.get("cumulative_cutoff", c.selection.cumulative_cutoff);
    c.selection.max_features = s.get("max_features", c.selection.max_features);
    s.finish();
  }
  if (o.has("split")) {
    auto s = o.object("split");
    c.split.stage1_end = detail::read_instant(s, "stage1_end", c.split.stage1_end);
    c.split.stage2_end = detail::read_instant(s, "stage2_end", c.split.stage2_end);
    c.split.test_end = detail::read_instant(s, "test_end", c.split.test_end);
    s.finish();
  }
  c.validation_fraction = o.get("validation_fraction", c.validation_fraction);
  o.finish();
  c.qrnn.quantiles = c.levels;
  return c;
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr int kPipelineVersion = 1;

inline std::string stage2_level_file(double q) { return "stage2_" + level_label(q) + ".json"; }

namespace detail {

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j, int indent) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << j.dump(indent) << '\n';
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, path.string() + ": " + e.what());
  }
}

}  // namespace detail

inline nlohmann::json manifest_json(const TrainedPipeline& p) {
  nlohmann::json ranking = nlohmann::json::array();
  for (const auto& f : p.ranking) {
    ranking.push_back({{"feature", f.name}, {"importance", f.importance}, {"cumulative", f.cumulative}});
  }
  nlohmann::json files = nlohmann::json::array();
  if (p.two_stage()) files.push_back("stage1.json");
  if (std::holds_alternative<qrnn::QuantileNet>(p.stage2)) {
    files.push_back("stage2.json");
  } else {
    for (double q : p.config.levels) files.push_back(stage2_level_file(q));
  }
  return {{"format", "plf.pipeline"},
          {"version", kPipelineVersion},
          {"model", display_name(p.config)},
          {"kind", to_string(p.config.kind)},
          {"config", to_json(p.config)},
          {"ranking", ranking},
          {"selected_features", p.selected_features},
          {"stage2_inputs", p.stage2_inputs},
          {"files", files}};
}

inline void save(const TrainedPipeline& p, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  if (p.two_stage()) detail::write_json(dir / "stage1.json", gbt::to_json(*p.stage1), -1);
  if (const auto* net = std::get_if<qrnn::QuantileNet>(&p.stage2)) {
    detail::write_json(dir / "stage2.json", qrnn::to_json(*net), -1);
  } else {
    const auto& models = std::get<std::vector<gbt::BoostedEnsemble>>(p.stage2);
    for (std::size_t j = 0; j < models.size(); ++j) {
      detail::write_json(dir / stage2_level_file(p.config.levels[j]), gbt::to_json(models[j]), -1);
    }
  }
  detail::write_json(dir / "manifest.json", manifest_json(p), 2);
}

inline TrainedPipeline load(const std::filesystem::path& dir) {
  const auto manifest = detail::read_json(dir / "manifest.json");
  TrainedPipeline p;
  try {
    if (manifest.at("format") != "plf.pipeline" || manifest.at("version").get<int>() != kPipelineVersion) {
      throw Error(ErrorCode::SchemaMismatch, "unsupported pipeline manifest");
    }
    p.config = config_from_json(manifest.at("config"));
    p.selected_features = manifest.at("selected_features").get<std::vector<std::string>>();
    p.stage2_inputs = manifest.at("stage2_inputs").get<std::vector<std::string>>();
    for (const auto& f : manifest.at("ranking")) {
      p.ranking.push_back({f.at("feature").get<std::string>(), f.at("importance").get<double>(),
                           f.at("cumulative").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("manifest: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SchemaMismatch) throw;
    throw Error(ErrorCode::SchemaMismatch, std::string("manifest config: ") + e.what());
  }
  if (is_two_stage(p.config.kind)) p.stage1 = gbt::from_json(detail::read_json(dir / "stage1.json"));
  if (uses_qrnn(p.config.kind)) {
    p.stage2 = qrnn::from_json(detail::read_json(dir / "stage2.json"));
  } else {
    std::vector<gbt::BoostedEnsemble> models;
    for (double q : p.config.levels) models.push_back(gbt::from_json(detail::read_json(dir / stage2_level_file(q))));
    p.stage2 = std::move(models);
  }
  return p;
}

}  // namespace plf::pipeline

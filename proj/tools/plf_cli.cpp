// plf_cli: synth | train | forecast | benchmark | evaluate
//
// Exit status: 0 success, 1 runtime failure (data, IO, training), 2 usage or config error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "plf/config.hpp"
#include "plf/pipeline.hpp"
#include "plf/report.hpp"

namespace fs = std::filesystem;
using namespace plf;

namespace {

struct Globals {
  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  bool quiet = false;
  CLI::Option* out_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

bool is_config_error(ErrorCode c) {
  return c == ErrorCode::InvalidConfig || c == ErrorCode::UnknownConfigKey || c == ErrorCode::InvalidSpec;
}

std::ostream& info(const Globals& g) {
  static std::ostream null(nullptr);
  return g.quiet ? null : std::cout;
}

config::RunConfig load_config(const Globals& g) {
  if (g.config_path.empty()) throw Error(ErrorCode::InvalidConfig, "--config is required for this command");
  config::Overrides ov;
  if (*g.seed_opt) ov.seed = g.seed;
  if (*g.out_opt) ov.out_dir = g.out;
  config::Provenance prov;
  auto rc = config::load_run_config(g.config_path, ov, &prov);
  auto& log = info(g);
  log << "config: " << g.config_path << '\n';
  log << "seed:   " << rc.seed << " (" << prov.seed << ")\n";
  log << "out:    " << rc.out_dir << " (" << prov.out_dir << ")\n";
  log << "data:   "
      << (rc.data.synthetic ? "synthetic, " + std::to_string(rc.data.hours) + " hours, seed " +
                                  std::to_string(rc.data.seed)
                            : rc.data.csv)
      << '\n';
  log << "models:";
  for (const auto& m : rc.models) log << ' ' << '"' << pipeline::display_name(m) << '"';
  log << '\n' << std::flush;
  return rc;
}

int cmd_synth(const Globals& g, std::size_t hours) {
  if (g.out.empty()) throw Error(ErrorCode::InvalidConfig, "synth needs --out FILE");
  auto s = synth_series(g.seed, hours);
  const fs::path path = g.out;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_csv(s, path.string());
  info(g) << "wrote " << s.size() << " hours to " << path.string() << '\n';
  return 0;
}

int cmd_train(const Globals& g) {
  const auto rc = load_config(g);
  const auto series = config::load_data(rc.data);
  const auto& model = rc.models[rc.train_model];
  info(g) << "training " << pipeline::display_name(model) << '\n' << std::flush;
  const auto p = pipeline::train(series, model);
  pipeline::save(p, rc.out_dir);
  if (p.two_stage()) {
    info(g) << "stage-1 features selected for stage 2:\n";
    report::print_ranking(info(g), p.ranking, p.selected_features.size());
    info(g) << "stage-2 inputs:";
    for (const auto& name : p.stage2_inputs) info(g) << ' ' << name;
    info(g) << '\n';
  }
  info(g) << "saved pipeline to " << rc.out_dir << '\n';
  return 0;
}

int cmd_forecast(const Globals& g, const std::string& model_dir, const std::string& from, const std::string& to) {
  const auto rc = load_config(g);
  const auto series = config::load_data(rc.data);
  const auto p = pipeline::load(model_dir.empty() ? rc.out_dir : model_dir);
  auto parse = [](const std::string& text, std::optional<Instant> fallback, Instant last) {
    if (text.empty()) return fallback.value_or(last);
    auto t = parse_instant(text);
    if (!t) throw Error(ErrorCode::InvalidConfig, "bad instant '" + text + "'");
    return *t;
  };
  const Instant f = parse(from, rc.forecast_from, p.config.split.stage2_end);
  const Instant t = parse(to, rc.forecast_to, p.config.split.test_end);
  const auto fc = pipeline::forecast(p, series, f, t);
  fs::create_directories(rc.out_dir);
  const auto path = fs::path(rc.out_dir) / "forecast.csv";
  report::write_forecast_file(path, fc, pipeline::actuals_for(series, fc));
  info(g) << "wrote " << fc.rows() << " rows to " << path.string() << '\n';
  if (fc.extrapolated_rows() > 0) {
    std::cerr << "warning: " << fc.extrapolated_rows() << " rows had inputs far outside the training range\n";
  }
  return 0;
}

int cmd_benchmark(const Globals& g) {
  const auto rc = load_config(g);
  const auto series = config::load_data(rc.data);
  info(g) << "benchmarking on " << format_instant(rc.models.front().split.stage2_end) << " .. "
          << format_instant(rc.models.front().split.test_end) << '\n';
  const auto out = report::run_benchmark(series, rc, rc.out_dir, info(g));
  info(g) << "wrote " << out.results_csv.string() << " in " << std::fixed << std::setprecision(1) << out.seconds
          << "s\n";
  return 0;
}

int cmd_evaluate(const Globals& g, const std::string& forecast_csv, const std::string& actual_csv) {
  std::ifstream in(forecast_csv, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + forecast_csv);
  const auto fc = pipeline::read_forecast_csv(in);
  const auto series = load_csv(actual_csv, "ACTUAL");
  const auto actuals = pipeline::actuals_for(series, fc);
  const auto r = evaluate(fc, actuals);
  std::cout << pipeline::kResultsHeader << '\n';
  pipeline::write_result_row(std::cout, fs::path(forecast_csv).stem().string(), r, 0.0);
  if (!g.quiet) {
    std::cout << "mape," << (r.mape ? format_double(*r.mape) : std::string("undefined")) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage probabilistic load forecasting"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Run configuration (JSON)");
  g.out_opt = app.add_option("--out", g.out, "Output directory (synth: output file)");
  g.seed_opt = app.add_option("--seed", g.seed, "Override the configured seed");
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  auto* synth = app.add_subcommand("synth", "Write a synthetic hourly series");
  std::size_t hours = 0;
  synth->add_option("--hours", hours, "Number of hours")->required();
  auto* train = app.add_subcommand("train", "Train the configured model and save it");
  auto* forecast = app.add_subcommand("forecast", "Forecast with a saved pipeline");
  std::string model_dir, from, to;
  forecast->add_option("--model", model_dir, "Saved pipeline directory (default: --out)");
  forecast->add_option("--from", from, "First instant, YYYY-MM-DDTHH:00");
  forecast->add_option("--to", to, "End instant (exclusive)");
  auto* bench = app.add_subcommand("benchmark", "Train, forecast and score every configured model");
  auto* eval = app.add_subcommand("evaluate", "Score a forecast CSV against actuals");
  std::string forecast_csv, actual_csv;
  eval->add_option("--forecast", forecast_csv, "Forecast CSV (instant,[actual,]q..)")->required();
  eval->add_option("--actual", actual_csv, "Series CSV with actual demand")->required();
  for (auto* sub : {synth, train, forecast, bench, eval}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) return cmd_synth(g, hours);
    if (*train) return cmd_train(g);
    if (*forecast) return cmd_forecast(g, model_dir, from, to);
    if (*bench) return cmd_benchmark(g);
    if (*eval) return cmd_evaluate(g, forecast_csv, actual_csv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_config_error(e.code()) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

#pragma once

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "plf/config.hpp"
#include "plf/pipeline.hpp"

namespace plf::report {

/// "GBR+QRNN(10,5)" -> "gbr_qrnn_10_5"
inline std::string slug(const std::string& name) {
  std::string out;
  for (char ch : name) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out.empty() ? "model" : out;
}

/// Feature / importance / cumulative table in the layout of a stage-1 ranking report.
inline void print_ranking(std::ostream& out, const std::vector<gbt::RankedFeature>& ranking, std::size_t selected) {
  out << std::left << std::setw(6) << "rank" << std::setw(20) << "feature" << std::right << std::setw(12)
      << "importance" << std::setw(12) << "cumulative" << '\n';
  for (std::size_t i = 0; i < ranking.size() && i < selected; ++i) {
    char imp[32], cum[32];
    std::snprintf(imp, sizeof(imp), "%.2f%%", ranking[i].importance);
    std::snprintf(cum, sizeof(cum), "%.2f%%", ranking[i].cumulative);
    out << std::left << std::setw(6) << i + 1 << std::setw(20) << ranking[i].name << std::right << std::setw(12)
        << imp << std::setw(12) << cum << '\n';
  }
}

inline void write_forecast_file(const std::filesystem::path& path, const QuantileForecast& f,
                                const std::vector<double>& actuals) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  pipeline::write_forecast_csv(f, actuals, out);
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

struct BenchmarkOutput {
  std::vector<pipeline::BenchmarkRow> rows;
  std::vector<pipeline::SweepRow> sweep;
  std::filesystem::path results_csv;
  double seconds = 0.0;
};

/// Trains every configured model, writes results.csv (via results.csv.partial), one forecast
/// CSV per model under forecasts/, and wall-clock timings to timing.txt. Timings are kept out
/// of the CSVs so reruns are byte-identical.
inline BenchmarkOutput run_benchmark(const Series& series, const config::RunConfig& rc,
                                     const std::filesystem::path& out_dir, std::ostream& log) {
  namespace fs = std::filesystem;
  const auto t0 = pipeline::Clock::now();
  fs::create_directories(out_dir / "forecasts");
  const auto final_path = out_dir / "results.csv";
  const auto partial_path = out_dir / "results.csv.partial";
  fs::remove(final_path);

  std::ofstream results(partial_path, std::ios::binary);
  if (!results) throw Error(ErrorCode::Io, "cannot write " + partial_path.string());
  results << pipeline::kResultsHeader << '\n' << std::flush;
  std::ostringstream timing;
  std::set<std::string> used;
  auto unique_slug = [&](const std::string& name) {
    auto s = slug(name);
    auto candidate = s;
    for (int k = 2; used.count(candidate); ++k) candidate = s + "_" + std::to_string(k);
    used.insert(candidate);
    return candidate;
  };

  const auto& split = rc.models.front().split;
  BenchmarkOutput output;
  output.rows = pipeline::benchmark(series, rc.models, split.stage2_end, split.test_end,
                                    [&](const pipeline::BenchmarkRow& row) {
                                      pipeline::write_result_row(results, row.model, row.report, row.improvement_rate);
                                      results.flush();
                                      write_forecast_file(out_dir / "forecasts" / (unique_slug(row.model) + ".csv"),
                                                          row.forecast, row.actuals);
                                      timing << row.model << '\t' << std::fixed << std::setprecision(2)
                                             << row.train_seconds << "s\n";
                                      log << "  " << row.model << ": pinball " << format_double(row.report.pinball)
                                          << ", picp " << format_double(row.report.picp) << ", trained in "
                                          << std::fixed << std::setprecision(1) << row.train_seconds << "s\n"
                                          << std::defaultfloat << std::flush;
                                    });
  const double baseline = output.rows.front().report.pinball;

  if (rc.sweep) {
    output.sweep = pipeline::structure_sweep(
        series, rc.sweep->base, rc.sweep->structures, [&](pipeline::SweepRow& row) {
          row.result.improvement_rate = pipeline::improvement_rate(row.result.report.pinball, baseline);
          pipeline::write_result_row(results, row.result.model, row.result.report, row.result.improvement_rate);
          results.flush();
          write_forecast_file(out_dir / "forecasts" / (unique_slug("sweep " + row.result.model) + ".csv"),
                              row.result.forecast, row.result.actuals);
          timing << "sweep " << row.result.model << '\t' << std::fixed << std::setprecision(2)
                 << row.result.train_seconds << "s\n";
          log << "  sweep " << row.result.model << ": pinball " << format_double(row.result.report.pinball)
              << ", stage-2 trained in " << std::fixed << std::setprecision(1) << row.result.train_seconds << "s\n"
              << std::defaultfloat << std::flush;
        });
  }

  results.close();
  if (!results) throw Error(ErrorCode::Io, "failed writing " + partial_path.string());
  fs::rename(partial_path, final_path);
  output.results_csv = final_path;
  output.seconds = pipeline::seconds_since(t0);
  std::ofstream(out_dir / "timing.txt") << timing.str() << "total\t" << std::fixed << std::setprecision(2)
                                        << output.seconds << "s\n";
  return output;
}

}  // namespace plf::report

#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "plf/error.hpp"
#include "plf/pipeline.hpp"
#include "plf/strict_json.hpp"
#include "plf/timeseries.hpp"

namespace plf::config {

struct DataSource {
  // Exactly one of csv / synthetic is used.
  std::string csv;  // resolved against the config file's directory
  std::string zone = "ZONE";
  bool synthetic = false;
  std::size_t hours = 0;
  std::uint64_t seed = 0;
  Instant start = make_instant(2013, 1, 1);
};

struct SweepSpec {
  std::vector<std::vector<int>> structures;
  pipeline::PipelineConfig base;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  DataSource data;
  std::vector<pipeline::PipelineConfig> models;
  std::optional<SweepSpec> sweep;
  std::size_t train_model = 0;  // index into models used by `train`
  std::optional<Instant> forecast_from;
  std::optional<Instant> forecast_to;
};

/// Command-line values that take precedence over the file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

/// Where each top-level setting came from, for the startup banner.
struct Provenance {
  std::string seed;
  std::string out_dir;
};

namespace detail {

inline std::optional<Instant> optional_instant(StrictObject& o, const std::string& key) {
  if (!o.has(key)) return std::nullopt;
  const auto text = o.require<std::string>(key);
  auto t = parse_instant(text);
  if (!t) throw Error(ErrorCode::InvalidConfig, o.child(key) + ": expected YYYY-MM-DDTHH:00, got '" + text + "'");
  return t;
}

inline DataSource read_data(StrictObject o, std::uint64_t seed, const std::filesystem::path& base_dir) {
  DataSource d;
  d.seed = seed;
  const bool has_csv = o.has("csv");
  const bool has_synth = o.has("synthetic");
  if (has_csv == has_synth) {
    throw Error(ErrorCode::InvalidConfig, o.where() + ": give exactly one of 'csv' or 'synthetic'");
  }
  if (has_csv) {
    std::filesystem::path p = o.require<std::string>("csv");
    if (p.is_relative()) p = base_dir / p;
    d.csv = p.lexically_normal().string();
    d.zone = o.get("zone", d.zone);
  } else {
    auto s = o.object("synthetic");
    d.synthetic = true;
    d.hours = s.require<std::size_t>("hours");
    d.seed = s.get("seed", seed);
    if (auto start = optional_instant(s, "start")) d.start = *start;
    d.zone = s.get("zone", std::string("SYNTH"));
    s.finish();
  }
  o.finish();
  return d;
}

}  // namespace detail

/// Resolves a run config. Model seeds default to the top-level seed; each entry of `models`
/// is overlaid on `defaults`. Unknown keys anywhere raise UnknownConfigKey.
inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = ".",
                                  const Overrides& overrides = {}, Provenance* provenance = nullptr) {
  StrictObject o(j, "");
  RunConfig rc;
  if (!o.has("seed") && !overrides.seed) throw Error(ErrorCode::InvalidConfig, "missing key seed");
  rc.seed = o.get<std::uint64_t>("seed", 0);
  if (overrides.seed) rc.seed = *overrides.seed;
  rc.out_dir = o.get("out", rc.out_dir);
  if (overrides.out_dir) rc.out_dir = *overrides.out_dir;
  if (provenance) {
    provenance->seed = overrides.seed ? "flag" : "config";
    provenance->out_dir = overrides.out_dir ? "flag" : (o.has("out") ? "config" : "default");
  }

  rc.data = detail::read_data(o.object("data"), rc.seed, base_dir);

  pipeline::PipelineConfig defaults;
  defaults.gbt.seed = rc.seed;
  defaults.qgbt.seed = rc.seed;
  defaults.qrnn.seed = rc.seed;
  if (o.has("defaults")) defaults = pipeline::config_from_json(o.raw("defaults"), defaults, "defaults");

  const auto& models = o.raw("models");
  if (!models.is_array() || models.empty()) throw Error(ErrorCode::InvalidConfig, "models must be a non-empty array");
  for (std::size_t i = 0; i < models.size(); ++i) {
    auto m = pipeline::config_from_json(models[i], defaults, "models[" + std::to_string(i) + "]");
    pipeline::validate(m);
    rc.models.push_back(std::move(m));
  }

  if (o.has("sweep")) {
    auto s = o.object("sweep");
    SweepSpec sweep;
    sweep.structures = s.require<std::vector<std::vector<int>>>("structures");
    if (sweep.structures.empty()) throw Error(ErrorCode::InvalidConfig, "sweep.structures must not be empty");
    sweep.base = defaults;
    if (s.has("base")) sweep.base = pipeline::config_from_json(s.raw("base"), defaults, "sweep.base");
    sweep.base.kind = pipeline::ModelKind::GbrQrnn;
    pipeline::validate(sweep.base);
    s.finish();
    rc.sweep = std::move(sweep);
  }

  rc.train_model = o.get<std::size_t>("train_model", 0);
  if (rc.train_model >= rc.models.size()) throw Error(ErrorCode::InvalidConfig, "train_model index out of range");
  if (o.has("forecast")) {
    auto f = o.object("forecast");
    rc.forecast_from = detail::optional_instant(f, "from");
    rc.forecast_to = detail::optional_instant(f, "to");
    f.finish();
  }
  o.finish();
  return rc;
}

inline nlohmann::json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read config " + path.string());
  try {
    return nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
}

inline RunConfig load_run_config(const std::filesystem::path& path, const Overrides& overrides = {},
                                 Provenance* provenance = nullptr) {
  return parse_run_config(read_config_file(path), path.parent_path().empty() ? "." : path.parent_path(), overrides,
                          provenance);
}

/// Loads or synthesizes the series. Missing files fail here, before any training.
inline Series load_data(const DataSource& d) {
  if (d.synthetic) {
    SynthProfile profile;
    profile.start = d.start;
    profile.zone = d.zone;
    return synth_series(d.seed, d.hours, profile);
  }
  if (!std::filesystem::exists(d.csv)) throw Error(ErrorCode::Io, "data file not found: " + d.csv);
  return load_csv(d.csv, d.zone);
}

}  // namespace plf::config

#include "plf/config.hpp"

#include <gtest/gtest.h>

#include <fstream>

#include "test_helpers.hpp"

namespace plf::config {
namespace {

using nlohmann::json;

json minimal() {
  return json::parse(R"({
    "seed": 11,
    "data": {"synthetic": {"hours": 2000}},
    "models": [{"kind": "gbr_qrnn"}]
  })");
}

std::string error_text(const json& j, ErrorCode expected) {
  try {
    parse_run_config(j);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), expected) << e.what();
    return e.what();
  }
  ADD_FAILURE() << "no error";
  return {};
}

TEST(RunConfig, UnknownNestedKeyIsNamedWithItsPath) {
  auto j = minimal();
  j["models"][0]["qrnn"] = {{"learninrate", 0.1}};
  const auto msg = error_text(j, ErrorCode::UnknownConfigKey);
  EXPECT_NE(msg.find("models[0].qrnn.learninrate"), std::string::npos) << msg;

  j = minimal();
  j["outdir"] = "x";
  EXPECT_NE(error_text(j, ErrorCode::UnknownConfigKey).find("outdir"), std::string::npos);
  j = minimal();
  j["data"]["synthetic"]["hour"] = 3;
  EXPECT_NE(error_text(j, ErrorCode::UnknownConfigKey).find("data.synthetic.hour"), std::string::npos);
}

TEST(RunConfig, SeedIsRequiredAndPropagates) {
  auto j = minimal();
  j.erase("seed");
  EXPECT_NE(error_text(j, ErrorCode::InvalidConfig).find("seed"), std::string::npos);

  const auto rc = parse_run_config(minimal());
  EXPECT_EQ(rc.seed, 11u);
  EXPECT_EQ(rc.data.seed, 11u);
  EXPECT_EQ(rc.models[0].qrnn.seed, 11u);
  EXPECT_EQ(rc.models[0].gbt.seed, 11u);

  j = minimal();
  j["models"][0]["qrnn"] = {{"seed", 4}};
  EXPECT_EQ(parse_run_config(j).models[0].qrnn.seed, 4u);
}

TEST(RunConfig, FlagsOverrideConfigAndReportProvenance) {
  Provenance prov;
  auto rc = parse_run_config(minimal(), ".", {}, &prov);
  EXPECT_EQ(rc.out_dir, "out");
  EXPECT_EQ(prov.seed, "config");
  EXPECT_EQ(prov.out_dir, "default");

  auto j = minimal();
  j["out"] = "from_config";
  rc = parse_run_config(j, ".", {}, &prov);
  EXPECT_EQ(rc.out_dir, "from_config");
  EXPECT_EQ(prov.out_dir, "config");

  Overrides ov;
  ov.seed = 99;
  ov.out_dir = "from_flag";
  rc = parse_run_config(j, ".", ov, &prov);
  EXPECT_EQ(rc.seed, 99u);
  EXPECT_EQ(rc.models[0].qrnn.seed, 99u);
  EXPECT_EQ(rc.out_dir, "from_flag");
  EXPECT_EQ(prov.seed, "flag");
  EXPECT_EQ(prov.out_dir, "flag");

  j.erase("seed");
  EXPECT_EQ(parse_run_config(j, ".", ov).seed, 99u);
}

TEST(RunConfig, DataNeedsExactlyOneSource) {
  auto j = minimal();
  j["data"]["csv"] = "load.csv";
  error_text(j, ErrorCode::InvalidConfig);
  j["data"] = json::object();
  error_text(j, ErrorCode::InvalidConfig);

  j["data"] = {{"csv", "sub/load.csv"}};
  const auto rc = parse_run_config(j, "/cfg");
  EXPECT_FALSE(rc.data.synthetic);
  EXPECT_EQ(rc.data.csv, "/cfg/sub/load.csv");
  EXPECT_PLF_ERROR(load_data(rc.data), ErrorCode::Io);
}

TEST(RunConfig, DefaultsOverlayEachModel) {
  auto j = minimal();
  j["defaults"] = {{"qrnn", {{"epochs", 7}, {"hidden_layers", {6}}}}, {"gbt", {{"n_trees", 12}}}};
  j["models"] = json::array({{{"kind", "direct_qrnn"}}, {{"kind", "gbr_qrnn"}, {"qrnn", {{"epochs", 9}}}}});
  const auto rc = parse_run_config(j);
  ASSERT_EQ(rc.models.size(), 2u);
  EXPECT_EQ(rc.models[0].qrnn.epochs, 7);
  EXPECT_EQ(rc.models[1].qrnn.epochs, 9);
  EXPECT_EQ(rc.models[1].qrnn.hidden_layers, std::vector<int>{6});
  EXPECT_EQ(rc.models[1].gbt.n_trees, 12);
  EXPECT_EQ(rc.models[0].kind, pipeline::ModelKind::DirectQrnn);
}

TEST(RunConfig, InvalidValuesAreConfigErrors) {
  auto j = minimal();
  j["models"][0]["qrnn"] = {{"learning_rate", -1.0}};
  error_text(j, ErrorCode::InvalidConfig);
  j = minimal();
  j["models"][0]["qrnn"] = {{"epochs", "many"}};
  error_text(j, ErrorCode::InvalidConfig);
  j = minimal();
  j["models"] = json::array();
  error_text(j, ErrorCode::InvalidConfig);
  j = minimal();
  j["models"][0]["levels"] = {0.1, 0.9};
  error_text(j, ErrorCode::InvalidConfig);  // median is required
  j = minimal();
  j["train_model"] = 3;
  error_text(j, ErrorCode::InvalidConfig);
}

TEST(RunConfig, SweepForcesTwoStageNetwork) {
  auto j = minimal();
  j["sweep"] = {{"structures", {{5}, {10, 5}}}, {"base", {{"qrnn", {{"epochs", 3}}}}}};
  const auto rc = parse_run_config(j);
  ASSERT_TRUE(rc.sweep.has_value());
  EXPECT_EQ(rc.sweep->structures.size(), 2u);
  EXPECT_EQ(rc.sweep->base.kind, pipeline::ModelKind::GbrQrnn);
  EXPECT_EQ(rc.sweep->base.qrnn.epochs, 3);
  j["sweep"]["structures"] = json::array();
  error_text(j, ErrorCode::InvalidConfig);
}

TEST(RunConfigFile, CommentsAllowedAndSyntaxErrorsReported) {
  const auto dir = testing::temp_dir("config_file");
  std::ofstream(dir / "a.json") << "{\n  // comment\n  \"seed\": 1,\n  \"data\": {\"csv\": \"x.csv\"},\n"
                                   "  \"models\": [{\"kind\": \"direct_qgbr\"}]\n}\n";
  const auto rc = load_run_config(dir / "a.json");
  EXPECT_EQ(rc.data.csv, (dir / "x.csv").string());
  std::ofstream(dir / "b.json") << "{\"seed\": 1,";
  EXPECT_PLF_ERROR(load_run_config(dir / "b.json"), ErrorCode::InvalidConfig);
  EXPECT_PLF_ERROR(load_run_config(dir / "missing.json"), ErrorCode::Io);
}

TEST(ShippedConfigs, Parse) {
  const std::filesystem::path root = PLF_SOURCE_DIR;
  const auto bench = load_run_config(root / "configs" / "benchmark.json");
  ASSERT_EQ(bench.models.size(), 4u);
  EXPECT_EQ(pipeline::display_name(bench.models[0]), "Direct QGBR");
  EXPECT_EQ(pipeline::display_name(bench.models[3]), "GBR+QRNN(10)");
  EXPECT_TRUE(bench.data.synthetic);
  const auto sweep = load_run_config(root / "configs" / "sweep.json");
  ASSERT_TRUE(sweep.sweep.has_value());
  EXPECT_EQ(sweep.sweep->structures.size(), 5u);
}

}  // namespace
}  // namespace plf::config

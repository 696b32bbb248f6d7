#include "plf/gbt.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <numeric>

#include "test_helpers.hpp"

namespace plf::gbt {
namespace {

FeatureMatrix make_matrix(std::vector<std::string> names, std::vector<double> values, std::vector<double> targets) {
  std::vector<Instant> instants;
  for (std::size_t i = 0; i < targets.size(); ++i) instants.push_back(make_instant(2015, 1, 1) + std::chrono::hours{i});
  return FeatureMatrix(std::move(names), std::move(values), std::move(targets), std::move(instants));
}

FeatureMatrix noise_matrix(std::uint64_t seed, std::size_t n, std::size_t p, std::vector<double> targets = {}) {
  Rng rng(seed);
  std::vector<std::string> names;
  for (std::size_t c = 0; c < p; ++c) names.push_back("x" + std::to_string(c));
  std::vector<double> values(n * p);
  for (auto& v : values) v = rng.uniform();
  if (targets.empty()) {
    for (std::size_t i = 0; i < n; ++i) targets.push_back(rng.uniform());
  }
  return make_matrix(names, values, targets);
}

GbtConfig small_config() {
  GbtConfig c;
  c.n_trees = 50;
  c.max_depth = 3;
  c.min_samples_leaf = 5;
  return c;
}

TEST(GbtFit, ConstantTargetGivesConstantPrediction) {
  auto m = noise_matrix(1, 200, 3, std::vector<double>(200, 5.0));
  auto model = fit(m, small_config(), Loss::squared());
  EXPECT_EQ(model.base_prediction, 5.0);
  for (double p : predict(model, m)) EXPECT_EQ(p, 5.0);
  for (const auto& t : model.trees) EXPECT_EQ(t.nodes.size(), 1u);
}

TEST(GbtFit, StepFunctionDepthOne) {
  Rng rng(2);
  std::vector<double> x, y;
  for (int i = 0; i < 400; ++i) {
    x.push_back(rng.uniform());
    y.push_back(x.back() > 0.5 ? 1.0 : 0.0);
  }
  auto m = make_matrix({"x0"}, x, y);
  GbtConfig c;
  c.n_trees = 50;
  c.max_depth = 1;
  c.min_samples_leaf = 1;
  auto model = fit(m, c, Loss::squared());
  const auto pred = predict(model, m);
  double sq = 0;
  for (std::size_t i = 0; i < y.size(); ++i) sq += (pred[i] - y[i]) * (pred[i] - y[i]);
  EXPECT_LT(std::sqrt(sq / static_cast<double>(y.size())), 0.01);
  for (const auto& t : model.trees) EXPECT_LE(t.depth(), 1);
}

TEST(GbtFit, PinballOnNoiseConvergesToSampleQuantile) {
  auto m = noise_matrix(3, 2000, 3);
  GbtConfig c;
  c.n_trees = 200;
  c.max_depth = 2;
  c.min_samples_leaf = 100;
  auto model = fit(m, c, Loss::pinball(0.9));
  const double oracle = sample_quantile(m.targets(), 0.9);
  EXPECT_EQ(model.base_prediction, oracle);
  const auto pred = predict(model, m);
  EXPECT_NEAR(mean_of(pred), oracle, 0.02);
}

TEST(GbtFit, TrainingLossNonIncreasingForBothFamilies) {
  auto m = noise_matrix(4, 500, 4);
  // Give the targets structure so splits carry real gain.
  std::vector<double> y;
  for (std::size_t r = 0; r < m.rows(); ++r) y.push_back(std::sin(6 * m(r, 0)) + m(r, 1) * m(r, 2) + 0.1 * m.targets()[r]);
  auto structured = make_matrix(m.column_names(), m.values(), y);
  for (const auto& loss : {Loss::squared(), Loss::pinball(0.1), Loss::pinball(0.5), Loss::pinball(0.9)}) {
    GbtConfig c = small_config();
    c.learning_rate = 0.3;
    auto model = fit(structured, c, loss);
    ASSERT_EQ(model.train_loss.size(), static_cast<std::size_t>(c.n_trees) + 1);
    for (std::size_t i = 1; i < model.train_loss.size(); ++i) {
      EXPECT_LE(model.train_loss[i], model.train_loss[i - 1] + 1e-12) << "round " << i;
    }
    EXPECT_LT(model.train_loss.back(), model.train_loss.front());
  }
}

// Exhaustive oracle: every (feature, midpoint) pair scored by direct SSE reduction.
struct OracleSplit {
  int feature = -1;
  double threshold = 0;
  double gain = 0;
};

OracleSplit exhaustive_split(const FeatureMatrix& m, const std::vector<double>& r) {
  auto sse = [](const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const double mu = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0;
    for (double x : v) s += (x - mu) * (x - mu);
    return s;
  };
  OracleSplit best;
  const double total = sse(r);
  for (std::size_t f = 0; f < m.cols(); ++f) {
    auto vals = m.column(f);
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
      const double t = 0.5 * (vals[k] + vals[k + 1]);
      std::vector<double> left, right;
      for (std::size_t i = 0; i < m.rows(); ++i) (m(i, f) <= t ? left : right).push_back(r[i]);
      const double gain = total - sse(left) - sse(right);
      if (gain > best.gain + 1e-12) best = {static_cast<int>(f), t, gain};
    }
  }
  return best;
}

TEST(GbtFit, DepthOneSplitMatchesExhaustiveSearch) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed + 100);
    const std::size_t n = 8 + rng.index(25);  // 8..32
    auto m = noise_matrix(seed, n, 2);
    std::vector<double> y;
    for (std::size_t i = 0; i < n; ++i) y.push_back(rng.normal() + (m(i, seed % 2) > 0.4 ? 1.5 : 0.0));
    auto data = make_matrix(m.column_names(), m.values(), y);
    GbtConfig c;
    c.n_trees = 1;
    c.max_depth = 1;
    c.min_samples_leaf = 1;
    c.max_bins = static_cast<int>(seed % 2) * 255;  // exact path and default binning agree here
    auto model = fit(data, c, Loss::squared());
    const double mu = mean_of(y);
    std::vector<double> residuals;
    for (double v : y) residuals.push_back(v - mu);
    const auto oracle = exhaustive_split(data, residuals);
    const auto& root = model.trees[0].nodes[0];
    ASSERT_FALSE(root.is_leaf());
    EXPECT_EQ(root.feature, oracle.feature) << "seed " << seed;
    EXPECT_DOUBLE_EQ(root.threshold, oracle.threshold) << "seed " << seed;
    EXPECT_NEAR(model.importance[static_cast<std::size_t>(oracle.feature)], 100.0, 1e-9);
  }
}

TEST(GbtFit, ImportanceSumsToHundred) {
  auto m = noise_matrix(5, 800, 6);
  std::vector<double> y;
  for (std::size_t r = 0; r < m.rows(); ++r) y.push_back(3 * m(r, 0) + m(r, 3) + 0.2 * m.targets()[r]);
  auto model = fit(make_matrix(m.column_names(), m.values(), y), small_config(), Loss::squared());
  const double total = std::accumulate(model.importance.begin(), model.importance.end(), 0.0);
  EXPECT_NEAR(total, 100.0, 1e-9);
  for (double v : model.importance) EXPECT_GE(v, 0.0);
  const auto ranking = importance_ranking(model);
  EXPECT_EQ(ranking[0].name, "x0");
  EXPECT_EQ(ranking[1].name, "x3");
}

TEST(GbtFit, Errors) {
  FeatureMatrix empty({"x"}, {}, {}, {});
  EXPECT_PLF_ERROR(fit(empty, small_config(), Loss::squared()), ErrorCode::EmptyMatrix);
  EXPECT_PLF_ERROR(Loss::pinball(1.0), ErrorCode::InvalidQuantile);
  auto m = noise_matrix(1, 50, 2);
  EXPECT_PLF_ERROR(fit(m, small_config(), Loss{LossKind::Pinball, 0.0}), ErrorCode::InvalidQuantile);
  GbtConfig bad = small_config();
  bad.learning_rate = 1.5;
  EXPECT_PLF_ERROR(fit(m, bad, Loss::squared()), ErrorCode::InvalidConfig);
}

TEST(GbtFit, SubsampleIsSeeded) {
  auto m = noise_matrix(6, 300, 3);
  GbtConfig c = small_config();
  c.subsample = 0.5;
  c.seed = 42;
  EXPECT_EQ(fit(m, c, Loss::squared()), fit(m, c, Loss::squared()));
  auto other = c;
  other.seed = 43;
  EXPECT_NE(fit(m, c, Loss::squared()).trees, fit(m, other, Loss::squared()).trees);
}

TEST(GbtFit, ValidationCurveRecorded) {
  auto m = noise_matrix(7, 400, 3);
  auto train = head_rows(m, 300);
  auto valid = tail_rows(m, 300);
  auto model = fit(train, small_config(), Loss::squared(), &valid);
  EXPECT_EQ(model.valid_loss.size(), model.train_loss.size());
  EXPECT_EQ(valid.rows(), 100u);
}

TEST(GbtFit, BinningKeepsLowCardinalityFeaturesExact) {
  Rng rng(9);
  std::vector<double> values, y;
  for (int i = 0; i < 500; ++i) {
    const double a = static_cast<double>(rng.index(2));
    const double b = static_cast<double>(rng.index(40));
    values.push_back(a);
    values.push_back(b);
    y.push_back(2 * a + 0.1 * b + 0.1 * rng.normal());
  }
  auto m = make_matrix({"binary", "small"}, values, y);
  GbtConfig exact = small_config();
  exact.max_bins = 0;
  GbtConfig binned = small_config();
  auto a = fit(m, exact, Loss::squared());
  auto b = fit(m, binned, Loss::squared());
  EXPECT_EQ(predict(a, m), predict(b, m));
}

TEST(GbtPredict, EmptyEnsembleDeterminismAndSchema) {
  BoostedEnsemble leaf;
  leaf.base_prediction = 7.25;
  leaf.feature_names = {"x0", "x1"};
  auto m = noise_matrix(1, 10, 2);
  for (double p : predict(leaf, m)) EXPECT_EQ(p, 7.25);

  auto model = fit(noise_matrix(2, 300, 2), small_config(), Loss::squared());
  EXPECT_EQ(predict(model, m), predict(model, m));
  auto permuted = project(m, {"x1", "x0"});
  EXPECT_PLF_ERROR(predict(model, permuted), ErrorCode::SchemaMismatch);
}

TEST(GbtPredict, TreesRespectThresholdRouting) {
  auto m = noise_matrix(3, 300, 3);
  auto model = fit(m, small_config(), Loss::squared());
  for (const auto& t : model.trees) {
    EXPECT_LE(t.depth(), 3);
    for (const auto& n : t.nodes) {
      if (!n.is_leaf()) {
        EXPECT_GT(n.threshold, 0.0);
        EXPECT_LT(n.threshold, 1.0);
      }
    }
  }
}

TEST(ImportanceRanking, PublishedCumulativeColumn) {
  const std::vector<std::string> names{"Demand(t-1)", "Demand(t-23)", "Demand(t-167)", "Demand(t-24)",
                                       "Demand(t-168)"};
  const std::vector<double> imp{81.54, 6.67, 5.70, 1.45, 1.40};
  auto ranked = rank_importance(names, imp);
  const std::vector<double> cumulative{81.54, 88.21, 93.91, 95.36, 96.76};
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    EXPECT_EQ(ranked[i].name, names[i]);
    EXPECT_NEAR(ranked[i].cumulative, cumulative[i], 0.01);
  }
}

TEST(ImportanceRanking, SingleFeatureAndDegenerateFit) {
  auto one = fit(noise_matrix(1, 100, 1), small_config(), Loss::squared());
  auto r1 = importance_ranking(one);
  ASSERT_EQ(r1.size(), 1u);
  EXPECT_NEAR(r1[0].importance, 100.0, 1e-12);
  EXPECT_NEAR(r1[0].cumulative, 100.0, 1e-12);

  auto flat = fit(noise_matrix(1, 100, 3, std::vector<double>(100, 2.0)), small_config(), Loss::squared());
  auto r3 = importance_ranking(flat);
  ASSERT_EQ(r3.size(), 3u);
  EXPECT_EQ(r3[0].name, "x0");
  EXPECT_EQ(r3[2].name, "x2");
  for (const auto& r : r3) EXPECT_NEAR(r.importance, 100.0 / 3.0, 1e-12);
}

TEST(GbtJson, RoundTripIsBitwise) {
  auto m = noise_matrix(8, 400, 4);
  for (const auto& loss : {Loss::squared(), Loss::pinball(0.25)}) {
    auto model = fit(m, small_config(), loss);
    auto text = to_json(model).dump();
    auto back = from_json(nlohmann::json::parse(text));
    EXPECT_EQ(back, model);
    const auto a = predict(model, m);
    const auto b = predict(back, m);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(std::bit_cast<std::uint64_t>(a[i]), std::bit_cast<std::uint64_t>(b[i]));
    }
  }
  EXPECT_PLF_ERROR(from_json(nlohmann::json{{"version", 1}}), ErrorCode::SchemaMismatch);
}

}  // namespace
}  // namespace plf::gbt

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "plf/error.hpp"
#include "plf/features.hpp"
#include "plf/quantile.hpp"
#include "plf/util.hpp"

namespace plf::gbt {

enum class LossKind { Squared, Pinball };

struct Loss {
  LossKind kind = LossKind::Squared;
  double q = 0.5;  // pinball level; unused for squared loss

  static Loss squared() { return {LossKind::Squared, 0.5}; }
  static Loss pinball(double level) {
    check_level(level);
    return {LossKind::Pinball, level};
  }

  double operator()(double prediction, double actual) const {
    if (kind == LossKind::Squared) {
      const double d = prediction - actual;
      return d * d;
    }
    return plf::pinball(prediction, actual, q);
  }

  /// Pseudo-residual (negative gradient).
  double negative_gradient(double prediction, double actual) const {
    if (kind == LossKind::Squared) return actual - prediction;
    return actual > prediction ? q : q - 1.0;
  }

  bool operator==(const Loss&) const = default;
};

struct GbtConfig {
  int n_trees = 300;
  int max_depth = 4;
  double learning_rate = 0.1;
  int min_samples_leaf = 20;
  double subsample = 1.0;
  std::uint64_t seed = 0;
  // Split candidates per feature. Features with at most this many distinct
  // values are searched exactly; 0 searches every midpoint of every feature.
  int max_bins = 255;

  bool operator==(const GbtConfig&) const = default;
};

inline void validate(const GbtConfig& c) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, "gbt: " + msg); };
  if (c.n_trees < 1) fail("n_trees must be positive");
  if (c.max_depth < 1) fail("max_depth must be positive");
  if (!(c.learning_rate > 0.0 && c.learning_rate <= 1.0)) fail("learning_rate must lie in (0,1]");
  if (c.min_samples_leaf < 1) fail("min_samples_leaf must be positive");
  if (!(c.subsample > 0.0 && c.subsample <= 1.0)) fail("subsample must lie in (0,1]");
  if (c.max_bins < 0 || c.max_bins == 1) fail("max_bins must be 0 (exact) or at least 2");
}

/// Flat binary tree; node 0 is the root. Internal nodes send x left iff x[feature] <= threshold.
struct Tree {
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;

    bool is_leaf() const { return feature < 0; }
    bool operator==(const Node&) const = default;
  };

  std::vector<Node> nodes;

  double predict(std::span<const double> x) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }

  int depth(int i = 0) const {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    if (n.is_leaf()) return 0;
    return 1 + std::max(depth(n.left), depth(n.right));
  }

  // Structural: same splits and leaf values, regardless of node numbering.
  bool operator==(const Tree& other) const { return same_subtree(0, other, 0); }

 private:
  bool same_subtree(int i, const Tree& other, int j) const {
    if (nodes.empty() || other.nodes.empty()) return nodes.empty() && other.nodes.empty();
    const auto& a = nodes[static_cast<std::size_t>(i)];
    const auto& b = other.nodes[static_cast<std::size_t>(j)];
    if (a.is_leaf() || b.is_leaf()) return a.is_leaf() && b.is_leaf() && a.value == b.value;
    return a.feature == b.feature && a.threshold == b.threshold && same_subtree(a.left, other, b.left) &&
           same_subtree(a.right, other, b.right);
  }
};

struct BoostedEnsemble {
  double base_prediction = 0.0;
  std::vector<Tree> trees;
  double learning_rate = 0.1;
  Loss loss;
  std::vector<double> importance;  // percent, sums to 100
  std::vector<std::string> feature_names;
  GbtConfig config;
  // Mean loss after each round; element 0 is the base prediction alone.
  std::vector<double> train_loss;
  std::vector<double> valid_loss;

  double predict_row(std::span<const double> x) const {
    double sum = 0.0;
    for (const auto& tree : trees) sum += tree.predict(x);
    return base_prediction + learning_rate * sum;
  }

  bool operator==(const BoostedEnsemble&) const = default;
};

namespace detail {

/// Feature values replaced by bin codes. Bin b of feature f spans
/// [lower[f][b], upper[f][b]] and bins never share a value.
struct BinnedColumns {
  std::size_t n_rows = 0;
  std::vector<std::uint32_t> codes;  // feature-major
  std::vector<std::vector<double>> lower, upper;
  std::vector<std::size_t> offset;  // start of each feature's bins in a histogram
  std::size_t total_bins = 0;

  const std::uint32_t* feature_codes(std::size_t f) const { return codes.data() + f * n_rows; }
};

inline BinnedColumns bin_columns(const FeatureMatrix& m, int max_bins) {
  BinnedColumns out;
  out.n_rows = m.rows();
  const std::size_t n = m.rows();
  out.codes.resize(n * m.cols());
  out.lower.resize(m.cols());
  out.upper.resize(m.cols());
  out.offset.resize(m.cols());
  std::vector<double> col(n);
  std::vector<double> sorted;
  for (std::size_t f = 0; f < m.cols(); ++f) {
    for (std::size_t r = 0; r < n; ++r) col[r] = m(r, f);
    sorted = col;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> uniq;
    std::vector<std::size_t> counts;
    for (double v : sorted) {
      if (uniq.empty() || v != uniq.back()) {
        uniq.push_back(v);
        counts.push_back(0);
      }
      ++counts.back();
    }
    auto& lo = out.lower[f];
    auto& hi = out.upper[f];
    if (max_bins == 0 || uniq.size() <= static_cast<std::size_t>(max_bins)) {
      lo = uniq;
      hi = uniq;
    } else {
      // Equal-frequency bins on rank; a bin closes once its cumulative rank target is reached.
      const double per_bin = static_cast<double>(n) / max_bins;
      std::size_t seen = 0;
      for (std::size_t u = 0; u < uniq.size(); ++u) {
        if (hi.size() == lo.size()) lo.push_back(uniq[u]);
        seen += counts[u];
        const bool last = u + 1 == uniq.size();
        if (last || static_cast<double>(seen) >= per_bin * static_cast<double>(lo.size()) ||
            uniq.size() - u - 1 < static_cast<std::size_t>(max_bins) - lo.size()) {
          hi.push_back(uniq[u]);
        }
      }
    }
    std::uint32_t* codes = out.codes.data() + f * n;
    for (std::size_t r = 0; r < n; ++r) {
      codes[r] = static_cast<std::uint32_t>(std::lower_bound(hi.begin(), hi.end(), col[r]) - hi.begin());
    }
    out.offset[f] = out.total_bins;
    out.total_bins += hi.size();
  }
  return out;
}

struct Histogram {
  std::vector<double> sum;
  std::vector<std::uint32_t> count;

  void subtract(const Histogram& other) {
    for (std::size_t i = 0; i < sum.size(); ++i) {
      sum[i] -= other.sum[i];
      count[i] -= other.count[i];
    }
  }
};

inline Histogram build_histogram(const BinnedColumns& bins, std::span<const std::uint32_t> rows,
                                 std::span<const double> grad) {
  Histogram h{std::vector<double>(bins.total_bins, 0.0), std::vector<std::uint32_t>(bins.total_bins, 0)};
  for (std::size_t f = 0; f < bins.offset.size(); ++f) {
    const std::uint32_t* codes = bins.feature_codes(f);
    double* sum = h.sum.data() + bins.offset[f];
    std::uint32_t* count = h.count.data() + bins.offset[f];
    for (auto r : rows) {
      sum[codes[r]] += grad[r];
      ++count[codes[r]];
    }
  }
  return h;
}

struct SplitChoice {
  double gain = 0.0;
  int feature = -1;
  std::uint32_t last_left_bin = 0;
  double threshold = 0.0;
};

/// Exhaustive search over histogram boundaries for the best variance-reduction split.
inline SplitChoice best_split(const BinnedColumns& bins, const Histogram& h, double total_sum,
                              std::size_t total_count, std::size_t min_leaf, double min_gain) {
  SplitChoice best;
  const double parent = total_sum * total_sum / static_cast<double>(total_count);
  for (std::size_t f = 0; f < bins.offset.size(); ++f) {
    const std::size_t n_bins = bins.upper[f].size();
    const double* sum = h.sum.data() + bins.offset[f];
    const std::uint32_t* count = h.count.data() + bins.offset[f];
    double left_sum = 0.0;
    std::size_t left_count = 0;
    std::size_t prev = n_bins;  // last non-empty bin seen
    for (std::size_t b = 0; b < n_bins; ++b) {
      if (count[b] == 0) continue;
      if (prev != n_bins) {
        const std::size_t right_count = total_count - left_count;
        if (left_count >= min_leaf && right_count >= min_leaf) {
          const double right_sum = total_sum - left_sum;
          const double gain = left_sum * left_sum / static_cast<double>(left_count) +
                              right_sum * right_sum / static_cast<double>(right_count) - parent;
          if (gain > min_gain && gain > best.gain) {
            best.gain = gain;
            best.feature = static_cast<int>(f);
            best.last_left_bin = static_cast<std::uint32_t>(prev);
            best.threshold = 0.5 * (bins.upper[f][prev] + bins.lower[f][b]);
          }
        }
      }
      left_sum += sum[b];
      left_count += count[b];
      prev = b;
    }
  }
  return best;
}

struct GrownTree {
  Tree tree;
  std::vector<std::uint32_t> split_bin;  // per node, for routing binned rows
};

inline double leaf_value(const Loss& loss, std::span<const std::uint32_t> rows, std::span<const double> targets,
                         std::span<const double> predictions) {
  if (rows.empty()) return 0.0;
  std::vector<double> residuals;
  residuals.reserve(rows.size());
  for (auto r : rows) residuals.push_back(targets[r] - predictions[r]);
  if (loss.kind == LossKind::Squared) return mean_of(residuals);
  return sample_quantile(std::move(residuals), loss.q);
}

/// Grows one tree level by level; histogram of the larger child is parent minus smaller child.
inline GrownTree grow_tree(const BinnedColumns& bins, std::vector<std::uint32_t> root_rows,
                           std::span<const double> grad, std::span<const double> targets,
                           std::span<const double> predictions, const Loss& loss, const GbtConfig& cfg,
                           std::vector<double>& gain_by_feature) {
  struct Pending {
    int node;
    std::vector<std::uint32_t> rows;
    Histogram hist;  // empty when the node cannot split
  };
  GrownTree out;
  const auto min_leaf = static_cast<std::size_t>(cfg.min_samples_leaf);
  auto can_split = [&](std::size_t n_rows, int depth) { return depth < cfg.max_depth && n_rows >= 2 * min_leaf; };

  out.tree.nodes.emplace_back();
  out.split_bin.push_back(0);
  std::vector<Pending> level;
  {
    Histogram h;
    if (can_split(root_rows.size(), 0)) h = build_histogram(bins, root_rows, grad);
    level.push_back({0, std::move(root_rows), std::move(h)});
  }

  for (int depth = 0; !level.empty(); ++depth) {
    std::vector<Pending> next;
    for (auto& p : level) {
      SplitChoice split;
      if (!p.hist.sum.empty()) {
        double total = 0.0, sumsq = 0.0;
        for (auto r : p.rows) {
          total += grad[r];
          sumsq += grad[r] * grad[r];
        }
        split = best_split(bins, p.hist, total, p.rows.size(), min_leaf, 1e-12 * sumsq);
      }
      auto& node = out.tree.nodes[static_cast<std::size_t>(p.node)];
      if (split.feature < 0) {
        node.value = leaf_value(loss, p.rows, targets, predictions);
        continue;
      }
      gain_by_feature[static_cast<std::size_t>(split.feature)] += split.gain;
      const std::uint32_t* codes = bins.feature_codes(static_cast<std::size_t>(split.feature));
      std::vector<std::uint32_t> left_rows, right_rows;
      for (auto r : p.rows) (codes[r] <= split.last_left_bin ? left_rows : right_rows).push_back(r);

      const int left = static_cast<int>(out.tree.nodes.size());
      node.feature = split.feature;
      node.threshold = split.threshold;
      node.left = left;
      node.right = left + 1;
      out.split_bin[static_cast<std::size_t>(p.node)] = split.last_left_bin;
      out.tree.nodes.emplace_back();
      out.tree.nodes.emplace_back();
      out.split_bin.push_back(0);
      out.split_bin.push_back(0);

      const bool split_left = can_split(left_rows.size(), depth + 1);
      const bool split_right = can_split(right_rows.size(), depth + 1);
      Histogram left_hist, right_hist;
      if (split_left || split_right) {
        const bool left_smaller = left_rows.size() <= right_rows.size();
        Histogram small = build_histogram(bins, left_smaller ? left_rows : right_rows, grad);
        p.hist.subtract(small);
        (left_smaller ? left_hist : right_hist) = std::move(small);
        (left_smaller ? right_hist : left_hist) = std::move(p.hist);
        if (!split_left) left_hist = {};
        if (!split_right) right_hist = {};
      }
      next.push_back({left, std::move(left_rows), std::move(left_hist)});
      next.push_back({left + 1, std::move(right_rows), std::move(right_hist)});
    }
    level = std::move(next);
  }
  return out;
}

inline double route_binned(const GrownTree& g, const BinnedColumns& bins, std::uint32_t row) {
  int i = 0;
  while (!g.tree.nodes[static_cast<std::size_t>(i)].is_leaf()) {
    const auto& n = g.tree.nodes[static_cast<std::size_t>(i)];
    const auto code = bins.feature_codes(static_cast<std::size_t>(n.feature))[row];
    i = code <= g.split_bin[static_cast<std::size_t>(i)] ? n.left : n.right;
  }
  return g.tree.nodes[static_cast<std::size_t>(i)].value;
}

inline double mean_loss(const Loss& loss, std::span<const double> predictions, std::span<const double> targets) {
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) total += loss(predictions[i], targets[i]);
  return targets.empty() ? 0.0 : total / static_cast<double>(targets.size());
}

inline void check_schema(const std::vector<std::string>& names, const FeatureMatrix& matrix) {
  if (matrix.column_names() != names) {
    throw Error(ErrorCode::SchemaMismatch, "matrix columns do not match the model's feature names");
  }
}

}  // namespace detail

/// Fits a boosted ensemble. `validation`, when given, is scored after every round but never fitted.
inline BoostedEnsemble fit(const FeatureMatrix& matrix, const GbtConfig& config, const Loss& loss,
                           const FeatureMatrix* validation = nullptr) {
  validate(config);
  if (matrix.empty() || matrix.cols() == 0) throw Error(ErrorCode::EmptyMatrix, "gbt fit needs rows and columns");
  if (loss.kind == LossKind::Pinball) check_level(loss.q);
  if (validation) detail::check_schema(matrix.column_names(), *validation);

  const auto& targets = matrix.targets();
  const std::size_t n = matrix.rows();
  BoostedEnsemble model;
  model.learning_rate = config.learning_rate;
  model.loss = loss;
  model.feature_names = matrix.column_names();
  model.config = config;
  model.base_prediction = loss.kind == LossKind::Squared ? mean_of(targets) : sample_quantile(targets, loss.q);

  const auto bins = detail::bin_columns(matrix, config.max_bins);
  std::vector<double> predictions(n, model.base_prediction);
  std::vector<double> grad(n);
  std::vector<double> gain_by_feature(matrix.cols(), 0.0);
  std::vector<double> valid_pred;
  if (validation) valid_pred.assign(validation->rows(), model.base_prediction);

  model.train_loss.push_back(detail::mean_loss(loss, predictions, targets));
  if (validation) model.valid_loss.push_back(detail::mean_loss(loss, valid_pred, validation->targets()));

  Rng rng(config.seed);
  std::vector<std::uint32_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), 0u);
  const auto sample_size =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(config.subsample * static_cast<double>(n))));

  model.trees.reserve(static_cast<std::size_t>(config.n_trees));
  for (int round = 0; round < config.n_trees; ++round) {
    for (std::size_t i = 0; i < n; ++i) grad[i] = loss.negative_gradient(predictions[i], targets[i]);
    std::vector<std::uint32_t> rows;
    if (sample_size < n) {
      std::vector<std::uint32_t> pool = all_rows;
      for (std::size_t i = 0; i < sample_size; ++i) std::swap(pool[i], pool[i + rng.index(n - i)]);
      rows.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(sample_size));
      std::sort(rows.begin(), rows.end());
    } else {
      rows = all_rows;
    }
    auto grown = detail::grow_tree(bins, std::move(rows), grad, targets, predictions, loss, config, gain_by_feature);
    for (std::uint32_t i = 0; i < n; ++i) {
      predictions[i] += config.learning_rate * detail::route_binned(grown, bins, i);
    }
    model.train_loss.push_back(detail::mean_loss(loss, predictions, targets));
    if (validation) {
      for (std::size_t i = 0; i < validation->rows(); ++i) {
        valid_pred[i] += config.learning_rate * grown.tree.predict(validation->row(i));
      }
      model.valid_loss.push_back(detail::mean_loss(loss, valid_pred, validation->targets()));
    }
    model.trees.push_back(std::move(grown.tree));
  }

  const double total_gain = std::accumulate(gain_by_feature.begin(), gain_by_feature.end(), 0.0);
  model.importance.resize(matrix.cols());
  for (std::size_t f = 0; f < matrix.cols(); ++f) {
    // No positive-gain split anywhere: importance is reported uniform.
    model.importance[f] = total_gain > 0.0 ? 100.0 * gain_by_feature[f] / total_gain
                                           : 100.0 / static_cast<double>(matrix.cols());
  }
  return model;
}

inline std::vector<double> predict(const BoostedEnsemble& model, const FeatureMatrix& matrix) {
  detail::check_schema(model.feature_names, matrix);
  std::vector<double> out(matrix.rows());
  for (std::size_t r = 0; r < matrix.rows(); ++r) out[r] = model.predict_row(matrix.row(r));
  return out;
}

struct RankedFeature {
  std::string name;
  double importance = 0.0;  // percent
  double cumulative = 0.0;  // percent

  bool operator==(const RankedFeature&) const = default;
};

/// Descending by importance; ties broken by name. Cumulative is the running sum.
inline std::vector<RankedFeature> rank_importance(std::span<const std::string> names,
                                                  std::span<const double> importance) {
  if (names.size() != importance.size()) throw Error(ErrorCode::LengthMismatch, "names vs importance");
  std::vector<RankedFeature> ranked;
  ranked.reserve(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) ranked.push_back({names[i], importance[i], 0.0});
  std::sort(ranked.begin(), ranked.end(), [](const RankedFeature& a, const RankedFeature& b) {
    if (a.importance != b.importance) return a.importance > b.importance;
    return a.name < b.name;
  });
  double running = 0.0;
  for (auto& r : ranked) {
    running += r.importance;
    r.cumulative = running;
  }
  return ranked;
}

inline std::vector<RankedFeature> importance_ranking(const BoostedEnsemble& model) {
  return rank_importance(model.feature_names, model.importance);
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr int kModelVersion = 1;

inline nlohmann::json config_to_json(const GbtConfig& c) {
  return {{"n_trees", c.n_trees},         {"max_depth", c.max_depth}, {"learning_rate", c.learning_rate},
          {"min_samples_leaf", c.min_samples_leaf}, {"subsample", c.subsample}, {"seed", c.seed},
          {"max_bins", c.max_bins}};
}

namespace detail {

inline nlohmann::json node_to_json(const Tree& tree, int i) {
  const auto& n = tree.nodes[static_cast<std::size_t>(i)];
  if (n.is_leaf()) return {{"leaf", n.value}};
  return {{"feature", n.feature},
          {"threshold", n.threshold},
          {"left", node_to_json(tree, n.left)},
          {"right", node_to_json(tree, n.right)}};
}

inline int node_from_json(const nlohmann::json& j, Tree& tree, std::size_t n_features) {
  const int index = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (j.contains("leaf")) {
    tree.nodes.back().value = j.at("leaf").get<double>();
    return index;
  }
  const int feature = j.at("feature").get<int>();
  if (feature < 0 || static_cast<std::size_t>(feature) >= n_features) {
    throw Error(ErrorCode::SchemaMismatch, "tree references feature index " + std::to_string(feature));
  }
  const double threshold = j.at("threshold").get<double>();
  const int left = node_from_json(j.at("left"), tree, n_features);
  const int right = node_from_json(j.at("right"), tree, n_features);
  auto& node = tree.nodes[static_cast<std::size_t>(index)];
  node.feature = feature;
  node.threshold = threshold;
  node.left = left;
  node.right = right;
  return index;
}

}  // namespace detail

inline GbtConfig config_from_json(const nlohmann::json& j) {
  GbtConfig c;
  c.n_trees = j.at("n_trees").get<int>();
  c.max_depth = j.at("max_depth").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.min_samples_leaf = j.at("min_samples_leaf").get<int>();
  c.subsample = j.at("subsample").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.max_bins = j.value("max_bins", 255);
  return c;
}

inline nlohmann::json to_json(const BoostedEnsemble& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) trees.push_back(detail::node_to_json(t, 0));
  nlohmann::json loss = {{"kind", m.loss.kind == LossKind::Squared ? "squared" : "pinball"}};
  if (m.loss.kind == LossKind::Pinball) loss["q"] = m.loss.q;
  return {{"format", "plf.boosted_ensemble"},
          {"version", kModelVersion},
          {"config", config_to_json(m.config)},
          {"loss", loss},
          {"learning_rate", m.learning_rate},
          {"feature_names", m.feature_names},
          {"base_prediction", m.base_prediction},
          {"importance", m.importance},
          {"train_loss", m.train_loss},
          {"valid_loss", m.valid_loss},
          {"trees", trees}};
}

inline BoostedEnsemble from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kModelVersion) {
      throw Error(ErrorCode::SchemaMismatch, "unsupported model version");
    }
    BoostedEnsemble m;
    m.config = config_from_json(j.at("config"));
    const auto& loss = j.at("loss");
    m.loss = loss.at("kind").get<std::string>() == "squared" ? Loss::squared()
                                                             : Loss::pinball(loss.at("q").get<double>());
    m.learning_rate = j.at("learning_rate").get<double>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.base_prediction = j.at("base_prediction").get<double>();
    m.importance = j.at("importance").get<std::vector<double>>();
    m.train_loss = j.value("train_loss", std::vector<double>{});
    m.valid_loss = j.value("valid_loss", std::vector<double>{});
    for (const auto& t : j.at("trees")) {
      Tree tree;
      detail::node_from_json(t, tree, m.feature_names.size());
      m.trees.push_back(std::move(tree));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("malformed ensemble document: ") + e.what());
  }
}

}  // namespace plf::gbt

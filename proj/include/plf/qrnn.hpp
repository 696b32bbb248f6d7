#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "plf/error.hpp"
#include "plf/features.hpp"
#include "plf/quantile.hpp"
#include "plf/util.hpp"

namespace plf::qrnn {

enum class Activation { Sigmoid, Tanh, Relu };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
  }
  return "sigmoid";
}

inline Activation activation_from_string(const std::string& name) {
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw Error(ErrorCode::InvalidConfig, "unknown activation '" + name + "'");
}

struct QrnnConfig {
  std::vector<int> hidden_layers{10};
  std::vector<double> quantiles = default_levels();
  int epochs = 60;
  int batch_size = 64;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  Activation activation = Activation::Sigmoid;

  bool operator==(const QrnnConfig&) const = default;
};

inline void validate(const QrnnConfig& c) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, "qrnn: " + msg); };
  for (int h : c.hidden_layers) {
    if (h < 1) fail("hidden layer widths must be positive");
  }
  validate_levels(c.quantiles);
  if (c.epochs < 1) fail("epochs must be positive");
  if (c.batch_size < 1) fail("batch_size must be positive");
  if (!(c.learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) fail("momentum must lie in [0,1)");
}

/// "(10,5)" style label used in model names.
inline std::string structure_label(const std::vector<int>& hidden) {
  std::string out = "(";
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(hidden[i]);
  }
  return out + ")";
}

struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;  // outputs x inputs, row-major
  std::vector<double> bias;

  bool operator==(const DenseLayer&) const = default;
};

/// Standardized inputs beyond this many training std devs count as extrapolation.
inline constexpr double kExtrapolationSigma = 6.0;

/// Feedforward net with one linear output per quantile level. Hidden layers are shared.
struct QuantileNet {
  std::vector<DenseLayer> layers;  // hidden layers then the output layer
  std::vector<double> input_mean, input_std;
  double target_mean = 0.0;
  double target_std = 1.0;
  QrnnConfig config;
  std::vector<std::string> feature_names;
  // Training objective (standardized units) before training and after each epoch.
  std::vector<double> loss_history;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }

  bool operator==(const QuantileNet&) const = default;
};

namespace detail {

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::Sigmoid:
      if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
      else {
        const double e = std::exp(x);
        return e / (1.0 + e);
      }
    case Activation::Tanh: return std::tanh(x);
    case Activation::Relu: return x > 0.0 ? x : 0.0;
  }
  return x;
}

/// Derivative expressed through the activation output y (and pre-activation x for relu).
inline double activate_derivative(Activation a, double x, double y) {
  switch (a) {
    case Activation::Sigmoid: return y * (1.0 - y);
    case Activation::Tanh: return 1.0 - y * y;
    case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

/// d/d(pred) of the pinball loss. At the kink the under-forecast branch (-q) is used.
inline double pinball_slope(double prediction, double actual, double q) {
  return prediction > actual ? 1.0 - q : -q;
}

/// Per-sample forward/backward scratch space.
struct Workspace {
  std::vector<std::vector<double>> pre;   // pre-activations per layer
  std::vector<std::vector<double>> post;  // post[0] is the input, post[l+1] the layer output
  std::vector<std::vector<double>> delta;

  explicit Workspace(const QuantileNet& net) {
    post.emplace_back(net.layers.empty() ? 0 : net.layers.front().inputs);
    for (const auto& l : net.layers) {
      pre.emplace_back(l.outputs);
      post.emplace_back(l.outputs);
      delta.emplace_back(l.outputs);
    }
  }
};

inline void forward(const QuantileNet& net, std::span<const double> z, Workspace& ws) {
  std::copy(z.begin(), z.end(), ws.post[0].begin());
  const std::size_t n_layers = net.layers.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = net.layers[l];
    const double* in = ws.post[l].data();
    double* pre = ws.pre[l].data();
    double* out = ws.post[l + 1].data();
    const bool hidden = l + 1 < n_layers;
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      const double* w = layer.weights.data() + o * layer.inputs;
      double acc = layer.bias[o];
      for (std::size_t i = 0; i < layer.inputs; ++i) acc += w[i] * in[i];
      pre[o] = acc;
      out[o] = hidden ? activate(net.config.activation, acc) : acc;
    }
  }
}

/// Accumulates scale * dLoss/dtheta for one sample into `grad` (flattened parameter order).
/// Returns the sample's summed pinball loss.
inline double backward(const QuantileNet& net, double target, Workspace& ws, double scale, std::vector<double>& grad) {
  const std::size_t n_layers = net.layers.size();
  const auto& levels = net.config.quantiles;
  const auto& out = ws.post[n_layers];
  double loss = 0.0;
  auto& d_out = ws.delta[n_layers - 1];
  for (std::size_t j = 0; j < levels.size(); ++j) {
    loss += out[j] >= target ? (1.0 - levels[j]) * (out[j] - target) : levels[j] * (target - out[j]);
    d_out[j] = scale * pinball_slope(out[j], target, levels[j]);
  }

  // Offsets of each layer's block in the flattened gradient.
  std::size_t offset = net.parameter_count();
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& layer = net.layers[l];
    offset -= layer.weights.size() + layer.bias.size();
    const double* in = ws.post[l].data();
    const auto& d = ws.delta[l];
    double* gw = grad.data() + offset;
    double* gb = gw + layer.weights.size();
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      const double dv = d[o];
      if (dv == 0.0) continue;
      double* row = gw + o * layer.inputs;
      for (std::size_t i = 0; i < layer.inputs; ++i) row[i] += dv * in[i];
      gb[o] += dv;
    }
    if (l == 0) break;
    auto& d_prev = ws.delta[l - 1];
    const auto& pre_prev = ws.pre[l - 1];
    const auto& post_prev = ws.post[l];
    for (std::size_t i = 0; i < layer.inputs; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < layer.outputs; ++o) acc += layer.weights[o * layer.inputs + i] * d[o];
      d_prev[i] = acc * activate_derivative(net.config.activation, pre_prev[i], post_prev[i]);
    }
  }
  return loss;
}

inline std::vector<double> flatten(const QuantileNet& net) {
  std::vector<double> theta;
  theta.reserve(net.parameter_count());
  for (const auto& l : net.layers) {
    theta.insert(theta.end(), l.weights.begin(), l.weights.end());
    theta.insert(theta.end(), l.bias.begin(), l.bias.end());
  }
  return theta;
}

inline void unflatten(QuantileNet& net, std::span<const double> theta) {
  std::size_t k = 0;
  for (auto& l : net.layers) {
    for (auto& w : l.weights) w = theta[k++];
    for (auto& b : l.bias) b = theta[k++];
  }
}

inline void check_schema(const QuantileNet& net, const FeatureMatrix& matrix) {
  if (matrix.column_names() != net.feature_names) {
    throw Error(ErrorCode::SchemaMismatch, "matrix columns do not match the network's feature names");
  }
}

/// Inputs standardized with the training statistics, row-major.
inline std::vector<double> standardize_inputs(const QuantileNet& net, const FeatureMatrix& m) {
  std::vector<double> z(m.values().size());
  const std::size_t p = m.cols();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < p; ++c) z[r * p + c] = (m(r, c) - net.input_mean[c]) / net.input_std[c];
  }
  return z;
}

inline std::vector<double> standardize_targets(const QuantileNet& net, const FeatureMatrix& m) {
  std::vector<double> y(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) y[r] = (m.targets()[r] - net.target_mean) / net.target_std;
  return y;
}

/// Mean over rows of the pinball loss summed across levels, in standardized units.
inline double objective(const QuantileNet& net, std::span<const double> z, std::span<const double> y,
                        std::span<const std::size_t> rows) {
  Workspace ws(net);
  const std::size_t p = net.layers.front().inputs;
  const auto& levels = net.config.quantiles;
  double total = 0.0;
  for (auto r : rows) {
    forward(net, z.subspan(r * p, p), ws);
    const auto& out = ws.post.back();
    for (std::size_t j = 0; j < levels.size(); ++j) total += plf::pinball(out[j], y[r], levels[j]);
  }
  return rows.empty() ? 0.0 : total / static_cast<double>(rows.size());
}

}  // namespace detail

/// Network with training-set standardization and seeded Xavier-uniform weights; biases start at zero.
inline QuantileNet initialize(const FeatureMatrix& matrix, const QrnnConfig& config) {
  validate(config);
  if (matrix.empty() || matrix.cols() == 0) throw Error(ErrorCode::EmptyMatrix, "qrnn fit needs rows and columns");
  const auto& y = matrix.targets();
  if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); })) {
    throw Error(ErrorCode::DegenerateTarget, "all training targets are identical");
  }

  QuantileNet net;
  net.config = config;
  net.feature_names = matrix.column_names();
  const std::size_t p = matrix.cols();
  const auto n = static_cast<double>(matrix.rows());
  net.input_mean.assign(p, 0.0);
  net.input_std.assign(p, 0.0);
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    for (std::size_t c = 0; c < p; ++c) net.input_mean[c] += matrix(r, c);
  }
  for (auto& m : net.input_mean) m /= n;
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    for (std::size_t c = 0; c < p; ++c) {
      const double d = matrix(r, c) - net.input_mean[c];
      net.input_std[c] += d * d;
    }
  }
  for (auto& s : net.input_std) {
    s = std::sqrt(s / n);
    if (!(s > 1e-12)) s = 1.0;  // constant column
  }
  net.target_mean = mean_of(y);
  double var = 0.0;
  for (double v : y) var += (v - net.target_mean) * (v - net.target_mean);
  net.target_std = std::sqrt(var / n);

  Rng rng(config.seed);
  std::size_t fan_in = p;
  std::vector<std::size_t> widths(config.hidden_layers.begin(), config.hidden_layers.end());
  widths.push_back(config.quantiles.size());
  for (auto width : widths) {
    DenseLayer layer;
    layer.inputs = fan_in;
    layer.outputs = width;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + width));
    layer.weights.resize(width * fan_in);
    for (auto& w : layer.weights) w = rng.uniform(-limit, limit);
    layer.bias.assign(width, 0.0);
    net.layers.push_back(std::move(layer));
    fan_in = width;
  }
  return net;
}

/// Mini-batch gradient descent with momentum on the mean summed pinball loss.
inline void train(QuantileNet& net, const FeatureMatrix& matrix) {
  detail::check_schema(net, matrix);
  const auto& cfg = net.config;
  const auto z = detail::standardize_inputs(net, matrix);
  const auto y = detail::standardize_targets(net, matrix);
  const std::size_t n = matrix.rows();
  const std::size_t p = matrix.cols();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  // Shuffling draws from a stream separate from initialization.
  Rng rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
  std::vector<double> theta = detail::flatten(net);
  std::vector<double> velocity(theta.size(), 0.0);
  std::vector<double> grad(theta.size());
  detail::Workspace ws(net);

  net.loss_history.clear();
  net.loss_history.push_back(detail::objective(net, z, y, order));
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const double scale = 1.0 / static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t r = order[k];
        detail::forward(net, std::span<const double>(z).subspan(r * p, p), ws);
        detail::backward(net, y[r], ws, scale, grad);
      }
      for (std::size_t i = 0; i < theta.size(); ++i) {
        velocity[i] = cfg.momentum * velocity[i] - cfg.learning_rate * grad[i];
        theta[i] += velocity[i];
      }
      detail::unflatten(net, theta);
    }
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    net.loss_history.push_back(detail::objective(net, z, y, all));
  }
}

inline QuantileNet fit(const FeatureMatrix& matrix, const QrnnConfig& config) {
  QuantileNet net = initialize(matrix, config);
  train(net, matrix);
  return net;
}

/// Quantile forecast in target units; rows are sorted so levels never cross.
inline QuantileForecast predict(const QuantileNet& net, const FeatureMatrix& matrix) {
  detail::check_schema(net, matrix);
  const auto z = detail::standardize_inputs(net, matrix);
  const std::size_t p = matrix.cols();
  const std::size_t width = net.config.quantiles.size();
  std::vector<double> values(matrix.rows() * width);
  std::size_t extrapolated = 0;
  detail::Workspace ws(net);
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    auto zr = std::span<const double>(z).subspan(r * p, p);
    if (std::any_of(zr.begin(), zr.end(), [](double v) { return std::abs(v) > kExtrapolationSigma; })) {
      ++extrapolated;
    }
    detail::forward(net, zr, ws);
    const auto& out = ws.post.back();
    for (std::size_t j = 0; j < width; ++j) values[r * width + j] = net.target_mean + net.target_std * out[j];
  }
  return QuantileForecast::sorted(matrix.instants(), net.config.quantiles, std::move(values), extrapolated);
}

// ---------------------------------------------------------------------------
// Gradient verification

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t parameters_checked = 0;
  std::size_t parameters_skipped = 0;  // a perturbation crossed a kink
  std::size_t rows_excluded = 0;       // residual within 10*epsilon of zero at some level
};

/// Analytic gradient of the training objective (over `rows`) in flattened parameter order.
inline std::vector<double> objective_gradient(const QuantileNet& net, std::span<const double> z,
                                              std::span<const double> y, std::span<const std::size_t> rows) {
  std::vector<double> grad(net.parameter_count(), 0.0);
  detail::Workspace ws(net);
  const std::size_t p = net.layers.front().inputs;
  const double scale = rows.empty() ? 0.0 : 1.0 / static_cast<double>(rows.size());
  for (auto r : rows) {
    detail::forward(net, z.subspan(r * p, p), ws);
    detail::backward(net, y[r], ws, scale, grad);
  }
  return grad;
}

/// Compares backprop gradients with central finite differences. Relative error
/// uses max(|analytic|, |numeric|, 1e-6) as denominator so that gradients near
/// zero are not scored on round-off alone.
inline GradCheckResult grad_check(const QuantileNet& net, const FeatureMatrix& matrix, double epsilon) {
  detail::check_schema(net, matrix);
  const auto z = detail::standardize_inputs(net, matrix);
  const auto y = detail::standardize_targets(net, matrix);
  const std::size_t p = matrix.cols();
  const std::size_t width = net.config.quantiles.size();
  GradCheckResult result;

  auto residual_signs = [&](const QuantileNet& candidate, std::span<const std::size_t> rows) {
    std::vector<int> signs;
    detail::Workspace ws(candidate);
    for (auto r : rows) {
      detail::forward(candidate, std::span<const double>(z).subspan(r * p, p), ws);
      for (std::size_t j = 0; j < width; ++j) signs.push_back(ws.post.back()[j] > y[r] ? 1 : -1);
    }
    return signs;
  };

  std::vector<std::size_t> rows;
  {
    detail::Workspace ws(net);
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
      detail::forward(net, std::span<const double>(z).subspan(r * p, p), ws);
      const auto& out = ws.post.back();
      bool near_kink = false;
      for (std::size_t j = 0; j < width; ++j) near_kink |= std::abs(out[j] - y[r]) <= 10.0 * epsilon;
      if (near_kink) {
        ++result.rows_excluded;
      } else {
        rows.push_back(r);
      }
    }
  }

  // Per-term losses; the objective is their mean over rows. Differencing term by term before
  // summing keeps cancellation error far below the tolerance at epsilon = 1e-5.
  auto loss_terms = [&](const QuantileNet& candidate) {
    std::vector<double> terms;
    terms.reserve(rows.size() * width);
    detail::Workspace ws(candidate);
    for (auto r : rows) {
      detail::forward(candidate, std::span<const double>(z).subspan(r * p, p), ws);
      for (std::size_t j = 0; j < width; ++j) {
        terms.push_back(plf::pinball(ws.post.back()[j], y[r], candidate.config.quantiles[j]));
      }
    }
    return terms;
  };

  const auto analytic = objective_gradient(net, z, y, rows);
  const auto base_signs = residual_signs(net, rows);
  const auto theta = detail::flatten(net);
  QuantileNet probe = net;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    auto shifted = theta;
    shifted[k] = theta[k] + epsilon;
    detail::unflatten(probe, shifted);
    const auto plus = loss_terms(probe);
    const bool plus_ok = residual_signs(probe, rows) == base_signs;
    shifted[k] = theta[k] - epsilon;
    detail::unflatten(probe, shifted);
    const auto minus = loss_terms(probe);
    const bool minus_ok = residual_signs(probe, rows) == base_signs;
    if (!plus_ok || !minus_ok) {
      ++result.parameters_skipped;
      continue;
    }
    double diff = 0.0;
    for (std::size_t t = 0; t < plus.size(); ++t) diff += plus[t] - minus[t];
    const double numeric = rows.empty() ? 0.0 : diff / static_cast<double>(rows.size()) / (2.0 * epsilon);
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-6});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic[k] - numeric) / denom);
    ++result.parameters_checked;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr int kNetVersion = 1;

inline nlohmann::json config_to_json(const QrnnConfig& c) {
  return {{"hidden_layers", c.hidden_layers}, {"quantiles", c.quantiles},       {"epochs", c.epochs},
          {"batch_size", c.batch_size},       {"learning_rate", c.learning_rate}, {"momentum", c.momentum},
          {"seed", c.seed},                   {"activation", to_string(c.activation)}};
}

inline QrnnConfig config_from_json(const nlohmann::json& j) {
  QrnnConfig c;
  c.hidden_layers = j.at("hidden_layers").get<std::vector<int>>();
  c.quantiles = j.at("quantiles").get<std::vector<double>>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.activation = activation_from_string(j.at("activation").get<std::string>());
  return c;
}

inline nlohmann::json to_json(const QuantileNet& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers) {
    layers.push_back({{"inputs", l.inputs}, {"outputs", l.outputs}, {"weights", l.weights}, {"bias", l.bias}});
  }
  return {{"format", "plf.quantile_net"},
          {"version", kNetVersion},
          {"config", config_to_json(net.config)},
          {"feature_names", net.feature_names},
          {"input_mean", net.input_mean},
          {"input_std", net.input_std},
          {"target_mean", net.target_mean},
          {"target_std", net.target_std},
          {"loss_history", net.loss_history},
          {"layers", layers}};
}

inline QuantileNet from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kNetVersion) throw Error(ErrorCode::SchemaMismatch, "unsupported net version");
    QuantileNet net;
    net.config = config_from_json(j.at("config"));
    net.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    net.input_mean = j.at("input_mean").get<std::vector<double>>();
    net.input_std = j.at("input_std").get<std::vector<double>>();
    net.target_mean = j.at("target_mean").get<double>();
    net.target_std = j.at("target_std").get<double>();
    net.loss_history = j.value("loss_history", std::vector<double>{});
    for (const auto& l : j.at("layers")) {
      DenseLayer layer;
      layer.inputs = l.at("inputs").get<std::size_t>();
      layer.outputs = l.at("outputs").get<std::size_t>();
      layer.weights = l.at("weights").get<std::vector<double>>();
      layer.bias = l.at("bias").get<std::vector<double>>();
      if (layer.weights.size() != layer.inputs * layer.outputs || layer.bias.size() != layer.outputs) {
        throw Error(ErrorCode::SchemaMismatch, "layer dimensions disagree");
      }
      net.layers.push_back(std::move(layer));
    }
    if (net.layers.empty() || net.layers.front().inputs != net.feature_names.size() ||
        net.layers.back().outputs != net.config.quantiles.size() ||
        net.input_mean.size() != net.feature_names.size() || net.input_std.size() != net.feature_names.size()) {
      throw Error(ErrorCode::SchemaMismatch, "network shape does not match its feature names or levels");
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("malformed network document: ") + e.what());
  }
}

}  // namespace plf::qrnn

#include "connlab/network.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "connlab/errors.hpp"
#include "connlab/io.hpp"

namespace connlab {

void NetworkSpec::validate() const {
  if (input_dim <= 0) throw InvalidArgumentError("spec: input_dim must be positive");
  if (hidden_sizes.empty()) throw InvalidArgumentError("spec: at least one hidden layer required");
  for (int h : hidden_sizes) {
    if (h <= 0) throw InvalidArgumentError("spec: hidden sizes must be positive");
  }
  if (n_classes < 2) throw InvalidArgumentError("spec: n_classes must be >= 2");
  if (!dropout_rates.empty() && dropout_rates.size() != hidden_sizes.size()) {
    throw InvalidArgumentError("spec: dropout_rates must match hidden layer count");
  }
  for (double p : dropout_rates) {
    if (!(p >= 0.0 && p < 1.0)) throw InvalidArgumentError("spec: dropout rate must be in [0,1)");
  }
}

NetworkSpec make_spec(int input_dim, int n_hidden_layers, int first_layer_neurons,
                      double last_layer_dropout, int n_classes) {
  if (n_hidden_layers < 1) throw InvalidArgumentError("make_spec: need at least one hidden layer");
  NetworkSpec spec;
  spec.input_dim = input_dim;
  spec.n_classes = n_classes;
  spec.hidden_sizes.push_back(first_layer_neurons);
  for (int l = 1; l < n_hidden_layers; ++l) {
    spec.hidden_sizes.push_back(std::max(1, first_layer_neurons / 2));
  }
  spec.dropout_rates.assign(spec.hidden_sizes.size(), 0.0);
  spec.dropout_rates.back() = last_layer_dropout;
  spec.validate();
  return spec;
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> scores) {
  double max_score = scores[0];
  for (double s : scores) max_score = std::max(max_score, s);
  std::vector<double> out(scores.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    out[k] = std::exp(scores[k] - max_score);
    sum += out[k];
  }
  for (double& q : out) q /= sum;
  return out;
}

double guarded_nll(double p) { return -std::log(std::max(p, 1e-300)); }

namespace {

std::vector<int> layer_sizes(const NetworkSpec& spec) {
  std::vector<int> sizes;
  sizes.push_back(spec.input_dim);
  for (int h : spec.hidden_sizes) sizes.push_back(h);
  sizes.push_back(spec.n_classes);
  return sizes;
}

void check_masks(const Network& net, const DropoutMasks& masks) {
  if (masks.keep.size() != static_cast<std::size_t>(net.spec.n_hidden())) {
    throw InvalidArgumentError("masks: expected one entry per hidden layer");
  }
  for (int l = 0; l < net.spec.n_hidden(); ++l) {
    const auto& keep = masks.keep[static_cast<std::size_t>(l)];
    if (!keep.empty() &&
        keep.size() != static_cast<std::size_t>(net.spec.hidden_sizes[static_cast<std::size_t>(l)])) {
      throw InvalidArgumentError("masks: layer " + std::to_string(l) + " mask size mismatch");
    }
  }
}

// y = W x + b, accumulated in index order so that independent call sites
// produce bit-identical sums.
void affine(const Matrix& w, std::span<const double> x, const std::vector<double>& b,
            std::vector<double>& y) {
  y.resize(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double* row = w.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) acc += row[j] * x[j];
    y[i] = acc + b[i];
  }
}

// Applies the layer's dropout transform in place. Kept neurons are copied
// untouched so a rate-0 layer is bit-identical across all modes.
void apply_dropout(std::vector<double>& a, const std::vector<std::uint8_t>& keep, double rate) {
  if (!keep.empty()) {
    for (std::size_t j = 0; j < a.size(); ++j) {
      if (!keep[j]) a[j] = 0.0;
    }
  } else if (rate != 0.0) {
    const double retain = 1.0 - rate;
    for (double& v : a) v *= retain;
  }
}

}  // namespace

Network init_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto sizes = layer_sizes(spec);
  Network net;
  net.spec = spec;
  Rng rng(mix_seed({seed, 0x11}));
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto fan_in = static_cast<std::size_t>(sizes[l]);
    const auto fan_out = static_cast<std::size_t>(sizes[l + 1]);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(fan_out, 0.0);
  }
  return net;
}

DropoutMasks sample_masks(const NetworkSpec& spec, Rng& rng) {
  DropoutMasks masks;
  masks.keep.resize(static_cast<std::size_t>(spec.n_hidden()));
  for (int l = 0; l < spec.n_hidden(); ++l) {
    const double p = spec.dropout_rate(l);
    if (p == 0.0) continue;
    auto& keep = masks.keep[static_cast<std::size_t>(l)];
    keep.resize(static_cast<std::size_t>(spec.hidden_sizes[static_cast<std::size_t>(l)]));
    for (auto& k : keep) k = rng.bernoulli(p) ? 0 : 1;
  }
  return masks;
}

DropoutMasks deterministic_masks(const NetworkSpec& spec) {
  DropoutMasks masks;
  masks.keep.resize(static_cast<std::size_t>(spec.n_hidden()));
  return masks;
}

Activations forward(const Network& net, std::span<const double> x, const DropoutMasks& masks) {
  if (static_cast<int>(x.size()) != net.spec.input_dim) {
    throw InvalidArgumentError("forward: input has length " + std::to_string(x.size()) +
                               ", expected " + std::to_string(net.spec.input_dim));
  }
  check_masks(net, masks);

  Activations act;
  act.hidden.resize(static_cast<std::size_t>(net.spec.n_hidden()));
  std::span<const double> cur = x;
  for (int l = 0; l < net.spec.n_hidden(); ++l) {
    auto& a = act.hidden[static_cast<std::size_t>(l)];
    affine(net.weights[static_cast<std::size_t>(l)], cur,
           net.biases[static_cast<std::size_t>(l)], a);
    for (double& v : a) v = sigmoid(v);
    apply_dropout(a, masks.keep[static_cast<std::size_t>(l)], net.spec.dropout_rate(l));
    cur = a;
  }
  affine(net.weights.back(), cur, net.biases.back(), act.scores);
  act.probs = softmax(act.scores);
  return act;
}

Activations forward(const Network& net, std::span<const double> x) {
  return forward(net, x, deterministic_masks(net.spec));
}

namespace {

double regularization_l1(const Network& net) {
  double sum = 0.0;
  for (const auto& w : net.weights)
    for (double v : w.data()) sum += std::abs(v);
  return sum;
}

double regularization_l2_sq(const Network& net) {
  double sum = 0.0;
  for (const auto& w : net.weights)
    for (double v : w.data()) sum += v * v;
  return sum;
}

void check_batch(const Network& net, const std::vector<std::vector<double>>& xs,
                 const std::vector<int>& ys) {
  if (xs.empty()) throw InvalidArgumentError("batch must be non-empty");
  if (xs.size() != ys.size()) throw InvalidArgumentError("batch: xs/ys size mismatch");
  for (int y : ys) {
    if (y < 0 || y >= net.spec.n_classes) {
      throw InvalidArgumentError("batch: label " + std::to_string(y) + " out of range");
    }
  }
}

}  // namespace

LossBreakdown loss(const Network& net, const std::vector<std::vector<double>>& xs,
                   const std::vector<int>& ys, double l1_weight, double l2_weight,
                   const DropoutMasks& masks) {
  check_batch(net, xs, ys);
  LossBreakdown out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Activations act = forward(net, xs[i], masks);
    out.data_loss += guarded_nll(act.probs[static_cast<std::size_t>(ys[i])]);
  }
  out.data_loss /= static_cast<double>(xs.size());
  out.l1_term = l1_weight * regularization_l1(net);
  out.l2_term = 0.5 * l2_weight * regularization_l2_sq(net);
  out.total = out.data_loss + out.l1_term + out.l2_term;
  return out;
}

LossBreakdown loss(const Network& net, const std::vector<std::vector<double>>& xs,
                   const std::vector<int>& ys, double l1_weight, double l2_weight) {
  return loss(net, xs, ys, l1_weight, l2_weight, deterministic_masks(net.spec));
}

namespace {

struct BatchBackprop {
  ParamGradients grads;
  double data_loss = 0.0;  // averaged
};

// Backpropagation through softmax cross entropy (output delta q - p),
// sigmoid derivative a(1-a), and the layer dropout transform. Data deltas
// are averaged over the batch; elastic-net terms added once at the end.
BatchBackprop backprop_batch(const Network& net, const std::vector<std::vector<double>>& xs,
                             const std::vector<int>& ys, double l1_weight, double l2_weight,
                             const DropoutMasks& masks) {
  check_batch(net, xs, ys);
  check_masks(net, masks);

  const int n_hidden = net.spec.n_hidden();
  const int n_layers = net.n_layers();
  BatchBackprop out;
  out.grads.weights.reserve(static_cast<std::size_t>(n_layers));
  out.grads.biases.reserve(static_cast<std::size_t>(n_layers));
  for (const auto& w : net.weights) out.grads.weights.emplace_back(w.rows(), w.cols());
  for (const auto& b : net.biases) out.grads.biases.emplace_back(b.size(), 0.0);

  const double inv_batch = 1.0 / static_cast<double>(xs.size());

  // Reused per-item buffers.
  std::vector<std::vector<double>> raw(static_cast<std::size_t>(n_hidden));   // sigmoid outputs
  std::vector<std::vector<double>> fed(static_cast<std::size_t>(n_hidden));   // post-dropout
  std::vector<double> scores;
  std::vector<double> delta;
  std::vector<double> delta_prev;

  for (std::size_t item = 0; item < xs.size(); ++item) {
    const std::vector<double>& x = xs[item];
    if (static_cast<int>(x.size()) != net.spec.input_dim) {
      throw InvalidArgumentError("gradients: input dimension mismatch");
    }

    std::span<const double> cur = x;
    for (int l = 0; l < n_hidden; ++l) {
      auto& a = raw[static_cast<std::size_t>(l)];
      affine(net.weights[static_cast<std::size_t>(l)], cur,
             net.biases[static_cast<std::size_t>(l)], a);
      for (double& v : a) v = sigmoid(v);
      fed[static_cast<std::size_t>(l)] = a;
      apply_dropout(fed[static_cast<std::size_t>(l)], masks.keep[static_cast<std::size_t>(l)],
                    net.spec.dropout_rate(l));
      cur = fed[static_cast<std::size_t>(l)];
    }
    affine(net.weights.back(), cur, net.biases.back(), scores);
    const std::vector<double> probs = softmax(scores);
    out.data_loss += guarded_nll(probs[static_cast<std::size_t>(ys[item])]);

    // Output delta (averaged): (q - p) / batch
    delta.assign(probs.begin(), probs.end());
    delta[static_cast<std::size_t>(ys[item])] -= 1.0;
    for (double& v : delta) v *= inv_batch;

    for (int l = n_layers - 1; l >= 0; --l) {
      const std::span<const double> input =
          l == 0 ? std::span<const double>(x) : std::span<const double>(fed[static_cast<std::size_t>(l - 1)]);
      auto& gw = out.grads.weights[static_cast<std::size_t>(l)];
      auto& gb = out.grads.biases[static_cast<std::size_t>(l)];
      for (std::size_t i = 0; i < gw.rows(); ++i) {
        const double d = delta[i];
        gb[i] += d;
        double* grow = gw.row(i);
        for (std::size_t j = 0; j < gw.cols(); ++j) grow[j] += d * input[j];
      }
      if (l == 0) break;

      // delta for the hidden layer below: (W^T delta) * dropout * a(1-a)
      const Matrix& w = net.weights[static_cast<std::size_t>(l)];
      delta_prev.assign(w.cols(), 0.0);
      for (std::size_t i = 0; i < w.rows(); ++i) {
        const double d = delta[i];
        const double* row = w.row(i);
        for (std::size_t j = 0; j < w.cols(); ++j) delta_prev[j] += row[j] * d;
      }
      const int hl = l - 1;
      const auto& keep = masks.keep[static_cast<std::size_t>(hl)];
      const double rate = net.spec.dropout_rate(hl);
      const auto& a = raw[static_cast<std::size_t>(hl)];
      for (std::size_t j = 0; j < delta_prev.size(); ++j) {
        double t = 1.0;
        if (!keep.empty()) {
          t = keep[j] ? 1.0 : 0.0;
        } else if (rate != 0.0) {
          t = 1.0 - rate;
        }
        delta_prev[j] *= t * a[j] * (1.0 - a[j]);
      }
      delta = delta_prev;
    }
  }
  out.data_loss *= inv_batch;

  // Elastic net: beta * sign(w) (0 at w == 0) + gamma * w.
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const auto& w = net.weights[l].data();
    auto& g = out.grads.weights[l].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double sign = w[k] > 0.0 ? 1.0 : (w[k] < 0.0 ? -1.0 : 0.0);
      g[k] += l1_weight * sign + l2_weight * w[k];
    }
  }
  return out;
}

}  // namespace

ParamGradients gradients(const Network& net, const std::vector<std::vector<double>>& xs,
                         const std::vector<int>& ys, double l1_weight, double l2_weight,
                         const DropoutMasks& masks) {
  return backprop_batch(net, xs, ys, l1_weight, l2_weight, masks).grads;
}

TrainResult train(const Network& start, const std::vector<std::vector<double>>& xs,
                  const std::vector<int>& ys, const TrainConfig& cfg) {
  check_batch(start, xs, ys);
  if (cfg.learning_rate < 0.0) throw InvalidArgumentError("train: learning_rate must be >= 0");
  if (cfg.iterations < 1) throw InvalidArgumentError("train: iterations must be >= 1");
  if (cfg.batch_size < 0 || cfg.batch_size > static_cast<int>(xs.size())) {
    throw InvalidArgumentError("train: batch_size out of range");
  }

  TrainResult result;
  result.net = start;
  result.loss_trace.reserve(static_cast<std::size_t>(cfg.iterations));
  Rng rng(mix_seed({cfg.seed, 0x22}));

  const bool mini = cfg.batch_size > 0 && cfg.batch_size < static_cast<int>(xs.size());
  std::vector<int> order(xs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::size_t cursor = 0;

  std::vector<std::vector<double>> batch_x;
  std::vector<int> batch_y;

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const std::vector<std::vector<double>>* bx = &xs;
    const std::vector<int>* by = &ys;
    if (mini) {
      if (cursor == 0) rng.shuffle(order);
      batch_x.clear();
      batch_y.clear();
      for (int k = 0; k < cfg.batch_size; ++k) {
        const auto idx = static_cast<std::size_t>(order[cursor]);
        batch_x.push_back(xs[idx]);
        batch_y.push_back(ys[idx]);
        cursor = (cursor + 1) % order.size();
        if (cursor == 0 && k + 1 < cfg.batch_size) rng.shuffle(order);
      }
      bx = &batch_x;
      by = &batch_y;
    }

    const DropoutMasks masks = sample_masks(result.net.spec, rng);
    const BatchBackprop step =
        backprop_batch(result.net, *bx, *by, cfg.l1_weight, cfg.l2_weight, masks);

    for (std::size_t l = 0; l < result.net.weights.size(); ++l) {
      auto& w = result.net.weights[l].data();
      const auto& gw = step.grads.weights[l].data();
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= cfg.learning_rate * gw[k];
      auto& b = result.net.biases[l];
      const auto& gb = step.grads.biases[l];
      for (std::size_t k = 0; k < b.size(); ++k) b[k] -= cfg.learning_rate * gb[k];
    }

    // The trace records the deterministic (weight-averaged) objective after
    // the step; mask noise enters only through the parameter updates, so a
    // healthy run drifts downward instead of jumping with each mask draw.
    const double total =
        loss(result.net, *bx, *by, cfg.l1_weight, cfg.l2_weight).total;
    if (!std::isfinite(total)) {
      throw DivergedTrainingError(iter, "train: non-finite loss at iteration " +
                                            std::to_string(iter) +
                                            " (learning rate likely too high)");
    }
    result.loss_trace.push_back(total);
    if (result.first_iteration_at_target < 0 && total <= cfg.target_loss) {
      result.first_iteration_at_target = iter;
    }
  }
  return result;
}

Prediction predict(const Network& net, std::span<const double> x) {
  const Activations act = forward(net, x);
  Prediction p;
  p.probs = act.probs;
  p.label = 0;
  for (std::size_t k = 1; k < p.probs.size(); ++k) {
    if (p.probs[k] > p.probs[static_cast<std::size_t>(p.label)]) p.label = static_cast<int>(k);
  }
  return p;
}

double accuracy(const Network& net, const std::vector<std::vector<double>>& xs,
                const std::vector<int>& ys) {
  check_batch(net, xs, ys);
  int correct = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (predict(net, xs[i]).label == ys[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(xs.size());
}

double mean_cross_entropy(const Network& net, const std::vector<std::vector<double>>& xs,
                          const std::vector<int>& ys) {
  check_batch(net, xs, ys);
  double sum = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sum += guarded_nll(forward(net, xs[i]).probs[static_cast<std::size_t>(ys[i])]);
  }
  return sum / static_cast<double>(xs.size());
}

namespace {

constexpr int kNetworkFormatVersion = 1;
constexpr const char* kNetworkFormatName = "connlab-network";

}  // namespace

std::string network_to_json(const Network& net) {
  nlohmann::json j;
  j["format"] = kNetworkFormatName;
  j["version"] = kNetworkFormatVersion;
  j["spec"] = {{"input_dim", net.spec.input_dim},
               {"hidden_sizes", net.spec.hidden_sizes},
               {"n_classes", net.spec.n_classes},
               {"dropout_rates", net.spec.dropout_rates}};
  nlohmann::json weights = nlohmann::json::array();
  for (const auto& w : net.weights) weights.push_back(w.data());  // row-major
  j["weights"] = std::move(weights);
  j["biases"] = net.biases;
  return j.dump(2) + "\n";
}

Network network_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("network: JSON parse error: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kNetworkFormatName) {
      throw FormatError("network: unrecognized format field");
    }
    if (j.at("version").get<int>() != kNetworkFormatVersion) {
      throw FormatError("network: unsupported version " + j.at("version").dump());
    }
    Network net;
    const auto& spec = j.at("spec");
    net.spec.input_dim = spec.at("input_dim").get<int>();
    net.spec.hidden_sizes = spec.at("hidden_sizes").get<std::vector<int>>();
    net.spec.n_classes = spec.at("n_classes").get<int>();
    net.spec.dropout_rates = spec.at("dropout_rates").get<std::vector<double>>();
    net.spec.validate();

    const auto sizes = layer_sizes(net.spec);
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (weights.size() != sizes.size() - 1 || biases.size() != sizes.size() - 1) {
      throw FormatError("network: layer count mismatch");
    }
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const auto rows = static_cast<std::size_t>(sizes[l + 1]);
      const auto cols = static_cast<std::size_t>(sizes[l]);
      auto flat = weights.at(l).get<std::vector<double>>();
      if (flat.size() != rows * cols) {
        throw FormatError("network: weight matrix " + std::to_string(l) + " has " +
                          std::to_string(flat.size()) + " entries, expected " +
                          std::to_string(rows * cols));
      }
      Matrix w(rows, cols);
      w.data() = std::move(flat);
      auto b = biases.at(l).get<std::vector<double>>();
      if (b.size() != rows) throw FormatError("network: bias " + std::to_string(l) + " size mismatch");
      for (double v : w.data()) {
        if (!std::isfinite(v)) throw FormatError("network: non-finite weight");
      }
      for (double v : b) {
        if (!std::isfinite(v)) throw FormatError("network: non-finite bias");
      }
      net.weights.push_back(std::move(w));
      net.biases.push_back(std::move(b));
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("network: malformed document: ") + e.what());
  }
}

void save_network(const Network& net, const std::filesystem::path& path) {
  write_text_file(path, network_to_json(net));
}

Network load_network(const std::filesystem::path& path) {
  return network_from_json(read_text_file(path));
}

}  // namespace connlab

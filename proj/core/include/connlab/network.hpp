// Fully connected feedforward classifier trained from scratch.
//
// Hidden layers apply sigmoid(W a + b); the readout computes class scores
// S = W a + b followed by softmax. The objective is batch-averaged
// categorical cross entropy plus elastic-net regularization of the weights
// (beta * ||W||_1 + gamma/2 * ||W||_2^2, biases unregularized), minimized by
// plain gradient descent.
//
// Dropout follows the standard (non-inverted) convention: during training
// and Monte Carlo testing, retained neurons pass unscaled and dropped
// neurons output 0; deterministic inference scales each dropout layer's
// outgoing contribution by its retain probability (weight averaging).
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "connlab/matrix.hpp"
#include "connlab/rng.hpp"

namespace connlab {

struct NetworkSpec {
  int input_dim = 0;
  std::vector<int> hidden_sizes;
  int n_classes = 2;
  // Per hidden layer; empty means no dropout anywhere.
  std::vector<double> dropout_rates;

  int n_hidden() const { return static_cast<int>(hidden_sizes.size()); }
  double dropout_rate(int hidden_layer) const {
    return dropout_rates.empty() ? 0.0 : dropout_rates[static_cast<std::size_t>(hidden_layer)];
  }
  void validate() const;
  bool operator==(const NetworkSpec&) const = default;
};

// First hidden layer gets `first_layer_neurons`, every following hidden
// layer half that number; dropout only on the last hidden layer.
NetworkSpec make_spec(int input_dim, int n_hidden_layers, int first_layer_neurons,
                      double last_layer_dropout = 0.0, int n_classes = 2);

struct Network {
  NetworkSpec spec;
  std::vector<Matrix> weights;               // weights[l]: size(l+1) x size(l)
  std::vector<std::vector<double>> biases;   // biases[l]: size(l+1)

  int n_layers() const { return static_cast<int>(weights.size()); }
  bool operator==(const Network&) const = default;
};

// Per-layer forward results. `hidden[l]` holds the values actually fed to
// the next layer: post-sigmoid, after the dropout mask or the deterministic
// retain-probability scaling.
struct Activations {
  std::vector<std::vector<double>> hidden;
  std::vector<double> scores;
  std::vector<double> probs;
};

// keep[l] empty selects deterministic scaling by the layer's retain
// probability; a 0/1 vector applies a live dropout mask instead.
struct DropoutMasks {
  std::vector<std::vector<std::uint8_t>> keep;
};

struct TrainConfig {
  double learning_rate = 0.5;
  int iterations = 300;
  double l1_weight = 1e-6;   // beta
  double l2_weight = 1e-4;   // gamma
  // Convenience knob consumed by make_spec()-style builders (applied to the
  // last hidden layer); train() itself honors the network's spec rates.
  double dropout_rate = 0.2;
  int batch_size = 0;        // 0 = full batch; otherwise mini-batch steps
  std::uint64_t seed = 0;
  double target_loss = 0.1;  // advisory: reported, never stops training
};

struct Prediction {
  std::vector<double> probs;
  int label = 0;
};

struct LossBreakdown {
  double data_loss = 0.0;
  double l1_term = 0.0;
  double l2_term = 0.0;
  double total = 0.0;
};

struct ParamGradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

struct TrainResult {
  Network net;
  std::vector<double> loss_trace;          // masked total loss, pre-update
  int first_iteration_at_target = -1;      // -1 when never reached
};

// Numerically stable logistic function.
double sigmoid(double x);

// Max-shifted softmax; output sums to 1 for |scores| up to ~700.
std::vector<double> softmax(std::span<const double> scores);

// Uniform init in +-sqrt(6 / (fan_in + fan_out)), zero biases.
Network init_network(const NetworkSpec& spec, std::uint64_t seed);

// Bernoulli keep-masks per layer with nonzero dropout; rate-0 layers stay
// empty and consume no randomness.
DropoutMasks sample_masks(const NetworkSpec& spec, Rng& rng);
DropoutMasks deterministic_masks(const NetworkSpec& spec);

Activations forward(const Network& net, std::span<const double> x);  // deterministic
Activations forward(const Network& net, std::span<const double> x, const DropoutMasks& masks);

LossBreakdown loss(const Network& net, const std::vector<std::vector<double>>& xs,
                   const std::vector<int>& ys, double l1_weight, double l2_weight);
LossBreakdown loss(const Network& net, const std::vector<std::vector<double>>& xs,
                   const std::vector<int>& ys, double l1_weight, double l2_weight,
                   const DropoutMasks& masks);

// Exact gradients of the masked objective via backpropagation.
ParamGradients gradients(const Network& net, const std::vector<std::vector<double>>& xs,
                         const std::vector<int>& ys, double l1_weight, double l2_weight,
                         const DropoutMasks& masks);

TrainResult train(const Network& net, const std::vector<std::vector<double>>& xs,
                  const std::vector<int>& ys, const TrainConfig& cfg);

// Deterministic forward; ties broken toward the lower class index.
Prediction predict(const Network& net, std::span<const double> x);

double accuracy(const Network& net, const std::vector<std::vector<double>>& xs,
                const std::vector<int>& ys);

// Mean cross entropy of deterministic predictions, no regularization terms.
double mean_cross_entropy(const Network& net, const std::vector<std::vector<double>>& xs,
                          const std::vector<int>& ys);

// Versioned JSON document; round-trips all finite parameters exactly.
void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);
std::string network_to_json(const Network& net);
Network network_from_json(const std::string& text);

// -log(max(p, 1e-300)); shared guard for every cross-entropy in the library.
double guarded_nll(double p);

}  // namespace connlab

// Class-discriminative feature analysis for two-class networks.
//
// A last-hidden-layer neuron's importance is the difference between its two
// readout weights: diff_j = w(class0, j) - w(class1, j). The score gap
// decomposes exactly as S(c0) - S(c1) = sum_j diff_j * a_j + (b0 - b1), so
// sorting |diff| ranks neurons by their contribution to the decision.
// Ranked neurons can be expanded recursively into input-space patterns
// (each level a weighted sum of the level below, level 1 being the rows of
// the first weight matrix) and predictions can be restricted to the top
// ranked feature pairs.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "connlab/connectivity.hpp"
#include "connlab/network.hpp"

namespace connlab {

struct RankedFeature {
  int neuron_index = 0;        // in the last hidden layer
  double diff = 0.0;           // class-0-facing minus class-1-facing weight
  double magnitude = 0.0;      // |diff|
  int assigned_class = 0;      // 0 when diff >= 0, else 1
  int rank_within_class = 0;   // 1-based
};

struct RankedFeatures {
  std::vector<RankedFeature> class0;  // diff >= 0, magnitude descending
  std::vector<RankedFeature> class1;  // diff < 0, magnitude descending
};

// Requires n_classes == 2 (the ranking is defined on a two-row readout).
RankedFeatures rank_features(const Network& net);

struct BackProjectionPolicy {
  enum class Kind { All, MagnitudeThreshold, TopK };
  Kind kind = Kind::All;
  double threshold = 0.0;
  int k = 0;

  static BackProjectionPolicy all() { return {}; }
  static BackProjectionPolicy magnitude_threshold(double t) {
    return {Kind::MagnitudeThreshold, t, 0};
  }
  static BackProjectionPolicy top_k(int k) { return {Kind::TopK, 0.0, k}; }
  std::string describe() const;
};

struct InputPattern {
  std::vector<double> vector;       // length input_dim
  int source_layer = 0;             // 1-based hidden layer
  int source_neuron = 0;
  BackProjectionPolicy policy;
  double source_diff = 0.0;         // readout diff of the generating neuron, 0 if n/a

  // Devectorized symmetric view; requires input_dim to be a triangle number.
  ConnectivityMatrix matrix_view() const;
};

// Expands neuron `neuron` of hidden layer `layer` (1-based) down to input
// space. Thresholding policies restrict each expansion step to the larger
// incoming weights; an expansion row left empty by the threshold is an error.
InputPattern back_project(const Network& net, int layer, int neuron,
                          const BackProjectionPolicy& policy = BackProjectionPolicy::all());

inline constexpr int kAllPairs = -1;

// Deterministic forward with every last-hidden neuron outside the union of
// the top-k class-0 and top-k class-1 ranked lists zeroed before the
// readout; readout biases are retained. k_pairs == kAllPairs keeps all.
Prediction truncated_predict(const Network& net, std::span<const double> x, int k_pairs);

// Mean cross entropy over the set when only the rank-th class-0 and rank-th
// class-1 neurons are kept (no regularization terms).
double pair_loss(const Network& net, const std::vector<std::vector<double>>& xs,
                 const std::vector<int>& ys, int rank);

// All unordered pairwise Pearson correlations. With sign_align, each
// pattern is first oriented to its class-0-minus-class-1 direction using
// source_diff. Pairs involving a zero-variance pattern yield NaN.
std::vector<double> feature_correlation(std::span<const InputPattern> patterns,
                                        bool sign_align = true);

}  // namespace connlab

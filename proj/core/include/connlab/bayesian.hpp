// Monte Carlo dropout testing.
//
// A prediction is sampled T times with live dropout on one target hidden
// layer (every other layer keeps its deterministic weight-averaging
// scaling, matching how the networks are evaluated conventionally). The
// mean of the sampled class probabilities is the predictive distribution
// and their variance is the model uncertainty.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "connlab/connectivity.hpp"
#include "connlab/network.hpp"

namespace connlab {

struct DropoutPolicy {
  enum class Kind { Rate, RetainExact };
  Kind kind = Kind::Rate;
  double rate = 0.0;   // Kind::Rate: independent drop probability
  int retain = 0;      // Kind::RetainExact: keep exactly this many neurons
  int target_layer = -1;  // hidden layer index; -1 = last hidden layer

  static DropoutPolicy make_rate(double p, int target = -1) {
    DropoutPolicy d;
    d.kind = Kind::Rate;
    d.rate = p;
    d.target_layer = target;
    return d;
  }
  static DropoutPolicy retain_exact(int m, int target = -1) {
    DropoutPolicy d;
    d.kind = Kind::RetainExact;
    d.retain = m;
    d.target_layer = target;
    return d;
  }
  // "rate:0.5" / "retain:2"
  static DropoutPolicy parse(const std::string& text);
  std::string describe() const;
};

struct BayesianPrediction {
  std::vector<double> mean_probs;
  std::vector<double> variance;  // per class, unbiased over T samples (0 when T == 1)
  double uncertainty = 0.0;      // variance of the class-0 probability
  int label = 0;
  int T = 0;
};

BayesianPrediction mc_dropout_predict(const Network& net, std::span<const double> x, int T,
                                      const DropoutPolicy& policy, std::uint64_t seed);

struct RateSweepRow {
  DropoutPolicy policy;
  double mc_accuracy = 0.0;
  double weight_avg_accuracy = 0.0;
};

// Accuracy of argmax(mean_probs) per policy, next to the single
// weight-averaging (deterministic) accuracy.
std::vector<RateSweepRow> dropout_rate_sweep(
    const Network& net, const FeatureSet& test, std::span<const DropoutPolicy> policies, int T,
    std::uint64_t seed, std::vector<std::vector<BayesianPrediction>>* details = nullptr);

enum class MixStage { Normalized, Raw };

// Five equal-size subsets spanning the class mix: F (pure class 1), F1
// (0.75/0.25), FM (0.5/0.5, evaluated as class 1), M1 (0.25/0.75), M (pure
// class 0). Mixing combines each class-1 source with a randomly matched
// class-0 source, every source used once per mixed subset.
struct SubsetSuite {
  struct Entry {
    std::vector<double> x;
    int eval_label = 0;
    int source_f = -1;  // dataset record indices, -1 for pure subsets' unused side
    int source_m = -1;
  };
  struct Subset {
    std::string name;
    double alpha = 0.0;  // weight toward class 1
    std::vector<Entry> entries;
  };
  std::vector<Subset> subsets;
  MixStage stage = MixStage::Normalized;
};

SubsetSuite build_subset_suite(const Dataset& test, int n_per_subset, std::uint64_t seed,
                               MixStage stage = MixStage::Normalized);

struct UncertaintyRow {
  std::string subset;
  double accuracy = 0.0;
  double mean_uncertainty = 0.0;
};

std::vector<UncertaintyRow> uncertainty_sweep(
    const Network& net, const SubsetSuite& suite, int T, const DropoutPolicy& policy,
    std::uint64_t seed, std::vector<std::vector<BayesianPrediction>>* details = nullptr);

}  // namespace connlab

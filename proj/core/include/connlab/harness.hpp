// Randomly permuted k-fold cross-validation, structure sweeps, and the
// feature-repeatability study.
//
// Every unit of work derives its RNG seed from the master seed and its own
// (permutation, fold) indices, so reports are bit-identical regardless of
// the worker count and any single cell can be reproduced in isolation.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "connlab/attribution.hpp"
#include "connlab/baselines.hpp"
#include "connlab/connectivity.hpp"
#include "connlab/network.hpp"

namespace connlab {

struct CVConfig {
  int n_permutations = 50;
  int n_folds = 2;
  std::uint64_t master_seed = 0;
  int jobs = 1;
  bool stratified = false;  // label-blind shuffling by default
};

// A trained classifier as the harness sees it. `probs` may be empty for
// models without calibrated probabilities (the fold loss becomes NaN).
struct FittedModel {
  std::function<int(std::span<const double>)> predict;
  std::function<std::vector<double>(std::span<const double>)> probs;
  std::shared_ptr<const Network> network;  // set for DNN models
};

using ModelFactory = std::function<FittedModel(const FeatureSet& train, std::uint64_t seed)>;

// Invoked once per trained fold model, possibly from worker threads.
using FoldObserver = std::function<void(const FittedModel&, int permutation, int fold)>;

struct FoldResult {
  int permutation = 0;
  int fold = 0;
  bool failed = false;
  std::string error;
  int n_test = 0;
  int n_correct = 0;
  double accuracy = 0.0;
  double mean_loss = 0.0;  // NaN when the model has no probabilities
  std::string model_ref;
};

struct PermutationResult {
  int permutation = 0;
  bool failed = false;
  double accuracy = 0.0;  // pooled correct/total across folds
  int n_correct = 0;
  int n_total = 0;
};

struct ExperimentReport {
  int n_permutations = 0;
  int n_folds = 0;
  std::uint64_t master_seed = 0;
  std::vector<FoldResult> folds;
  std::vector<PermutationResult> permutations;
  double mean_accuracy = 0.0;  // over non-failed permutations
  double std_accuracy = 0.0;   // sample std, 0 when fewer than 2
  int n_failed = 0;
};

// Deterministic fold assignment for one permutation; fold sizes differ by
// at most one and every subject appears in exactly one fold.
std::vector<std::vector<int>> fold_assignment(int n_subjects, const CVConfig& cfg,
                                              int permutation,
                                              std::span<const int> labels = {});

std::uint64_t fold_model_seed(std::uint64_t master_seed, int permutation, int fold);

ExperimentReport permuted_cv(const Dataset& data, const ModelFactory& factory,
                             const CVConfig& cfg, const FoldObserver& observer = {});

// Serializes a report; recomputes the aggregates from the raw records first
// and refuses to write if they disagree with the stored values.
std::string report_to_json(const ExperimentReport& report);

ModelFactory make_dnn_factory(int n_hidden_layers, int first_layer_neurons,
                              const TrainConfig& base);
ModelFactory make_svm_factory(const SvmTrainConfig& base);

struct SweepGrid {
  std::vector<int> layer_counts;
  std::vector<int> neuron_counts;
};

struct SweepCell {
  int layers = 0;
  int neurons = 0;
  ExperimentReport report;
};

std::vector<SweepCell> structure_sweep(const Dataset& data, const SweepGrid& grid,
                                       const TrainConfig& train_cfg, const CVConfig& cv_cfg);

// layers,neurons,scale,mean_acc,std_acc rows; scale is the node count.
std::string sweep_summary_csv(std::span<const SweepCell> cells, int scale);

struct CorrelationSummary {
  int n_patterns = 0;
  int n_pairs = 0;
  int n_undefined = 0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

CorrelationSummary summarize_correlations(std::span<const double> correlations);

enum class TopFeatureSelection { Overall, Class0, Class1 };

struct RepeatabilityResult {
  std::vector<InputPattern> patterns;  // one per (permutation, fold)
  std::vector<double> correlations;
  CorrelationSummary summary;
  ExperimentReport report;
};

// Trains one DNN per (permutation, fold), back-projects each model's
// top-ranked last-hidden feature, and reports the pairwise correlation
// distribution of the collected patterns.
RepeatabilityResult repeatability_study(
    const Dataset& data, int n_hidden_layers, int first_layer_neurons,
    const TrainConfig& train_cfg, const CVConfig& cv_cfg,
    const BackProjectionPolicy& policy = BackProjectionPolicy::all(), bool sign_align = true,
    TopFeatureSelection selection = TopFeatureSelection::Overall);

// Runs fn(0..n-1) on up to `jobs` threads; exceptions are rethrown.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace connlab

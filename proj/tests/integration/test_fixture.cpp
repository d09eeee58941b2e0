// Fixture-scale checks that train real models: training dynamics, harness
// accuracy, feature repeatability, truncation recovery, and the
// uncertainty ordering across the mixing chain.
#include <doctest.h>

#include <cmath>

#include "connlab/attribution.hpp"
#include "connlab/bayesian.hpp"
#include "connlab/connectivity.hpp"
#include "connlab/harness.hpp"
#include "connlab/network.hpp"
#include "support/fixtures.hpp"

using namespace connlab;

namespace {

struct FoldModel {
  Network net;
  std::vector<int> train_idx;
  std::vector<int> test_idx;
};

FoldModel train_reference_fold(std::uint64_t seed, int layers, int neurons, double dropout,
                               double lr, int iterations) {
  const FeatureSet& fs = fixtures::reference_features();
  CVConfig cv;
  cv.master_seed = seed;
  const auto folds = fold_assignment(fs.size(), cv, 0);
  FoldModel fm;
  fm.test_idx = folds[0];
  fm.train_idx = folds[1];
  const FeatureSet train_set = subset(fs, fm.train_idx);
  TrainConfig tc;
  tc.learning_rate = lr;
  tc.iterations = iterations;
  tc.seed = fold_model_seed(seed, 0, 0);
  fm.net = train(init_network(make_spec(fs.input_dim, layers, neurons, dropout), tc.seed),
                 train_set.x, train_set.y, tc)
               .net;
  return fm;
}

}  // namespace

TEST_CASE("training loss settles into a non-increasing tail on the fixture") {
  // The +1e-3 jitter bound is a statement about gradient descent itself, so
  // it is checked without dropout: at 20-neuron width a resampled mask
  // perturbs the step direction by far more than 1e-3 per iteration.
  const FeatureSet& fs = fixtures::reference_features();
  for (std::uint64_t seed : {101ULL, 7ULL, 55ULL}) {
    TrainConfig tc;
    tc.learning_rate = 0.2;
    tc.iterations = 300;
    tc.seed = seed;
    const auto spec = make_spec(fs.input_dim, 1, 20, 0.0);
    const TrainResult tr = train(init_network(spec, seed), fs.x, fs.y, tc);
    REQUIRE(tr.loss_trace.size() == 300);
    for (std::size_t i = 6; i < tr.loss_trace.size(); ++i) {
      CHECK(tr.loss_trace[i] <= tr.loss_trace[i - 1] + 1e-3);
    }
    CHECK(tr.loss_trace.back() <= 0.1);
  }

  // with the reference dropout trainer the same run still reaches the
  // advisory 0.1 target inside the budget
  TrainConfig with_dropout = fixtures::reference_train_config();
  with_dropout.seed = 101;
  const auto spec = make_spec(fs.input_dim, 1, 20, with_dropout.dropout_rate);
  const TrainResult tr = train(init_network(spec, 101), fs.x, fs.y, with_dropout);
  CHECK(tr.loss_trace.back() <= 0.1);
  CHECK(tr.first_iteration_at_target >= 0);
}

TEST_CASE("the fixture DNN holds above 0.9 accuracy across ten permutations") {
  const Dataset& data = fixtures::reference_dataset();
  CVConfig cv;
  cv.n_permutations = 10;
  cv.master_seed = 5;
  cv.jobs = 2;
  const TrainConfig tc = fixtures::reference_train_config();
  const ExperimentReport report = permuted_cv(data, make_dnn_factory(1, 20, tc), cv);
  CHECK(report.n_failed == 0);
  CHECK(report.mean_accuracy > 0.9);
  CHECK(report.std_accuracy < 0.03);
}

TEST_CASE("deeper networks extract more repeatable top features") {
  const Dataset data = generate_synthetic(fixtures::repeatability_config(), 42);
  TrainConfig tc;
  tc.learning_rate = 0.5;
  tc.iterations = 300;
  int deeper_higher = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CVConfig cv;
    cv.n_permutations = 6;
    cv.master_seed = seed;
    cv.jobs = 2;
    const auto shallow = repeatability_study(data, 1, 20, tc, cv);
    const auto deep = repeatability_study(data, 3, 20, tc, cv);
    if (deep.summary.median > shallow.summary.median) ++deeper_higher;
  }
  CHECK(deeper_higher >= 7);
}

TEST_CASE("the top feature pair recovers most of the training accuracy") {
  const FeatureSet& fs = fixtures::reference_features();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const FoldModel fm = train_reference_fold(seed, 1, 20, 0.2, 0.5, 300);
    const FeatureSet train_set = subset(fs, fm.train_idx);
    int top_pair = 0;
    int full = 0;
    for (int i = 0; i < train_set.size(); ++i) {
      const auto& x = train_set.x[static_cast<std::size_t>(i)];
      const int y = train_set.y[static_cast<std::size_t>(i)];
      if (truncated_predict(fm.net, x, 1).label == y) ++top_pair;
      if (predict(fm.net, x).label == y) ++full;
    }
    REQUIRE(full > 0);
    CHECK(static_cast<double>(top_pair) >= 0.75 * static_cast<double>(full));
  }
}

TEST_CASE("uncertainty grows monotonically toward the balanced mix") {
  const Dataset& data = fixtures::reference_dataset();
  int chains = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const FoldModel fm = train_reference_fold(seed, 3, 20, 0.5, 0.5, 1000);
    Dataset test_fold;
    test_fold.n_nodes = data.n_nodes;
    test_fold.class_names = data.class_names;
    for (int idx : fm.test_idx) {
      test_fold.records.push_back(data.records[static_cast<std::size_t>(idx)]);
    }
    const SubsetSuite suite = build_subset_suite(test_fold, 100, seed * 77 + 3);
    const auto rows =
        uncertainty_sweep(fm.net, suite, 200, DropoutPolicy::make_rate(0.5), seed * 13);
    const double uF = rows[0].mean_uncertainty;
    const double uF1 = rows[1].mean_uncertainty;
    const double uFM = rows[2].mean_uncertainty;
    const double uM1 = rows[3].mean_uncertainty;
    const double uM = rows[4].mean_uncertainty;
    if (uF <= uF1 && uF1 <= uFM && uM <= uM1 && uM1 <= uFM) ++chains;
  }
  CHECK(chains >= 8);
}

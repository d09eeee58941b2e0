// Acceptance suite: one registered criterion per check, each printing a
// single PASS/FAIL line. Run all with no arguments, a single one with
// --criterion N. Exits nonzero if any executed criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "connlab/attribution.hpp"
#include "connlab/baselines.hpp"
#include "connlab/bayesian.hpp"
#include "connlab/connectivity.hpp"
#include "connlab/errors.hpp"
#include "connlab/harness.hpp"
#include "connlab/network.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace connlab;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// Trains the given structure on the complement of fold 0 of the reference
// fixture under master seed `seed`; returns the net plus the fold split.
struct FoldModel {
  Network net;
  std::vector<int> train_idx;
  std::vector<int> test_idx;
};

FoldModel train_fixture_fold(std::uint64_t seed, int layers, int neurons, double dropout,
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
  const auto spec = make_spec(fs.input_dim, layers, neurons, dropout);
  fm.net = train(init_network(spec, tc.seed), train_set.x, train_set.y, tc).net;
  return fm;
}

// ---------------------------------------------------------------------- c1

bool c1_gradient_correctness(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    NetworkSpec spec;
    spec.input_dim = 10;
    spec.hidden_sizes = {8, 4};
    const bool with_dropout = seed > 10;
    spec.dropout_rates = {0.0, with_dropout ? 0.5 : 0.0};
    Network net = init_network(spec, seed);
    // keep parameters away from the |w| kink so central differences of the
    // L1 term stay valid
    for (auto& w : net.weights) {
      for (double& v : w.data()) {
        if (std::abs(v) < 2e-4) v = v >= 0.0 ? 2e-4 : -2e-4;
      }
    }
    Rng rng(mix_seed({seed, 0xAB}));
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    for (int i = 0; i < 6; ++i) {
      std::vector<double> x(10);
      for (double& v : x) v = rng.normal();
      xs.push_back(std::move(x));
      ys.push_back(static_cast<int>(rng.uniform_int(2)));
    }
    const DropoutMasks masks =
        with_dropout ? sample_masks(spec, rng) : deterministic_masks(spec);
    worst = std::max(worst, oracles::max_gradcheck_error(net, xs, ys, 1e-6, 1e-4, masks));
  }
  const double elapsed = seconds_since(t0);
  detail = "max rel err " + fmt(worst) + ", " + fmt(elapsed) + "s";
  return worst < 1e-5 && elapsed < 10.0;
}

// ---------------------------------------------------------------------- c2

bool c2_training_convergence(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset& data = fixtures::reference_dataset();
  const FeatureSet& fs = fixtures::reference_features();

  TrainConfig tc = fixtures::reference_train_config();
  CVConfig cv;
  cv.n_permutations = 1;
  cv.n_folds = 2;
  cv.master_seed = 7;
  cv.jobs = 2;
  const ExperimentReport report = permuted_cv(data, make_dnn_factory(1, 20, tc), cv);

  // training loss on a proper training half
  const auto folds = fold_assignment(fs.size(), cv, 0);
  const FeatureSet train_set = subset(fs, folds[1]);
  tc.seed = fold_model_seed(7, 0, 0);
  const auto spec = make_spec(fs.input_dim, 1, 20, tc.dropout_rate);
  const TrainResult tr = train(init_network(spec, tc.seed), train_set.x, train_set.y, tc);

  const double elapsed = seconds_since(t0);
  detail = "cv acc " + fmt(report.mean_accuracy) + ", final train loss " +
           fmt(tr.loss_trace.back()) + ", " + fmt(elapsed) + "s";
  return report.mean_accuracy > 0.90 && tr.loss_trace.back() <= 0.1 &&
         tr.first_iteration_at_target >= 0 && tr.first_iteration_at_target < 300 &&
         elapsed < 60.0;
}

// ---------------------------------------------------------------------- c3

bool c3_back_projection_oracle(std::string& detail) {
  double worst = 0.0;
  for (int layers = 1; layers <= 3; ++layers) {
    std::vector<int> hidden;
    for (int l = 0; l < layers; ++l) hidden.push_back(7 - l);
    NetworkSpec spec;
    spec.input_dim = 12;
    spec.hidden_sizes = hidden;
    const Network net = init_network(spec, 40 + static_cast<std::uint64_t>(layers));
    for (int neuron = 0; neuron < hidden.back(); ++neuron) {
      const InputPattern p = back_project(net, layers, neuron);
      const auto oracle = oracles::dense_back_projection(net, layers, neuron);
      for (std::size_t j = 0; j < oracle.size(); ++j) {
        worst = std::max(worst, std::abs(p.vector[j] - oracle[j]));
      }
    }
  }
  detail = "max abs diff " + fmt(worst);
  return worst < 1e-10;
}

// ---------------------------------------------------------------------- c4

bool c4_ranking_identity(std::string& detail) {
  double worst = 0.0;
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    NetworkSpec spec;
    spec.input_dim = 15;
    spec.hidden_sizes = {9, 5};
    Network net = init_network(spec, 60 + static_cast<std::uint64_t>(trial % 7));
    for (auto& b : net.biases) {
      for (double& v : b) v = rng.normal();
    }
    std::vector<double> x(15);
    for (double& v : x) v = rng.normal();

    const Activations act = forward(net, x);
    const RankedFeatures ranked = rank_features(net);
    double decomposed = net.biases.back()[0] - net.biases.back()[1];
    for (const auto& f : ranked.class0) {
      decomposed += f.diff * act.hidden.back()[static_cast<std::size_t>(f.neuron_index)];
    }
    for (const auto& f : ranked.class1) {
      decomposed += f.diff * act.hidden.back()[static_cast<std::size_t>(f.neuron_index)];
    }
    worst = std::max(worst, std::abs((act.scores[0] - act.scores[1]) - decomposed));
  }
  detail = "max abs diff " + fmt(worst) + " over 100 inputs";
  return worst < 1e-10;
}

// ---------------------------------------------------------------------- c5

bool c5_pair_loss_trend(std::string& detail) {
  const FeatureSet& fs = fixtures::reference_features();
  int ok = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const FoldModel fm = train_fixture_fold(seed, 1, 50, 0.2, 0.5, 300);
    const FeatureSet train_set = subset(fs, fm.train_idx);
    const double r1 = pair_loss(fm.net, train_set.x, train_set.y, 1);
    const double r5 = pair_loss(fm.net, train_set.x, train_set.y, 5);
    if (r1 <= r5) ++ok;
  }
  detail = "rank1 <= rank5 in " + std::to_string(ok) + "/10 seeds";
  return ok >= 9;
}

// ---------------------------------------------------------------------- c6

bool c6_truncation_monotone(std::string& detail) {
  const FeatureSet& fs = fixtures::reference_features();
  int mono_ok = 0;
  bool exact_ok = true;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const FoldModel fm = train_fixture_fold(seed, 1, 50, 0.2, 0.5, 300);
    const FeatureSet train_set = subset(fs, fm.train_idx);

    std::vector<double> ce;
    for (int k : {1, 2, 5, 10}) {
      double sum = 0.0;
      for (int i = 0; i < train_set.size(); ++i) {
        sum += guarded_nll(
            truncated_predict(fm.net, train_set.x[static_cast<std::size_t>(i)], k)
                .probs[static_cast<std::size_t>(train_set.y[static_cast<std::size_t>(i)])]);
      }
      ce.push_back(sum / train_set.size());
    }
    ce.push_back(mean_cross_entropy(fm.net, train_set.x, train_set.y));
    bool mono = true;
    for (std::size_t i = 1; i < ce.size(); ++i) {
      if (ce[i] > ce[i - 1]) mono = false;
    }
    if (mono) ++mono_ok;

    for (int i = 0; i < 20; ++i) {
      const auto& x = train_set.x[static_cast<std::size_t>(i)];
      if (truncated_predict(fm.net, x, kAllPairs).probs != predict(fm.net, x).probs) {
        exact_ok = false;
      }
    }
  }
  detail = "monotone in " + std::to_string(mono_ok) + "/10 seeds, k=all exact " +
           (exact_ok ? "yes" : "NO");
  return mono_ok >= 9 && exact_ok;
}

// ---------------------------------------------------------------------- c7

bool c7_mc_dropout_accuracy(std::string& detail) {
  const FeatureSet& fs = fixtures::reference_features();
  int close = 0;
  int retain_below = 0;
  double worst_gap = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const FoldModel fm = train_fixture_fold(seed, 1, 100, 0.2, 0.5, 300);
    const FeatureSet test_set = subset(fs, fm.test_idx);
    const DropoutPolicy policies[] = {DropoutPolicy::make_rate(0.2),
                                      DropoutPolicy::retain_exact(2)};
    const auto rows = dropout_rate_sweep(fm.net, test_set, policies, 100, seed * 1000);
    const double gap = std::abs(rows[0].mc_accuracy - rows[0].weight_avg_accuracy);
    worst_gap = std::max(worst_gap, gap);
    if (gap <= 0.02) ++close;
    if (rows[1].mc_accuracy < rows[0].mc_accuracy) ++retain_below;
  }
  detail = "|mc-wa|<=0.02 in " + std::to_string(close) + "/10 (worst gap " + fmt(worst_gap) +
           "), retain2 below in " + std::to_string(retain_below) + "/10";
  return close == 10 && retain_below >= 8;
}

// ---------------------------------------------------------------------- c8

bool c8_subset_uncertainty(std::string& detail) {
  const Dataset& data = fixtures::reference_dataset();
  int unc_f = 0, unc_m = 0, acc_f = 0, acc_m = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    // trained with dropout 0.5 on the last hidden layer so that testing at
    // rate 0.5 samples around the trained operating point
    const FoldModel fm = train_fixture_fold(seed, 3, 20, 0.5, 0.5, 1000);

    Dataset test_fold;
    test_fold.n_nodes = data.n_nodes;
    test_fold.class_names = data.class_names;
    for (int idx : fm.test_idx) {
      test_fold.records.push_back(data.records[static_cast<std::size_t>(idx)]);
    }
    const SubsetSuite suite = build_subset_suite(test_fold, 60, seed * 77 + 3);
    const auto rows =
        uncertainty_sweep(fm.net, suite, 100, DropoutPolicy::make_rate(0.5), seed * 13);
    const auto& F = rows[0];
    const auto& FM = rows[2];
    const auto& M = rows[4];
    if (FM.mean_uncertainty > F.mean_uncertainty) ++unc_f;
    if (FM.mean_uncertainty > M.mean_uncertainty) ++unc_m;
    if (F.accuracy > FM.accuracy) ++acc_f;
    if (M.accuracy > FM.accuracy) ++acc_m;
  }
  detail = "unc FM>F " + std::to_string(unc_f) + "/10, FM>M " + std::to_string(unc_m) +
           "/10, acc F>FM " + std::to_string(acc_f) + "/10, M>FM " + std::to_string(acc_m) +
           "/10";
  return unc_f >= 9 && unc_m >= 9 && acc_f >= 9 && acc_m >= 9;
}

// ---------------------------------------------------------------------- c9

bool c9_degenerate_exactness(std::string& detail) {
  NetworkSpec spec;
  spec.input_dim = 8;
  spec.hidden_sizes = {6, 4};
  const Network net = init_network(spec, 5);
  Rng rng(3);
  bool ok = true;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x(8);
    for (double& v : x) v = rng.normal();
    const Activations det = forward(net, x);
    const auto mc = mc_dropout_predict(net, x, 32, DropoutPolicy::make_rate(0.0),
                                       static_cast<std::uint64_t>(trial));
    const auto retain_all = mc_dropout_predict(net, x, 32, DropoutPolicy::retain_exact(4),
                                               static_cast<std::uint64_t>(trial));
    if (mc.mean_probs != det.probs || retain_all.mean_probs != det.probs) ok = false;
    for (double v : mc.variance) {
      if (v != 0.0) ok = false;
    }
    if (mc.uncertainty != 0.0 || retain_all.uncertainty != 0.0) ok = false;
  }
  detail = ok ? "bit-exact over 10 inputs" : "mismatch";
  return ok;
}

// --------------------------------------------------------------------- c10

bool c10_preprocessing_exactness(std::string& detail) {
  double worst_z = 0.0;
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const double r = trial < 100 ? -0.99 + 0.02 * trial : rng.uniform(-0.999, 0.999);
    ConnectivityMatrix m(2);
    m.values(0, 0) = m.values(1, 1) = 1.0;
    m.values(0, 1) = m.values(1, 0) = r;
    worst_z = std::max(worst_z, std::abs(fisher_z(m).values(0, 1) - oracles::atanh_log(r)));
  }

  double worst_mean = 0.0, worst_var = 0.0, worst_idem = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng gen(seed);
    ConnectivityMatrix m(14);
    for (int i = 0; i < 14; ++i) {
      m.values(i, i) = 1.0;
      for (int j = i + 1; j < 14; ++j) {
        const double r = gen.uniform(-0.9, 0.9);
        m.values(i, j) = r;
        m.values(j, i) = r;
      }
    }
    const ConnectivityMatrix n1 = normalize(fisher_z(m));
    double mean = 0.0, var = 0.0;
    const int pairs = 14 * 13 / 2;
    for (int i = 0; i < 14; ++i)
      for (int j = i + 1; j < 14; ++j) mean += n1.values(i, j);
    mean /= pairs;
    for (int i = 0; i < 14; ++i)
      for (int j = i + 1; j < 14; ++j) {
        var += (n1.values(i, j) - mean) * (n1.values(i, j) - mean);
      }
    var /= pairs;
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_var = std::max(worst_var, std::abs(var - 1.0));
    const ConnectivityMatrix n2 = normalize(n1);
    for (int i = 0; i < 14; ++i)
      for (int j = 0; j < 14; ++j) {
        worst_idem = std::max(worst_idem, std::abs(n2.values(i, j) - n1.values(i, j)));
      }
  }
  detail = "fisher err " + fmt(worst_z) + ", |mean| " + fmt(worst_mean) + ", |var-1| " +
           fmt(worst_var) + ", idempotence " + fmt(worst_idem);
  return worst_z < 1e-12 && worst_mean < 1e-10 && worst_var < 1e-10 && worst_idem < 1e-10;
}

// --------------------------------------------------------------------- c11

bool c11_harness_determinism(std::string& detail) {
  const Dataset& data = fixtures::reference_dataset();
  SvmTrainConfig svm;
  CVConfig cfg;
  cfg.n_permutations = 6;
  cfg.master_seed = 23;
  cfg.jobs = 1;
  const ExperimentReport serial = permuted_cv(data, make_svm_factory(svm), cfg);
  cfg.jobs = 8;
  const ExperimentReport parallel = permuted_cv(data, make_svm_factory(svm), cfg);
  const bool bytes_equal = report_to_json(serial) == report_to_json(parallel);

  bool folds_ok = true;
  for (int n : {500, 499}) {
    const auto folds = fold_assignment(n, cfg, 0);
    std::size_t lo = folds[0].size(), hi = folds[0].size();
    std::size_t total = 0;
    for (const auto& f : folds) {
      lo = std::min(lo, f.size());
      hi = std::max(hi, f.size());
      total += f.size();
    }
    if (hi - lo > 1 || total != static_cast<std::size_t>(n)) folds_ok = false;
  }

  double mean = 0.0;
  for (const auto& p : serial.permutations) mean += p.accuracy;
  mean /= static_cast<double>(serial.permutations.size());
  double var = 0.0;
  for (const auto& p : serial.permutations) var += (p.accuracy - mean) * (p.accuracy - mean);
  const double stddev = std::sqrt(var / static_cast<double>(serial.permutations.size() - 1));
  const bool agg_ok = std::abs(mean - serial.mean_accuracy) < 1e-12 &&
                      std::abs(stddev - serial.std_accuracy) < 1e-12;

  detail = std::string("jobs1==jobs8 ") + (bytes_equal ? "yes" : "NO") + ", folds " +
           (folds_ok ? "ok" : "BAD") + ", aggregates " + (agg_ok ? "exact" : "OFF");
  return bytes_equal && folds_ok && agg_ok;
}

// --------------------------------------------------------------------- c12

bool c12_baseline_parity(std::string& detail) {
  const std::vector<std::vector<double>> toy_x{{-1.0, 0.0}, {1.0, 0.0},
                                               {-0.8, 0.1}, {0.9, -0.1}};
  const std::vector<int> toy_y{0, 1, 0, 1};
  SvmTrainConfig toy_cfg;
  toy_cfg.lambda = 1e-3;
  toy_cfg.epochs = 200;
  toy_cfg.seed = 1;
  const auto toy = train_linear_svm(toy_x, toy_y, toy_cfg);
  int toy_correct = 0;
  for (std::size_t i = 0; i < toy_x.size(); ++i) {
    if (predict_linear(toy.model, toy_x[i]) == toy_y[i]) ++toy_correct;
  }

  const Dataset& data = fixtures::reference_dataset();
  CVConfig cv;
  cv.n_permutations = 1;
  cv.master_seed = 7;
  cv.jobs = 2;
  const TrainConfig tc = fixtures::reference_train_config();
  const double dnn = permuted_cv(data, make_dnn_factory(1, 20, tc), cv).mean_accuracy;
  const double svm = permuted_cv(data, make_svm_factory(SvmTrainConfig{}), cv).mean_accuracy;

  detail = "toy " + std::to_string(toy_correct) + "/4, dnn " + fmt(dnn) + ", svm " + fmt(svm) +
           ", gap " + fmt(std::abs(dnn - svm));
  return toy_correct == 4 && std::abs(dnn - svm) <= 0.05;
}

// --------------------------------------------------------------------- c13

bool c13_null_signal(std::string& detail) {
  SyntheticConfig cfg = fixtures::reference_config();
  cfg.class_effect_size = 0.0;
  const TrainConfig tc = fixtures::reference_train_config();
  double dnn_sum = 0.0, svm_sum = 0.0;
  bool each_ok = true;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Dataset data = generate_synthetic(cfg, 1000 + seed);
    CVConfig cv;
    cv.n_permutations = 1;
    cv.master_seed = seed;
    cv.jobs = 2;
    const double dnn = permuted_cv(data, make_dnn_factory(1, 20, tc), cv).mean_accuracy;
    const double svm = permuted_cv(data, make_svm_factory(SvmTrainConfig{}), cv).mean_accuracy;
    dnn_sum += dnn;
    svm_sum += svm;
    if (std::abs(dnn - 0.5) > 0.10 || std::abs(svm - 0.5) > 0.10) each_ok = false;
  }
  const double dnn_mean = dnn_sum / 10.0;
  const double svm_mean = svm_sum / 10.0;
  detail = "dnn mean " + fmt(dnn_mean) + ", svm mean " + fmt(svm_mean);
  return std::abs(dnn_mean - 0.5) <= 0.05 && std::abs(svm_mean - 0.5) <= 0.05 && each_ok;
}

struct Criterion {
  int id;
  const char* title;
  std::function<bool(std::string&)> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> list{
      {1, "gradient correctness vs central finite differences", c1_gradient_correctness},
      {2, "training convergence on the reference fixture", c2_training_convergence},
      {3, "back-projection equals the dense matrix-chain oracle", c3_back_projection_oracle},
      {4, "score-difference ranking identity", c4_ranking_identity},
      {5, "pair loss favors higher ranked feature pairs", c5_pair_loss_trend},
      {6, "training cross-entropy non-increasing in kept pairs", c6_truncation_monotone},
      {7, "MC dropout accuracy vs weight averaging and retain-2", c7_mc_dropout_accuracy},
      {8, "mixed-subset uncertainty ordering", c8_subset_uncertainty},
      {9, "rate-0 dropout is exactly deterministic", c9_degenerate_exactness},
      {10, "preprocessing exactness", c10_preprocessing_exactness},
      {11, "harness determinism across worker counts", c11_harness_determinism},
      {12, "linear SVM baseline sanity and parity", c12_baseline_parity},
      {13, "null-signal control stays at chance", c13_null_signal},
  };
  return list;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      only = std::atoi(argv[i + 1]);
      ++i;
    } else if (std::strcmp(argv[i], "--list") == 0) {
      for (const auto& c : criteria()) std::printf("C%02d %s\n", c.id, c.title);
      return 0;
    } else {
      std::fprintf(stderr, "usage: %s [--criterion N | --list]\n", argv[0]);
      return 2;
    }
  }

  int failures = 0;
  int executed = 0;
  for (const auto& c : criteria()) {
    if (only != 0 && c.id != only) continue;
    ++executed;
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("C%02d %s  %s -- %s\n", c.id, ok ? "PASS" : "FAIL", c.title, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  if (executed == 0) {
    std::fprintf(stderr, "no criterion matched %d\n", only);
    return 2;
  }
  return failures == 0 ? 0 : 1;
}

#include "connlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "connlab/errors.hpp"
#include "connlab/io.hpp"
#include "connlab/rng.hpp"

namespace connlab {

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const int workers = std::max(1, std::min(jobs, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::uint64_t fold_model_seed(std::uint64_t master_seed, int permutation, int fold) {
  return mix_seed({master_seed, 0x02, static_cast<std::uint64_t>(permutation),
                   static_cast<std::uint64_t>(fold)});
}

std::vector<std::vector<int>> fold_assignment(int n_subjects, const CVConfig& cfg,
                                              int permutation, std::span<const int> labels) {
  if (cfg.n_folds < 2) throw InvalidArgumentError("cv: n_folds must be >= 2");
  if (n_subjects < 2 * cfg.n_folds) {
    throw InvalidArgumentError("cv: dataset size must be at least 2 * n_folds");
  }
  Rng rng(mix_seed({cfg.master_seed, 0x01, static_cast<std::uint64_t>(permutation)}));
  std::vector<std::vector<int>> folds(static_cast<std::size_t>(cfg.n_folds));

  if (cfg.stratified && !labels.empty()) {
    // Shuffle within each class, then deal round-robin across folds.
    std::vector<int> by_class[2];
    for (int i = 0; i < n_subjects; ++i) by_class[labels[static_cast<std::size_t>(i)]].push_back(i);
    int cursor = 0;
    for (auto& cls : by_class) {
      rng.shuffle(cls);
      for (int idx : cls) {
        folds[static_cast<std::size_t>(cursor % cfg.n_folds)].push_back(idx);
        ++cursor;
      }
    }
    return folds;
  }

  std::vector<int> order(static_cast<std::size_t>(n_subjects));
  for (int i = 0; i < n_subjects; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order);
  const int base = n_subjects / cfg.n_folds;
  const int extra = n_subjects % cfg.n_folds;
  std::size_t cursor = 0;
  for (int f = 0; f < cfg.n_folds; ++f) {
    const int size = base + (f < extra ? 1 : 0);
    folds[static_cast<std::size_t>(f)].assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                              order.begin() + static_cast<std::ptrdiff_t>(cursor + static_cast<std::size_t>(size)));
    cursor += static_cast<std::size_t>(size);
  }
  return folds;
}

namespace {

void aggregate_report(ExperimentReport& report) {
  report.n_failed = 0;
  std::vector<double> accs;
  for (const auto& perm : report.permutations) {
    if (perm.failed) {
      ++report.n_failed;
    } else {
      accs.push_back(perm.accuracy);
    }
  }
  double mean = 0.0;
  for (double a : accs) mean += a;
  mean = accs.empty() ? 0.0 : mean / static_cast<double>(accs.size());
  double var = 0.0;
  for (double a : accs) var += (a - mean) * (a - mean);
  report.mean_accuracy = mean;
  report.std_accuracy = accs.size() > 1 ? std::sqrt(var / static_cast<double>(accs.size() - 1)) : 0.0;
}

}  // namespace

ExperimentReport permuted_cv(const Dataset& data, const ModelFactory& factory, const CVConfig& cfg,
                             const FoldObserver& observer) {
  if (cfg.n_permutations < 1) throw InvalidArgumentError("cv: n_permutations must be >= 1");
  const FeatureSet features = prepare_features(data);
  const int n = features.size();

  ExperimentReport report;
  report.n_permutations = cfg.n_permutations;
  report.n_folds = cfg.n_folds;
  report.master_seed = cfg.master_seed;
  report.folds.resize(static_cast<std::size_t>(cfg.n_permutations * cfg.n_folds));
  report.permutations.resize(static_cast<std::size_t>(cfg.n_permutations));

  const int n_tasks = cfg.n_permutations * cfg.n_folds;
  parallel_for(n_tasks, cfg.jobs, [&](int task) {
    const int perm = task / cfg.n_folds;
    const int fold = task % cfg.n_folds;
    const auto folds = fold_assignment(n, cfg, perm, features.y);

    FoldResult& result = report.folds[static_cast<std::size_t>(task)];
    result.permutation = perm;
    result.fold = fold;
    result.model_ref = "perm" + std::to_string(perm) + "_fold" + std::to_string(fold);

    std::vector<int> train_idx;
    for (int f = 0; f < cfg.n_folds; ++f) {
      if (f == fold) continue;
      train_idx.insert(train_idx.end(), folds[static_cast<std::size_t>(f)].begin(),
                       folds[static_cast<std::size_t>(f)].end());
    }
    const auto& test_idx = folds[static_cast<std::size_t>(fold)];

    try {
      const FeatureSet train = subset(features, train_idx);
      const FittedModel model = factory(train, fold_model_seed(cfg.master_seed, perm, fold));

      int correct = 0;
      double loss_sum = 0.0;
      bool have_loss = static_cast<bool>(model.probs);
      for (int idx : test_idx) {
        const auto& x = features.x[static_cast<std::size_t>(idx)];
        const int y = features.y[static_cast<std::size_t>(idx)];
        if (model.predict(x) == y) ++correct;
        if (have_loss) loss_sum += guarded_nll(model.probs(x)[static_cast<std::size_t>(y)]);
      }
      result.n_test = static_cast<int>(test_idx.size());
      result.n_correct = correct;
      result.accuracy = static_cast<double>(correct) / static_cast<double>(test_idx.size());
      result.mean_loss = have_loss ? loss_sum / static_cast<double>(test_idx.size())
                                   : std::numeric_limits<double>::quiet_NaN();
      if (observer) observer(model, perm, fold);
    } catch (const std::exception& e) {
      result.failed = true;
      result.error = e.what();
    }
  });

  for (int perm = 0; perm < cfg.n_permutations; ++perm) {
    PermutationResult& pr = report.permutations[static_cast<std::size_t>(perm)];
    pr.permutation = perm;
    for (int fold = 0; fold < cfg.n_folds; ++fold) {
      const FoldResult& fr = report.folds[static_cast<std::size_t>(perm * cfg.n_folds + fold)];
      if (fr.failed) {
        pr.failed = true;
        continue;
      }
      pr.n_correct += fr.n_correct;
      pr.n_total += fr.n_test;
    }
    pr.accuracy = pr.failed || pr.n_total == 0
                      ? 0.0
                      : static_cast<double>(pr.n_correct) / static_cast<double>(pr.n_total);
  }
  aggregate_report(report);
  return report;
}

std::string report_to_json(const ExperimentReport& report) {
  ExperimentReport check = report;
  aggregate_report(check);
  if (std::abs(check.mean_accuracy - report.mean_accuracy) > 1e-12 ||
      std::abs(check.std_accuracy - report.std_accuracy) > 1e-12 ||
      check.n_failed != report.n_failed) {
    throw InvalidInputError("report: stored aggregates do not match the raw records");
  }

  nlohmann::json j;
  j["format"] = "connlab-report";
  j["version"] = 1;
  j["n_permutations"] = report.n_permutations;
  j["n_folds"] = report.n_folds;
  j["master_seed"] = report.master_seed;
  j["mean_accuracy"] = report.mean_accuracy;
  j["std_accuracy"] = report.std_accuracy;
  j["n_failed"] = report.n_failed;

  nlohmann::json perms = nlohmann::json::array();
  for (const auto& p : report.permutations) {
    perms.push_back({{"permutation", p.permutation},
                     {"failed", p.failed},
                     {"accuracy", p.accuracy},
                     {"n_correct", p.n_correct},
                     {"n_total", p.n_total}});
  }
  j["permutations"] = std::move(perms);

  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : report.folds) {
    nlohmann::json jf{{"permutation", f.permutation},
                      {"fold", f.fold},
                      {"failed", f.failed},
                      {"n_test", f.n_test},
                      {"n_correct", f.n_correct},
                      {"accuracy", f.accuracy},
                      {"model_ref", f.model_ref}};
    if (f.failed) jf["error"] = f.error;
    if (std::isfinite(f.mean_loss)) {
      jf["mean_loss"] = f.mean_loss;
    } else {
      jf["mean_loss"] = nullptr;
    }
    folds.push_back(std::move(jf));
  }
  j["folds"] = std::move(folds);
  return j.dump(2) + "\n";
}

ModelFactory make_dnn_factory(int n_hidden_layers, int first_layer_neurons,
                              const TrainConfig& base) {
  return [=](const FeatureSet& fold_train, std::uint64_t seed) {
    const NetworkSpec spec =
        make_spec(fold_train.input_dim, n_hidden_layers, first_layer_neurons, base.dropout_rate);
    TrainConfig cfg = base;
    cfg.seed = seed;
    auto trained = std::make_shared<Network>(
        train(init_network(spec, seed), fold_train.x, fold_train.y, cfg).net);
    FittedModel model;
    model.network = trained;
    model.predict = [trained](std::span<const double> x) { return predict(*trained, x).label; };
    model.probs = [trained](std::span<const double> x) { return predict(*trained, x).probs; };
    return model;
  };
}

ModelFactory make_svm_factory(const SvmTrainConfig& base) {
  return [=](const FeatureSet& fold_train, std::uint64_t seed) {
    SvmTrainConfig cfg = base;
    cfg.seed = seed;
    auto model =
        std::make_shared<LinearModel>(train_linear_svm(fold_train.x, fold_train.y, cfg).model);
    FittedModel fitted;
    fitted.predict = [model](std::span<const double> x) { return predict_linear(*model, x); };
    return fitted;
  };
}

std::vector<SweepCell> structure_sweep(const Dataset& data, const SweepGrid& grid,
                                       const TrainConfig& train_cfg, const CVConfig& cv_cfg) {
  if (grid.layer_counts.empty() || grid.neuron_counts.empty()) {
    throw InvalidArgumentError("structure_sweep: empty grid");
  }
  std::vector<SweepCell> cells;
  for (int layers : grid.layer_counts) {
    for (int neurons : grid.neuron_counts) {
      SweepCell cell;
      cell.layers = layers;
      cell.neurons = neurons;
      // Same master seed for every cell: fold splits are shared, so
      // cross-structure comparisons are paired.
      cell.report = permuted_cv(data, make_dnn_factory(layers, neurons, train_cfg), cv_cfg);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::string sweep_summary_csv(std::span<const SweepCell> cells, int scale) {
  std::string csv = "layers,neurons,scale,mean_acc,std_acc\n";
  for (const auto& cell : cells) {
    csv += std::to_string(cell.layers) + "," + std::to_string(cell.neurons) + "," +
           std::to_string(scale) + "," + format_double(cell.report.mean_accuracy) + "," +
           format_double(cell.report.std_accuracy) + "\n";
  }
  return csv;
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (sorted.size() == 1) return sorted[0];
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

CorrelationSummary summarize_correlations(std::span<const double> correlations) {
  CorrelationSummary s;
  s.n_pairs = static_cast<int>(correlations.size());
  std::vector<double> defined;
  defined.reserve(correlations.size());
  for (double c : correlations) {
    if (std::isnan(c)) {
      ++s.n_undefined;
    } else {
      defined.push_back(c);
    }
  }
  if (defined.empty()) return s;
  std::sort(defined.begin(), defined.end());
  s.min = defined.front();
  s.max = defined.back();
  s.q1 = quantile_sorted(defined, 0.25);
  s.median = quantile_sorted(defined, 0.5);
  s.q3 = quantile_sorted(defined, 0.75);
  double mean = 0.0;
  for (double c : defined) mean += c;
  s.mean = mean / static_cast<double>(defined.size());
  return s;
}

RepeatabilityResult repeatability_study(const Dataset& data, int n_hidden_layers,
                                        int first_layer_neurons, const TrainConfig& train_cfg,
                                        const CVConfig& cv_cfg,
                                        const BackProjectionPolicy& policy, bool sign_align,
                                        TopFeatureSelection selection) {
  RepeatabilityResult result;
  result.patterns.resize(static_cast<std::size_t>(cv_cfg.n_permutations * cv_cfg.n_folds));

  const FoldObserver observer = [&](const FittedModel& model, int perm, int fold) {
    if (!model.network) return;
    const Network& net = *model.network;
    const RankedFeatures ranked = rank_features(net);

    const RankedFeature* top = nullptr;
    switch (selection) {
      case TopFeatureSelection::Class0:
        if (!ranked.class0.empty()) top = &ranked.class0.front();
        break;
      case TopFeatureSelection::Class1:
        if (!ranked.class1.empty()) top = &ranked.class1.front();
        break;
      case TopFeatureSelection::Overall: {
        const RankedFeature* c0 = ranked.class0.empty() ? nullptr : &ranked.class0.front();
        const RankedFeature* c1 = ranked.class1.empty() ? nullptr : &ranked.class1.front();
        if (c0 && c1) {
          top = c0->magnitude >= c1->magnitude ? c0 : c1;
        } else {
          top = c0 ? c0 : c1;
        }
        break;
      }
    }
    if (!top) throw DegenerateInputError("repeatability_study: no ranked features");

    InputPattern pattern = back_project(net, net.spec.n_hidden(), top->neuron_index, policy);
    pattern.source_diff = top->diff;
    result.patterns[static_cast<std::size_t>(perm * cv_cfg.n_folds + fold)] = std::move(pattern);
  };

  result.report =
      permuted_cv(data, make_dnn_factory(n_hidden_layers, first_layer_neurons, train_cfg), cv_cfg,
                  observer);
  if (result.report.n_failed > 0) {
    throw Error("repeatability_study: " + std::to_string(result.report.n_failed) +
                " permutations failed");
  }
  result.correlations = feature_correlation(result.patterns, sign_align);
  result.summary = summarize_correlations(result.correlations);
  result.summary.n_patterns = static_cast<int>(result.patterns.size());
  return result;
}

}  // namespace connlab

// connlab command-line interface.
//
// Subcommands: gen-data, train, eval, cv, rank, mcdrop, repeat. Every run
// writes a run_manifest.json with the resolved configuration, master seed,
// tool version, and input hashes, so any output is reproducible from its
// manifest alone. Exit codes: 0 success, 1 runtime failure, 2 usage error.
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "common.hpp"
#include "connlab/attribution.hpp"
#include "connlab/baselines.hpp"
#include "connlab/bayesian.hpp"
#include "connlab/connectivity.hpp"
#include "connlab/errors.hpp"
#include "connlab/harness.hpp"
#include "connlab/io.hpp"
#include "connlab/network.hpp"
#include "connlab/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace connlab;
using namespace connlab::cli;

namespace {

// ---------------------------------------------------------------- gen-data

struct GenDataOpts {
  std::string out;
  int nodes = 25;
  int subjects = 500;
  int timepoints = 80;
  double effect = 0.4;
  int effect_blocks = 6;
  double noise = 1.0;
  std::string class_names = "M,F";
  std::uint64_t seed = 0;
  std::string config;
  bool gnuplot = false;
};

void run_gen_data(const GenDataOpts& o) {
  SyntheticConfig cfg;
  cfg.n_nodes = o.nodes;
  cfg.n_subjects = o.subjects;
  cfg.n_timepoints = o.timepoints;
  cfg.class_effect_size = o.effect;
  cfg.n_effect_blocks = o.effect_blocks;
  cfg.noise_sd = o.noise;
  const auto names = split_list(o.class_names);
  if (names.size() != 2) throw InvalidArgumentError("--class-names expects two names");
  cfg.class_names = {names[0], names[1]};

  const Dataset data = generate_synthetic(cfg, o.seed);
  ensure_out_dir(o.out);
  save_dataset(data, o.out);

  const json resolved{{"nodes", o.nodes},       {"subjects", o.subjects},
                      {"timepoints", o.timepoints}, {"effect", o.effect},
                      {"effect_blocks", o.effect_blocks}, {"noise", o.noise},
                      {"class_names", o.class_names}};
  write_run_manifest(o.out, "gen-data", o.seed, resolved, {},
                     {"manifest.csv", "dataset.json", "matrices/"});
  std::cout << "wrote " << data.records.size() << " subjects (" << data.n_nodes << " nodes) to "
            << o.out << "\n";
}

// ------------------------------------------------------------------- train

struct TrainOpts {
  std::string data;
  std::string out;
  int layers = 1;
  int neurons = 20;
  double lr = 0.5;
  int iterations = 300;
  double l1 = 1e-6;
  double l2 = 1e-4;
  double dropout = 0.2;
  int batch_size = 0;
  double target_loss = 0.1;
  std::uint64_t seed = 0;
  std::string config;
  bool gnuplot = false;
};

TrainConfig to_train_config(double lr, int iterations, double l1, double l2, double dropout,
                            int batch_size, double target_loss, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.learning_rate = lr;
  cfg.iterations = iterations;
  cfg.l1_weight = l1;
  cfg.l2_weight = l2;
  cfg.dropout_rate = dropout;
  cfg.batch_size = batch_size;
  cfg.target_loss = target_loss;
  cfg.seed = seed;
  return cfg;
}

void run_train(const TrainOpts& o) {
  const Dataset data = load_dataset(o.data);
  const FeatureSet features = prepare_features(data);
  const NetworkSpec spec = make_spec(features.input_dim, o.layers, o.neurons, o.dropout);
  const TrainConfig cfg = to_train_config(o.lr, o.iterations, o.l1, o.l2, o.dropout,
                                          o.batch_size, o.target_loss, o.seed);
  const TrainResult result = train(init_network(spec, o.seed), features.x, features.y, cfg);

  ensure_out_dir(o.out);
  save_network(result.net, fs::path(o.out) / "model.json");

  std::string trace = "iteration,total_loss\n";
  for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
    trace += std::to_string(i) + "," + format_double(result.loss_trace[i]) + "\n";
  }
  write_csv_artifact(o.out, "loss_trace.csv", trace, o.gnuplot);

  const json summary{{"final_loss", result.loss_trace.back()},
                     {"first_iteration_at_target", result.first_iteration_at_target},
                     {"target_loss", o.target_loss},
                     {"train_accuracy", accuracy(result.net, features.x, features.y)}};
  write_text_file(fs::path(o.out) / "train_summary.json", summary.dump(2) + "\n");

  const json resolved{{"data", o.data},         {"layers", o.layers},
                      {"neurons", o.neurons},   {"lr", o.lr},
                      {"iterations", o.iterations}, {"l1", o.l1},
                      {"l2", o.l2},             {"dropout", o.dropout},
                      {"batch_size", o.batch_size}, {"target_loss", o.target_loss}};
  write_run_manifest(o.out, "train", o.seed, resolved, {fingerprint_dataset(o.data)},
                     {"model.json", "loss_trace.csv", "train_summary.json"});
  std::cout << "final loss " << format_double(result.loss_trace.back()) << ", target reached at "
            << result.first_iteration_at_target << "\n";
}

// -------------------------------------------------------------------- eval

struct EvalOpts {
  std::string data;
  std::string model;
  std::string out;
  std::string config;
  bool gnuplot = false;
};

void run_eval(const EvalOpts& o) {
  const Dataset data = load_dataset(o.data);
  const FeatureSet features = prepare_features(data);

  json doc;
  try {
    doc = json::parse(read_text_file(o.model));
  } catch (const json::exception& e) {
    throw FormatError(o.model + ": " + e.what());
  }
  const std::string format = doc.value("format", "");

  int correct = 0;
  double loss_sum = 0.0;
  bool have_loss = false;
  if (format == "connlab-network") {
    const Network net = load_network(o.model);
    for (int i = 0; i < features.size(); ++i) {
      const Prediction p = predict(net, features.x[static_cast<std::size_t>(i)]);
      if (p.label == features.y[static_cast<std::size_t>(i)]) ++correct;
      loss_sum += guarded_nll(
          p.probs[static_cast<std::size_t>(features.y[static_cast<std::size_t>(i)])]);
    }
    have_loss = true;
  } else if (format == "connlab-linear-svm") {
    const LinearModel model = load_linear_model(o.model);
    for (int i = 0; i < features.size(); ++i) {
      if (predict_linear(model, features.x[static_cast<std::size_t>(i)]) ==
          features.y[static_cast<std::size_t>(i)]) {
        ++correct;
      }
    }
  } else {
    throw FormatError(o.model + ": unrecognized model format '" + format + "'");
  }

  json result{{"n", features.size()},
              {"accuracy", static_cast<double>(correct) / features.size()}};
  result["mean_loss"] =
      have_loss ? json(loss_sum / features.size()) : json(nullptr);

  ensure_out_dir(o.out);
  write_text_file(fs::path(o.out) / "eval.json", result.dump(2) + "\n");
  write_run_manifest(o.out, "eval", 0,
                     json{{"data", o.data}, {"model", o.model}},
                     {fingerprint_dataset(o.data), fingerprint_file(o.model)}, {"eval.json"});
  std::cout << "accuracy " << result["accuracy"].dump() << " over " << features.size()
            << " subjects\n";
}

// ---------------------------------------------------------------------- cv

struct CvOpts {
  std::string data;
  std::string out;
  std::string model = "dnn";
  std::string layers = "1";
  std::string neurons = "20";
  int permutations = 50;
  int folds = 2;
  int jobs = 1;
  bool stratified = false;
  double lr = 0.5;
  int iterations = 300;
  double l1 = 1e-6;
  double l2 = 1e-4;
  double dropout = 0.2;
  int batch_size = 0;
  double target_loss = 0.1;
  double svm_lambda = 0.4;
  int svm_epochs = 50;
  std::uint64_t seed = 0;
  std::string config;
  bool gnuplot = false;
};

void run_cv(const CvOpts& o) {
  const Dataset data = load_dataset(o.data);
  CVConfig cv_cfg;
  cv_cfg.n_permutations = o.permutations;
  cv_cfg.n_folds = o.folds;
  cv_cfg.master_seed = o.seed;
  cv_cfg.jobs = o.jobs;
  cv_cfg.stratified = o.stratified;

  ensure_out_dir(o.out);
  std::vector<std::string> outputs;

  if (o.model == "linear-svm") {
    SvmTrainConfig svm;
    svm.lambda = o.svm_lambda;
    svm.epochs = o.svm_epochs;
    const ExperimentReport report = permuted_cv(data, make_svm_factory(svm), cv_cfg);
    write_text_file(fs::path(o.out) / "report.json", report_to_json(report));
    outputs.push_back("report.json");

    std::string csv = "layers,neurons,scale,mean_acc,std_acc\n0,0," +
                      std::to_string(data.n_nodes) + "," + format_double(report.mean_accuracy) +
                      "," + format_double(report.std_accuracy) + "\n";
    write_csv_artifact(o.out, "summary.csv", csv, o.gnuplot);
    outputs.push_back("summary.csv");
    std::cout << "linear-svm mean_acc " << format_double(report.mean_accuracy) << " std "
              << format_double(report.std_accuracy) << "\n";
  } else if (o.model == "dnn") {
    const TrainConfig train_cfg = to_train_config(o.lr, o.iterations, o.l1, o.l2, o.dropout,
                                                  o.batch_size, o.target_loss, 0);
    const std::vector<int> layer_list = parse_int_list(o.layers, "--layers");
    const std::vector<int> neuron_list = parse_int_list(o.neurons, "--neurons");

    if (layer_list.size() == 1 && neuron_list.size() == 1) {
      const ExperimentReport report =
          permuted_cv(data, make_dnn_factory(layer_list[0], neuron_list[0], train_cfg), cv_cfg);
      write_text_file(fs::path(o.out) / "report.json", report_to_json(report));
      outputs.push_back("report.json");
      SweepCell cell{layer_list[0], neuron_list[0], report};
      write_csv_artifact(o.out, "summary.csv",
                         sweep_summary_csv(std::vector<SweepCell>{cell}, data.n_nodes),
                         o.gnuplot);
      outputs.push_back("summary.csv");
      std::cout << "dnn mean_acc " << format_double(report.mean_accuracy) << " std "
                << format_double(report.std_accuracy) << "\n";
    } else {
      SweepGrid grid{layer_list, neuron_list};
      const auto cells = structure_sweep(data, grid, train_cfg, cv_cfg);
      for (const auto& cell : cells) {
        const std::string name = "report_L" + std::to_string(cell.layers) + "_N" +
                                 std::to_string(cell.neurons) + ".json";
        write_text_file(fs::path(o.out) / name, report_to_json(cell.report));
        outputs.push_back(name);
      }
      write_csv_artifact(o.out, "summary.csv", sweep_summary_csv(cells, data.n_nodes), o.gnuplot);
      outputs.push_back("summary.csv");
      std::cout << "sweep of " << cells.size() << " cells written\n";
    }
  } else {
    throw InvalidArgumentError("--model must be dnn or linear-svm");
  }

  const json resolved{{"data", o.data},     {"model", o.model},
                      {"layers", o.layers}, {"neurons", o.neurons},
                      {"permutations", o.permutations}, {"folds", o.folds},
                      {"jobs", o.jobs},     {"stratified", o.stratified},
                      {"lr", o.lr},         {"iterations", o.iterations},
                      {"l1", o.l1},         {"l2", o.l2},
                      {"dropout", o.dropout}, {"batch_size", o.batch_size},
                      {"svm_lambda", o.svm_lambda}, {"svm_epochs", o.svm_epochs}};
  write_run_manifest(o.out, "cv", o.seed, resolved, {fingerprint_dataset(o.data)}, outputs);
}

// -------------------------------------------------------------------- rank

struct RankOpts {
  std::string model;
  std::string data;
  std::string out;
  int top = 1;
  std::string policy = "all";
  std::string pairs = "1,2,5,10";
  std::string ranks = "1,2,3,4,5";
  std::string config;
  bool gnuplot = false;
};

BackProjectionPolicy parse_policy(const std::string& text) {
  if (text == "all") return BackProjectionPolicy::all();
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const std::string head = text.substr(0, colon);
    const std::string tail = text.substr(colon + 1);
    if (head == "threshold") {
      return BackProjectionPolicy::magnitude_threshold(parse_double(tail, "--policy"));
    }
    if (head == "topk") {
      try {
        return BackProjectionPolicy::top_k(std::stoi(tail));
      } catch (const std::exception&) {
        throw InvalidArgumentError("--policy topk: bad count '" + tail + "'");
      }
    }
  }
  throw InvalidArgumentError("--policy must be all, threshold:<t>, or topk:<k>");
}

void run_rank(const RankOpts& o) {
  const Network net = load_network(o.model);
  const RankedFeatures ranked = rank_features(net);
  const BackProjectionPolicy policy = parse_policy(o.policy);
  const std::string net_hash = to_hex(fnv1a64_file(o.model));

  ensure_out_dir(o.out);
  std::vector<std::string> outputs;

  std::string csv = "neuron_index,diff,magnitude,assigned_class,rank_within_class\n";
  const auto append_rows = [&csv](const std::vector<RankedFeature>& list) {
    for (const auto& f : list) {
      csv += std::to_string(f.neuron_index) + "," + format_double(f.diff) + "," +
             format_double(f.magnitude) + "," + std::to_string(f.assigned_class) + "," +
             std::to_string(f.rank_within_class) + "\n";
    }
  };
  append_rows(ranked.class0);
  append_rows(ranked.class1);
  write_csv_artifact(o.out, "ranked_features.csv", csv, o.gnuplot);
  outputs.push_back("ranked_features.csv");

  // back-projected patterns for the top features of each class
  const auto export_patterns = [&](const std::vector<RankedFeature>& list, int cls) {
    const int limit = std::min<int>(o.top, static_cast<int>(list.size()));
    for (int r = 0; r < limit; ++r) {
      const RankedFeature& f = list[static_cast<std::size_t>(r)];
      InputPattern pattern = back_project(net, net.spec.n_hidden(), f.neuron_index, policy);
      pattern.source_diff = f.diff;
      const ConnectivityMatrix view = pattern.matrix_view();
      std::string body;
      for (int i = 0; i < view.n_nodes; ++i) {
        for (int j = 0; j < view.n_nodes; ++j) {
          if (j) body += ',';
          body += format_double(view.values(i, j));
        }
        body += '\n';
      }
      const std::string stem = "pattern_class" + std::to_string(cls) + "_rank" +
                               std::to_string(r + 1);
      write_text_file(fs::path(o.out) / (stem + ".csv"), body);
      const json sidecar{{"network_fnv1a64", net_hash},
                         {"layer", pattern.source_layer},
                         {"neuron", f.neuron_index},
                         {"rank", r + 1},
                         {"class", cls},
                         {"diff", f.diff},
                         {"policy", policy.describe()}};
      write_text_file(fs::path(o.out) / (stem + ".json"), sidecar.dump(2) + "\n");
      outputs.push_back(stem + ".csv");
      outputs.push_back(stem + ".json");
    }
  };
  export_patterns(ranked.class0, 0);
  export_patterns(ranked.class1, 1);

  std::vector<InputFingerprint> inputs{fingerprint_file(o.model)};

  if (!o.data.empty()) {
    const Dataset data = load_dataset(o.data);
    const FeatureSet features = prepare_features(data);
    inputs.push_back(fingerprint_dataset(o.data));

    std::string loss_csv = "rank,mean_cross_entropy\n";
    for (int r : parse_int_list(o.ranks, "--ranks")) {
      loss_csv += std::to_string(r) + "," +
                  format_double(pair_loss(net, features.x, features.y, r)) + "\n";
    }
    write_csv_artifact(o.out, "pair_loss.csv", loss_csv, o.gnuplot);
    outputs.push_back("pair_loss.csv");

    std::string trunc_csv = "k_pairs,accuracy,mean_cross_entropy\n";
    const auto truncated_row = [&](int k, const std::string& label) {
      int correct = 0;
      double loss_sum = 0.0;
      for (int i = 0; i < features.size(); ++i) {
        const Prediction p = truncated_predict(net, features.x[static_cast<std::size_t>(i)], k);
        const int y = features.y[static_cast<std::size_t>(i)];
        if (p.label == y) ++correct;
        loss_sum += guarded_nll(p.probs[static_cast<std::size_t>(y)]);
      }
      trunc_csv += label + "," + format_double(static_cast<double>(correct) / features.size()) +
                   "," + format_double(loss_sum / features.size()) + "\n";
    };
    for (int k : parse_int_list(o.pairs, "--pairs")) truncated_row(k, std::to_string(k));
    truncated_row(kAllPairs, "all");
    write_csv_artifact(o.out, "truncated.csv", trunc_csv, o.gnuplot);
    outputs.push_back("truncated.csv");
  }

  const json resolved{{"model", o.model}, {"data", o.data},   {"top", o.top},
                      {"policy", o.policy}, {"pairs", o.pairs}, {"ranks", o.ranks}};
  write_run_manifest(o.out, "rank", 0, resolved, inputs, outputs);
  std::cout << "ranked " << ranked.class0.size() << " class-0 and " << ranked.class1.size()
            << " class-1 features\n";
}

// ------------------------------------------------------------------ mcdrop

struct McdropOpts {
  std::string model;
  std::string data;
  std::string out;
  std::string policies = "rate:0.2,rate:0.5,rate:0.9,retain:2";
  int T = 100;
  int subsets = 0;
  std::string subset_policy = "rate:0.5";
  std::string mix_stage = "normalized";
  bool details = false;
  std::uint64_t seed = 0;
  std::string config;
  bool gnuplot = false;
};

json prediction_records(const std::vector<BayesianPrediction>& preds) {
  json arr = json::array();
  for (const auto& p : preds) {
    arr.push_back({{"mean_probs", p.mean_probs},
                   {"variance", p.variance},
                   {"uncertainty", p.uncertainty},
                   {"label", p.label},
                   {"T", p.T}});
  }
  return arr;
}

void run_mcdrop(const McdropOpts& o) {
  const Network net = load_network(o.model);
  const Dataset data = load_dataset(o.data);
  const FeatureSet features = prepare_features(data);

  std::vector<DropoutPolicy> policies;
  for (const auto& token : split_list(o.policies)) policies.push_back(DropoutPolicy::parse(token));
  if (policies.empty()) throw InvalidArgumentError("--policies: empty list");

  ensure_out_dir(o.out);
  std::vector<std::string> outputs;

  std::vector<std::vector<BayesianPrediction>> details;
  const auto rows =
      dropout_rate_sweep(net, features, policies, o.T, o.seed, o.details ? &details : nullptr);
  std::string csv = "policy,mc_accuracy,wa_accuracy\n";
  for (const auto& row : rows) {
    csv += row.policy.describe() + "," + format_double(row.mc_accuracy) + "," +
           format_double(row.weight_avg_accuracy) + "\n";
  }
  write_csv_artifact(o.out, "dropout_sweep.csv", csv, o.gnuplot);
  outputs.push_back("dropout_sweep.csv");

  if (o.details) {
    json doc = json::object();
    for (std::size_t p = 0; p < rows.size(); ++p) {
      doc[rows[p].policy.describe()] = prediction_records(details[p]);
    }
    write_text_file(fs::path(o.out) / "dropout_sweep_details.json", doc.dump(2) + "\n");
    outputs.push_back("dropout_sweep_details.json");
  }

  if (o.subsets > 0) {
    MixStage stage;
    if (o.mix_stage == "normalized") {
      stage = MixStage::Normalized;
    } else if (o.mix_stage == "raw") {
      stage = MixStage::Raw;
    } else {
      throw InvalidArgumentError("--mix-stage must be normalized or raw");
    }
    const SubsetSuite suite =
        build_subset_suite(data, o.subsets, mix_seed({o.seed, 0x5B}), stage);
    const DropoutPolicy subset_policy = DropoutPolicy::parse(o.subset_policy);
    std::vector<std::vector<BayesianPrediction>> subset_details;
    const auto subset_rows = uncertainty_sweep(net, suite, o.T, subset_policy, o.seed,
                                               o.details ? &subset_details : nullptr);
    std::string subset_csv = "subset,accuracy,mean_uncertainty\n";
    for (const auto& row : subset_rows) {
      subset_csv += row.subset + "," + format_double(row.accuracy) + "," +
                    format_double(row.mean_uncertainty) + "\n";
    }
    write_csv_artifact(o.out, "subset_uncertainty.csv", subset_csv, o.gnuplot);
    outputs.push_back("subset_uncertainty.csv");

    if (o.details) {
      json doc = json::object();
      for (std::size_t s = 0; s < subset_rows.size(); ++s) {
        doc[subset_rows[s].subset] = prediction_records(subset_details[s]);
      }
      write_text_file(fs::path(o.out) / "subset_uncertainty_details.json", doc.dump(2) + "\n");
      outputs.push_back("subset_uncertainty_details.json");
    }
  }

  const json resolved{{"model", o.model},       {"data", o.data},
                      {"policies", o.policies}, {"T", o.T},
                      {"subsets", o.subsets},   {"subset_policy", o.subset_policy},
                      {"mix_stage", o.mix_stage}, {"details", o.details}};
  write_run_manifest(o.out, "mcdrop", o.seed, resolved,
                     {fingerprint_file(o.model), fingerprint_dataset(o.data)}, outputs);
  std::cout << "swept " << rows.size() << " policies at T=" << o.T << "\n";
}

// ------------------------------------------------------------------ repeat

struct RepeatOpts {
  std::string data;
  std::string out;
  int layers = 1;
  int neurons = 20;
  int permutations = 50;
  int folds = 2;
  int jobs = 1;
  double lr = 0.5;
  int iterations = 300;
  double l1 = 1e-6;
  double l2 = 1e-4;
  double dropout = 0.2;
  std::string policy = "all";
  std::string selection = "overall";
  bool no_sign_align = false;
  bool export_patterns = false;
  std::uint64_t seed = 0;
  std::string config;
  bool gnuplot = false;
};

void run_repeat(const RepeatOpts& o) {
  const Dataset data = load_dataset(o.data);
  const TrainConfig train_cfg =
      to_train_config(o.lr, o.iterations, o.l1, o.l2, o.dropout, 0, 0.1, 0);
  CVConfig cv_cfg;
  cv_cfg.n_permutations = o.permutations;
  cv_cfg.n_folds = o.folds;
  cv_cfg.master_seed = o.seed;
  cv_cfg.jobs = o.jobs;

  TopFeatureSelection selection;
  if (o.selection == "overall") {
    selection = TopFeatureSelection::Overall;
  } else if (o.selection == "class0") {
    selection = TopFeatureSelection::Class0;
  } else if (o.selection == "class1") {
    selection = TopFeatureSelection::Class1;
  } else {
    throw InvalidArgumentError("--selection must be overall, class0, or class1");
  }

  const RepeatabilityResult result = repeatability_study(
      data, o.layers, o.neurons, train_cfg, cv_cfg, parse_policy(o.policy), !o.no_sign_align,
      selection);

  ensure_out_dir(o.out);
  std::vector<std::string> outputs;

  const json summary{{"n_patterns", result.summary.n_patterns},
                     {"n_pairs", result.summary.n_pairs},
                     {"n_undefined", result.summary.n_undefined},
                     {"min", result.summary.min},
                     {"q1", result.summary.q1},
                     {"median", result.summary.median},
                     {"q3", result.summary.q3},
                     {"max", result.summary.max},
                     {"mean", result.summary.mean},
                     {"cv_mean_accuracy", result.report.mean_accuracy},
                     {"cv_std_accuracy", result.report.std_accuracy}};
  write_text_file(fs::path(o.out) / "repeatability.json", summary.dump(2) + "\n");
  outputs.push_back("repeatability.json");

  std::string corr_csv = "correlation\n";
  for (double c : result.correlations) corr_csv += format_double(c) + "\n";
  write_csv_artifact(o.out, "correlations.csv", corr_csv, o.gnuplot);
  outputs.push_back("correlations.csv");

  if (o.export_patterns) {
    ensure_out_dir(fs::path(o.out) / "patterns");
    for (std::size_t i = 0; i < result.patterns.size(); ++i) {
      const auto view = result.patterns[i].matrix_view();
      std::string body;
      for (int r = 0; r < view.n_nodes; ++r) {
        for (int c = 0; c < view.n_nodes; ++c) {
          if (c) body += ',';
          body += format_double(view.values(r, c));
        }
        body += '\n';
      }
      write_text_file(fs::path(o.out) / "patterns" /
                          ("pattern_" + std::to_string(i) + ".csv"),
                      body);
    }
    outputs.push_back("patterns/");
  }

  const json resolved{{"data", o.data},       {"layers", o.layers},
                      {"neurons", o.neurons}, {"permutations", o.permutations},
                      {"folds", o.folds},     {"jobs", o.jobs},
                      {"lr", o.lr},           {"iterations", o.iterations},
                      {"policy", o.policy},   {"selection", o.selection},
                      {"sign_align", !o.no_sign_align}};
  write_run_manifest(o.out, "repeat", o.seed, resolved, {fingerprint_dataset(o.data)}, outputs);
  std::cout << "median correlation " << format_double(result.summary.median) << " over "
            << result.summary.n_pairs << " pairs\n";
}

// --------------------------------------------------------------- app setup

void add_common(CLI::App* cmd, std::string& config, bool& gnuplot) {
  cmd->add_option("--config", config, "JSON config file; explicit flags win");
  cmd->add_flag("--gnuplot", gnuplot, "also write whitespace-separated .dat files");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"functional-connectivity classification lab"};
  app.set_version_flag("--version", std::string("connlab ") + kVersion);
  app.require_subcommand(1);

  GenDataOpts gen;
  auto* cmd_gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  cmd_gen->add_option("--out", gen.out, "output directory")->required();
  cmd_gen->add_option("--nodes", gen.nodes, "matrix size");
  cmd_gen->add_option("--subjects", gen.subjects, "subject count (even)");
  cmd_gen->add_option("--timepoints", gen.timepoints, "latent time series length");
  cmd_gen->add_option("--effect", gen.effect, "class effect size");
  cmd_gen->add_option("--effect-blocks", gen.effect_blocks, "number of affected node pairs");
  cmd_gen->add_option("--noise", gen.noise, "observation noise sd");
  cmd_gen->add_option("--class-names", gen.class_names, "two names, comma separated");
  cmd_gen->add_option("--seed", gen.seed, "master seed")->envname("CONNLAB_SEED");
  add_common(cmd_gen, gen.config, gen.gnuplot);

  TrainOpts tr;
  auto* cmd_train = app.add_subcommand("train", "train a network on a dataset");
  cmd_train->add_option("--data", tr.data, "manifest CSV")->required();
  cmd_train->add_option("--out", tr.out, "output directory")->required();
  cmd_train->add_option("--layers", tr.layers, "hidden layer count");
  cmd_train->add_option("--neurons", tr.neurons, "first hidden layer size");
  cmd_train->add_option("--lr", tr.lr, "learning rate");
  cmd_train->add_option("--iterations", tr.iterations, "gradient steps");
  cmd_train->add_option("--l1", tr.l1, "L1 weight (beta)");
  cmd_train->add_option("--l2", tr.l2, "L2 weight (gamma)");
  cmd_train->add_option("--dropout", tr.dropout, "last hidden layer dropout rate");
  cmd_train->add_option("--batch-size", tr.batch_size, "0 = full batch");
  cmd_train->add_option("--target-loss", tr.target_loss, "advisory convergence target");
  cmd_train->add_option("--seed", tr.seed, "master seed")->envname("CONNLAB_SEED");
  add_common(cmd_train, tr.config, tr.gnuplot);

  EvalOpts ev;
  auto* cmd_eval = app.add_subcommand("eval", "evaluate a saved model on a dataset");
  cmd_eval->add_option("--data", ev.data, "manifest CSV")->required();
  cmd_eval->add_option("--model", ev.model, "model JSON (network or linear svm)")->required();
  cmd_eval->add_option("--out", ev.out, "output directory")->required();
  add_common(cmd_eval, ev.config, ev.gnuplot);

  CvOpts cv;
  auto* cmd_cv = app.add_subcommand("cv", "randomly permuted k-fold cross validation");
  cmd_cv->add_option("--data", cv.data, "manifest CSV")->required();
  cmd_cv->add_option("--out", cv.out, "output directory")->required();
  cmd_cv->add_option("--model", cv.model, "dnn or linear-svm");
  cmd_cv->add_option("--layers", cv.layers, "layer count or comma list for a sweep");
  cmd_cv->add_option("--neurons", cv.neurons, "first-layer size or comma list");
  cmd_cv->add_option("--permutations", cv.permutations, "number of permutations");
  cmd_cv->add_option("--folds", cv.folds, "fold count");
  cmd_cv->add_option("--jobs", cv.jobs, "worker threads");
  cmd_cv->add_flag("--stratified", cv.stratified, "stratify folds by class");
  cmd_cv->add_option("--lr", cv.lr, "learning rate");
  cmd_cv->add_option("--iterations", cv.iterations, "gradient steps");
  cmd_cv->add_option("--l1", cv.l1, "L1 weight");
  cmd_cv->add_option("--l2", cv.l2, "L2 weight");
  cmd_cv->add_option("--dropout", cv.dropout, "last hidden layer dropout");
  cmd_cv->add_option("--batch-size", cv.batch_size, "0 = full batch");
  cmd_cv->add_option("--svm-lambda", cv.svm_lambda, "svm regularization");
  cmd_cv->add_option("--svm-epochs", cv.svm_epochs, "svm epochs");
  cmd_cv->add_option("--seed", cv.seed, "master seed")->envname("CONNLAB_SEED");
  add_common(cmd_cv, cv.config, cv.gnuplot);

  RankOpts rk;
  auto* cmd_rank = app.add_subcommand("rank", "rank features and export patterns");
  cmd_rank->add_option("--model", rk.model, "network JSON")->required();
  cmd_rank->add_option("--data", rk.data, "manifest CSV for pair-loss and truncation curves");
  cmd_rank->add_option("--out", rk.out, "output directory")->required();
  cmd_rank->add_option("--top", rk.top, "patterns to export per class");
  cmd_rank->add_option("--policy", rk.policy, "all, threshold:<t>, or topk:<k>");
  cmd_rank->add_option("--pairs", rk.pairs, "k_pairs list for the truncation curve");
  cmd_rank->add_option("--ranks", rk.ranks, "ranks for the pair-loss curve");
  add_common(cmd_rank, rk.config, rk.gnuplot);

  McdropOpts mc;
  auto* cmd_mcdrop = app.add_subcommand("mcdrop", "Monte Carlo dropout sweeps");
  cmd_mcdrop->add_option("--model", mc.model, "network JSON")->required();
  cmd_mcdrop->add_option("--data", mc.data, "manifest CSV (test set)")->required();
  cmd_mcdrop->add_option("--out", mc.out, "output directory")->required();
  cmd_mcdrop->add_option("--policies,--policy", mc.policies, "comma list of rate:<p> / retain:<m>");
  cmd_mcdrop->add_option("--T", mc.T, "stochastic passes per prediction");
  cmd_mcdrop->add_option("--subsets", mc.subsets, "per-subset size for the mixing suite (0 = skip)");
  cmd_mcdrop->add_option("--subset-policy", mc.subset_policy, "policy for the subset sweep");
  cmd_mcdrop->add_option("--mix-stage", mc.mix_stage, "normalized or raw");
  cmd_mcdrop->add_flag("--details", mc.details, "write per-input prediction records");
  cmd_mcdrop->add_option("--seed", mc.seed, "master seed")->envname("CONNLAB_SEED");
  add_common(cmd_mcdrop, mc.config, mc.gnuplot);

  RepeatOpts rp;
  auto* cmd_repeat = app.add_subcommand("repeat", "feature repeatability across permuted CV");
  cmd_repeat->add_option("--data", rp.data, "manifest CSV")->required();
  cmd_repeat->add_option("--out", rp.out, "output directory")->required();
  cmd_repeat->add_option("--layers", rp.layers, "hidden layer count");
  cmd_repeat->add_option("--neurons", rp.neurons, "first hidden layer size");
  cmd_repeat->add_option("--permutations", rp.permutations, "number of permutations");
  cmd_repeat->add_option("--folds", rp.folds, "fold count");
  cmd_repeat->add_option("--jobs", rp.jobs, "worker threads");
  cmd_repeat->add_option("--lr", rp.lr, "learning rate");
  cmd_repeat->add_option("--iterations", rp.iterations, "gradient steps");
  cmd_repeat->add_option("--l1", rp.l1, "L1 weight");
  cmd_repeat->add_option("--l2", rp.l2, "L2 weight");
  cmd_repeat->add_option("--dropout", rp.dropout, "last hidden layer dropout");
  cmd_repeat->add_option("--policy", rp.policy, "back-projection policy");
  cmd_repeat->add_option("--selection", rp.selection, "overall, class0, or class1");
  cmd_repeat->add_flag("--no-sign-align", rp.no_sign_align, "skip orientation alignment");
  cmd_repeat->add_flag("--export-patterns", rp.export_patterns, "write per-model pattern CSVs");
  cmd_repeat->add_option("--seed", rp.seed, "master seed")->envname("CONNLAB_SEED");
  add_common(cmd_repeat, rp.config, rp.gnuplot);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    const auto with_overlay = [](CLI::App* cmd, std::string& config_path, auto&& apply) {
      ConfigOverlay overlay;
      if (!config_path.empty()) overlay.load(config_path);
      apply(cmd, overlay);
    };

    if (cmd_gen->parsed()) {
      with_overlay(cmd_gen, gen.config, [&](CLI::App* c, const ConfigOverlay& ov) {
        ov.apply(c, "--nodes", "nodes", gen.nodes);
        ov.apply(c, "--subjects", "subjects", gen.subjects);
        ov.apply(c, "--timepoints", "timepoints", gen.timepoints);
        ov.apply(c, "--effect", "effect", gen.effect);
        ov.apply(c, "--effect-blocks", "effect_blocks", gen.effect_blocks);
        ov.apply(c, "--noise", "noise", gen.noise);
        ov.apply(c, "--class-names", "class_names", gen.class_names);
        ov.apply(c, "--seed", "seed", gen.seed);
      });
      run_gen_data(gen);
    } else if (cmd_train->parsed()) {
      with_overlay(cmd_train, tr.config, [&](CLI::App* c, const ConfigOverlay& ov) {
        ov.apply(c, "--layers", "layers", tr.layers);
        ov.apply(c, "--neurons", "neurons", tr.neurons);
        ov.apply(c, "--lr", "lr", tr.lr);
        ov.apply(c, "--iterations", "iterations", tr.iterations);
        ov.apply(c, "--l1", "l1", tr.l1);
        ov.apply(c, "--l2", "l2", tr.l2);
        ov.apply(c, "--dropout", "dropout", tr.dropout);
        ov.apply(c, "--batch-size", "batch_size", tr.batch_size);
        ov.apply(c, "--target-loss", "target_loss", tr.target_loss);
        ov.apply(c, "--seed", "seed", tr.seed);
      });
      run_train(tr);
    } else if (cmd_eval->parsed()) {
      run_eval(ev);
    } else if (cmd_cv->parsed()) {
      with_overlay(cmd_cv, cv.config, [&](CLI::App* c, const ConfigOverlay& ov) {
        ov.apply(c, "--model", "model", cv.model);
        ov.apply(c, "--layers", "layers", cv.layers);
        ov.apply(c, "--neurons", "neurons", cv.neurons);
        ov.apply(c, "--permutations", "permutations", cv.permutations);
        ov.apply(c, "--folds", "folds", cv.folds);
        ov.apply(c, "--jobs", "jobs", cv.jobs);
        ov.apply(c, "--lr", "lr", cv.lr);
        ov.apply(c, "--iterations", "iterations", cv.iterations);
        ov.apply(c, "--l1", "l1", cv.l1);
        ov.apply(c, "--l2", "l2", cv.l2);
        ov.apply(c, "--dropout", "dropout", cv.dropout);
        ov.apply(c, "--batch-size", "batch_size", cv.batch_size);
        ov.apply(c, "--svm-lambda", "svm_lambda", cv.svm_lambda);
        ov.apply(c, "--svm-epochs", "svm_epochs", cv.svm_epochs);
        ov.apply(c, "--seed", "seed", cv.seed);
      });
      run_cv(cv);
    } else if (cmd_rank->parsed()) {
      with_overlay(cmd_rank, rk.config, [&](CLI::App* c, const ConfigOverlay& ov) {
        ov.apply(c, "--top", "top", rk.top);
        ov.apply(c, "--policy", "policy", rk.policy);
        ov.apply(c, "--pairs", "pairs", rk.pairs);
        ov.apply(c, "--ranks", "ranks", rk.ranks);
      });
      run_rank(rk);
    } else if (cmd_mcdrop->parsed()) {
      with_overlay(cmd_mcdrop, mc.config, [&](CLI::App* c, const ConfigOverlay& ov) {
        ov.apply(c, "--policies", "policies", mc.policies);
        ov.apply(c, "--T", "T", mc.T);
        ov.apply(c, "--subsets", "subsets", mc.subsets);
        ov.apply(c, "--subset-policy", "subset_policy", mc.subset_policy);
        ov.apply(c, "--mix-stage", "mix_stage", mc.mix_stage);
        ov.apply(c, "--seed", "seed", mc.seed);
      });
      run_mcdrop(mc);
    } else if (cmd_repeat->parsed()) {
      with_overlay(cmd_repeat, rp.config, [&](CLI::App* c, const ConfigOverlay& ov) {
        ov.apply(c, "--layers", "layers", rp.layers);
        ov.apply(c, "--neurons", "neurons", rp.neurons);
        ov.apply(c, "--permutations", "permutations", rp.permutations);
        ov.apply(c, "--folds", "folds", rp.folds);
        ov.apply(c, "--jobs", "jobs", rp.jobs);
        ov.apply(c, "--lr", "lr", rp.lr);
        ov.apply(c, "--iterations", "iterations", rp.iterations);
        ov.apply(c, "--seed", "seed", rp.seed);
      });
      run_repeat(rp);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

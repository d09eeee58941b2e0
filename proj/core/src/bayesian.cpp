#include "connlab/bayesian.hpp"

#include <algorithm>
#include <cmath>

#include "connlab/errors.hpp"
#include "connlab/io.hpp"

namespace connlab {

DropoutPolicy DropoutPolicy::parse(const std::string& text) {
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const std::string head = text.substr(0, colon);
    const std::string tail = text.substr(colon + 1);
    if (head == "rate") return make_rate(parse_double(tail, "policy '" + text + "'"));
    if (head == "retain") {
      try {
        return retain_exact(std::stoi(tail));
      } catch (const std::exception&) {
        throw InvalidArgumentError("policy '" + text + "': bad retain count");
      }
    }
  }
  throw InvalidArgumentError("policy '" + text + "': expected rate:<p> or retain:<m>");
}

std::string DropoutPolicy::describe() const {
  if (kind == Kind::Rate) return "rate:" + format_double(rate);
  return "retain:" + std::to_string(retain);
}

namespace {

int resolve_target_layer(const Network& net, const DropoutPolicy& policy) {
  const int n_hidden = net.spec.n_hidden();
  const int target = policy.target_layer < 0 ? n_hidden - 1 : policy.target_layer;
  if (target < 0 || target >= n_hidden) {
    throw InvalidArgumentError("dropout policy: target layer " + std::to_string(target) +
                               " out of range");
  }
  return target;
}

void validate_policy(const Network& net, const DropoutPolicy& policy) {
  const int target = resolve_target_layer(net, policy);
  const int layer_size = net.spec.hidden_sizes[static_cast<std::size_t>(target)];
  if (policy.kind == DropoutPolicy::Kind::Rate) {
    if (!(policy.rate >= 0.0 && policy.rate < 1.0)) {
      throw InvalidArgumentError("dropout policy: rate must be in [0,1)");
    }
  } else {
    if (policy.retain < 1 || policy.retain > layer_size) {
      throw InvalidArgumentError("dropout policy: retain " + std::to_string(policy.retain) +
                                 " out of range for layer of size " + std::to_string(layer_size));
    }
  }
}

// Masks for one stochastic pass: live dropout on the target layer per the
// policy, deterministic scaling everywhere else. Degenerate policies
// (rate 0, retain == layer size) produce no mask and no randomness, which
// makes the pass bit-identical to the deterministic forward.
DropoutMasks policy_masks(const Network& net, const DropoutPolicy& policy, int target, Rng& rng) {
  DropoutMasks masks = deterministic_masks(net.spec);
  const auto layer_size =
      static_cast<std::size_t>(net.spec.hidden_sizes[static_cast<std::size_t>(target)]);
  auto& keep = masks.keep[static_cast<std::size_t>(target)];
  if (policy.kind == DropoutPolicy::Kind::Rate) {
    if (policy.rate == 0.0) return masks;
    keep.resize(layer_size);
    for (auto& k : keep) k = rng.bernoulli(policy.rate) ? 0 : 1;
  } else {
    if (static_cast<std::size_t>(policy.retain) == layer_size) return masks;
    keep.assign(layer_size, 0);
    // uniform m-subset via partial Fisher-Yates
    std::vector<int> idx(layer_size);
    for (std::size_t j = 0; j < layer_size; ++j) idx[j] = static_cast<int>(j);
    for (int j = 0; j < policy.retain; ++j) {
      const auto pick = j + static_cast<int>(rng.uniform_int(layer_size - static_cast<std::size_t>(j)));
      std::swap(idx[static_cast<std::size_t>(j)], idx[static_cast<std::size_t>(pick)]);
      keep[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])] = 1;
    }
  }
  return masks;
}

// The target layer scales by its spec retain probability in deterministic
// mode; live dropout must act on the unscaled activations, so the policy
// replaces the layer's rate during MC passes.
Network with_target_rate_cleared(const Network& net, int target) {
  Network adjusted = net;
  if (adjusted.spec.dropout_rates.empty()) {
    adjusted.spec.dropout_rates.assign(static_cast<std::size_t>(adjusted.spec.n_hidden()), 0.0);
  }
  adjusted.spec.dropout_rates[static_cast<std::size_t>(target)] = 0.0;
  return adjusted;
}

}  // namespace

BayesianPrediction mc_dropout_predict(const Network& net, std::span<const double> x, int T,
                                      const DropoutPolicy& policy, std::uint64_t seed) {
  if (T < 1) throw InvalidArgumentError("mc_dropout_predict: T must be >= 1");
  validate_policy(net, policy);
  const int target = resolve_target_layer(net, policy);

  const bool stochastic =
      (policy.kind == DropoutPolicy::Kind::Rate && policy.rate > 0.0) ||
      (policy.kind == DropoutPolicy::Kind::RetainExact &&
       policy.retain < net.spec.hidden_sizes[static_cast<std::size_t>(target)]);

  const Network* model = &net;
  Network adjusted;
  if (stochastic) {
    adjusted = with_target_rate_cleared(net, target);
    model = &adjusted;
  }

  const auto n_classes = static_cast<std::size_t>(net.spec.n_classes);
  std::vector<std::vector<double>> samples;
  samples.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    Rng pass_rng(mix_seed({seed, 0xB1, static_cast<std::uint64_t>(t)}));
    const DropoutMasks masks = policy_masks(*model, policy, target, pass_rng);
    samples.push_back(forward(*model, x, masks).probs);
  }

  BayesianPrediction out;
  out.T = T;
  bool all_identical = true;
  for (const auto& s : samples) {
    if (s != samples.front()) {
      all_identical = false;
      break;
    }
  }
  if (all_identical) {
    // No stochasticity: the mean is the sample and the variance is exactly 0.
    out.mean_probs = samples.front();
    out.variance.assign(n_classes, 0.0);
  } else {
    out.mean_probs.assign(n_classes, 0.0);
    for (const auto& s : samples)
      for (std::size_t k = 0; k < n_classes; ++k) out.mean_probs[k] += s[k];
    for (double& v : out.mean_probs) v /= static_cast<double>(T);
    out.variance.assign(n_classes, 0.0);
    if (T > 1) {
      for (const auto& s : samples)
        for (std::size_t k = 0; k < n_classes; ++k) {
          const double d = s[k] - out.mean_probs[k];
          out.variance[k] += d * d;
        }
      for (double& v : out.variance) v /= static_cast<double>(T - 1);
    }
  }
  out.uncertainty = out.variance[0];
  out.label = 0;
  for (std::size_t k = 1; k < n_classes; ++k) {
    if (out.mean_probs[k] > out.mean_probs[static_cast<std::size_t>(out.label)]) {
      out.label = static_cast<int>(k);
    }
  }
  return out;
}

std::vector<RateSweepRow> dropout_rate_sweep(const Network& net, const FeatureSet& test,
                                             std::span<const DropoutPolicy> policies, int T,
                                             std::uint64_t seed,
                                             std::vector<std::vector<BayesianPrediction>>* details) {
  if (test.x.empty()) throw InvalidArgumentError("dropout_rate_sweep: empty test set");
  const double wa_accuracy = accuracy(net, test.x, test.y);

  std::vector<RateSweepRow> rows;
  if (details) details->clear();
  for (std::size_t p = 0; p < policies.size(); ++p) {
    int correct = 0;
    std::vector<BayesianPrediction> preds;
    if (details) preds.reserve(test.x.size());
    for (std::size_t i = 0; i < test.x.size(); ++i) {
      const auto pred = mc_dropout_predict(
          net, test.x[i], T, policies[p],
          mix_seed({seed, 0x5E, static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(i)}));
      if (pred.label == test.y[i]) ++correct;
      if (details) preds.push_back(pred);
    }
    rows.push_back({policies[p], static_cast<double>(correct) / static_cast<double>(test.x.size()),
                    wa_accuracy});
    if (details) details->push_back(std::move(preds));
  }
  return rows;
}

SubsetSuite build_subset_suite(const Dataset& test, int n_per_subset, std::uint64_t seed,
                               MixStage stage) {
  validate_dataset(test);
  if (n_per_subset < 1) throw InvalidArgumentError("build_subset_suite: n_per_subset must be >= 1");

  std::vector<int> class_f;  // class index 1
  std::vector<int> class_m;  // class index 0
  for (std::size_t i = 0; i < test.records.size(); ++i) {
    (test.records[i].label == 1 ? class_f : class_m).push_back(static_cast<int>(i));
  }
  if (static_cast<int>(class_f.size()) < n_per_subset ||
      static_cast<int>(class_m.size()) < n_per_subset) {
    throw InvalidArgumentError("build_subset_suite: need at least " +
                               std::to_string(n_per_subset) + " subjects per class, have " +
                               std::to_string(class_m.size()) + "/" +
                               std::to_string(class_f.size()));
  }

  Rng rng(mix_seed({seed, 0x55}));
  rng.shuffle(class_f);
  rng.shuffle(class_m);
  class_f.resize(static_cast<std::size_t>(n_per_subset));
  class_m.resize(static_cast<std::size_t>(n_per_subset));

  // Model-space vectors for each sampled source.
  const auto features_of = [&](int record) {
    return vectorize(normalize(fisher_z(test.records[static_cast<std::size_t>(record)].matrix)));
  };

  SubsetSuite suite;
  suite.stage = stage;
  const struct {
    const char* name;
    double alpha;
    int eval_label;
  } defs[] = {
      {"F", 1.0, 1}, {"F1", 0.75, 1}, {"FM", 0.5, 1}, {"M1", 0.25, 0}, {"M", 0.0, 0},
  };

  for (const auto& def : defs) {
    SubsetSuite::Subset sub;
    sub.name = def.name;
    sub.alpha = def.alpha;
    sub.entries.reserve(static_cast<std::size_t>(n_per_subset));

    if (def.alpha == 1.0 || def.alpha == 0.0) {
      const auto& source = def.alpha == 1.0 ? class_f : class_m;
      for (int rec : source) {
        SubsetSuite::Entry e;
        e.x = features_of(rec);
        e.eval_label = def.eval_label;
        (def.alpha == 1.0 ? e.source_f : e.source_m) = rec;
        sub.entries.push_back(std::move(e));
      }
    } else {
      // Fresh random matching of the same sources for each mixed subset.
      std::vector<int> matched_m = class_m;
      rng.shuffle(matched_m);
      for (int i = 0; i < n_per_subset; ++i) {
        const int rec_f = class_f[static_cast<std::size_t>(i)];
        const int rec_m = matched_m[static_cast<std::size_t>(i)];
        SubsetSuite::Entry e;
        e.source_f = rec_f;
        e.source_m = rec_m;
        e.eval_label = def.eval_label;
        if (stage == MixStage::Normalized) {
          e.x = mix(features_of(rec_f), features_of(rec_m), def.alpha);
        } else {
          const ConnectivityMatrix mixed =
              mix(test.records[static_cast<std::size_t>(rec_f)].matrix,
                  test.records[static_cast<std::size_t>(rec_m)].matrix, def.alpha);
          e.x = vectorize(normalize(fisher_z(mixed)));
        }
        sub.entries.push_back(std::move(e));
      }
    }
    suite.subsets.push_back(std::move(sub));
  }
  return suite;
}

std::vector<UncertaintyRow> uncertainty_sweep(const Network& net, const SubsetSuite& suite, int T,
                                              const DropoutPolicy& policy, std::uint64_t seed,
                                              std::vector<std::vector<BayesianPrediction>>* details) {
  std::vector<UncertaintyRow> rows;
  if (details) details->clear();
  for (std::size_t s = 0; s < suite.subsets.size(); ++s) {
    const auto& sub = suite.subsets[s];
    if (sub.entries.empty()) throw InvalidArgumentError("uncertainty_sweep: empty subset");
    int correct = 0;
    double uncertainty_sum = 0.0;
    std::vector<BayesianPrediction> preds;
    if (details) preds.reserve(sub.entries.size());
    for (std::size_t i = 0; i < sub.entries.size(); ++i) {
      const auto pred = mc_dropout_predict(
          net, sub.entries[i].x, T, policy,
          mix_seed({seed, 0x8D, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(i)}));
      if (pred.label == sub.entries[i].eval_label) ++correct;
      uncertainty_sum += pred.uncertainty;
      if (details) preds.push_back(pred);
    }
    rows.push_back({sub.name,
                    static_cast<double>(correct) / static_cast<double>(sub.entries.size()),
                    uncertainty_sum / static_cast<double>(sub.entries.size())});
    if (details) details->push_back(std::move(preds));
  }
  return rows;
}

}  // namespace connlab

#include "connlab/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "connlab/errors.hpp"
#include "connlab/io.hpp"

namespace connlab {

RankedFeatures rank_features(const Network& net) {
  if (net.spec.n_classes != 2) {
    throw InvalidArgumentError("rank_features: only two-class networks are supported");
  }
  const Matrix& readout = net.weights.back();
  RankedFeatures out;
  for (std::size_t j = 0; j < readout.cols(); ++j) {
    RankedFeature f;
    f.neuron_index = static_cast<int>(j);
    f.diff = readout(0, j) - readout(1, j);
    f.magnitude = std::abs(f.diff);
    f.assigned_class = f.diff >= 0.0 ? 0 : 1;
    (f.assigned_class == 0 ? out.class0 : out.class1).push_back(f);
  }
  const auto by_importance = [](const RankedFeature& a, const RankedFeature& b) {
    if (a.magnitude != b.magnitude) return a.magnitude > b.magnitude;
    return a.neuron_index < b.neuron_index;
  };
  std::sort(out.class0.begin(), out.class0.end(), by_importance);
  std::sort(out.class1.begin(), out.class1.end(), by_importance);
  for (std::size_t r = 0; r < out.class0.size(); ++r) out.class0[r].rank_within_class = static_cast<int>(r) + 1;
  for (std::size_t r = 0; r < out.class1.size(); ++r) out.class1[r].rank_within_class = static_cast<int>(r) + 1;
  return out;
}

std::string BackProjectionPolicy::describe() const {
  switch (kind) {
    case Kind::All:
      return "all";
    case Kind::MagnitudeThreshold:
      return "threshold:" + format_double(threshold);
    case Kind::TopK:
      return "topk:" + std::to_string(k);
  }
  return "all";
}

namespace {

// Indices of the incoming weights kept by the policy for one expansion row.
std::vector<std::size_t> select_row(const BackProjectionPolicy& policy, const double* row,
                                    std::size_t n) {
  std::vector<std::size_t> idx;
  switch (policy.kind) {
    case BackProjectionPolicy::Kind::All:
      idx.resize(n);
      for (std::size_t j = 0; j < n; ++j) idx[j] = j;
      break;
    case BackProjectionPolicy::Kind::MagnitudeThreshold:
      for (std::size_t j = 0; j < n; ++j) {
        if (std::abs(row[j]) >= policy.threshold) idx.push_back(j);
      }
      break;
    case BackProjectionPolicy::Kind::TopK: {
      if (policy.k <= 0) break;
      if (static_cast<std::size_t>(policy.k) >= n) {
        idx.resize(n);
        for (std::size_t j = 0; j < n; ++j) idx[j] = j;
        break;
      }
      idx.resize(n);
      for (std::size_t j = 0; j < n; ++j) idx[j] = j;
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const double ma = std::abs(row[a]);
        const double mb = std::abs(row[b]);
        if (ma != mb) return ma > mb;
        return a < b;
      });
      idx.resize(static_cast<std::size_t>(policy.k));
      std::sort(idx.begin(), idx.end());
      break;
    }
  }
  return idx;
}

}  // namespace

InputPattern back_project(const Network& net, int layer, int neuron,
                          const BackProjectionPolicy& policy) {
  const int n_hidden = net.spec.n_hidden();
  if (layer < 1 || layer > n_hidden) {
    throw InvalidArgumentError("back_project: layer " + std::to_string(layer) +
                               " out of range [1," + std::to_string(n_hidden) + "]");
  }
  const int layer_size = net.spec.hidden_sizes[static_cast<std::size_t>(layer - 1)];
  if (neuron < 0 || neuron >= layer_size) {
    throw InvalidArgumentError("back_project: neuron " + std::to_string(neuron) +
                               " out of range for layer of size " + std::to_string(layer_size));
  }

  InputPattern out;
  out.source_layer = layer;
  out.source_neuron = neuron;
  out.policy = policy;

  // Coefficients over the neurons of the level currently being expanded.
  // Level l (2..layer) contributes via the policy-restricted rows of
  // W^{l,l-1}; level-1 features are whole rows of W^{1,0}.
  std::vector<double> coeff(static_cast<std::size_t>(layer_size), 0.0);
  coeff[static_cast<std::size_t>(neuron)] = 1.0;

  for (int l = layer; l >= 2; --l) {
    const Matrix& w = net.weights[static_cast<std::size_t>(l - 1)];  // level l -> l-1
    std::vector<double> next(w.cols(), 0.0);
    for (std::size_t i = 0; i < coeff.size(); ++i) {
      const double c = coeff[i];
      if (c == 0.0) continue;
      const double* row = w.row(i);
      const auto kept = select_row(policy, row, w.cols());
      if (kept.empty()) {
        throw InvalidArgumentError("back_project: threshold eliminates all weights at layer " +
                                   std::to_string(l) + ", neuron " + std::to_string(i));
      }
      for (std::size_t j : kept) next[j] += c * row[j];
    }
    coeff = std::move(next);
  }

  const Matrix& first = net.weights.front();  // rows are the input-level kernels
  out.vector.assign(first.cols(), 0.0);
  for (std::size_t i = 0; i < coeff.size(); ++i) {
    const double c = coeff[i];
    if (c == 0.0) continue;
    const double* row = first.row(i);
    for (std::size_t j = 0; j < first.cols(); ++j) out.vector[j] += c * row[j];
  }
  return out;
}

ConnectivityMatrix InputPattern::matrix_view() const {
  const int n = nodes_from_input_dim(static_cast<int>(vector.size()));
  return devectorize(vector, n);
}

namespace {

// Union of the top-k neurons of each ranked list; k == kAllPairs keeps all.
std::unordered_set<int> keep_set_for_pairs(const RankedFeatures& ranked, int k_pairs) {
  std::unordered_set<int> keep;
  const auto take = [&](const std::vector<RankedFeature>& list, int k) {
    const auto limit = std::min<std::size_t>(list.size(), static_cast<std::size_t>(k));
    if (limit < static_cast<std::size_t>(k)) {
      log_note_once("truncated_predict: class list has only " + std::to_string(list.size()) +
               " features, requested " + std::to_string(k));
    }
    for (std::size_t r = 0; r < limit; ++r) keep.insert(list[r].neuron_index);
  };
  take(ranked.class0, k_pairs);
  take(ranked.class1, k_pairs);
  return keep;
}

Prediction predict_with_keep_set(const Network& net, std::span<const double> x,
                                 const std::unordered_set<int>& keep) {
  Activations act = forward(net, x);
  auto& last = act.hidden.back();
  for (std::size_t j = 0; j < last.size(); ++j) {
    if (!keep.contains(static_cast<int>(j))) last[j] = 0.0;
  }
  std::vector<double> scores(net.spec.n_classes);
  const Matrix& readout = net.weights.back();
  for (std::size_t i = 0; i < readout.rows(); ++i) {
    const double* row = readout.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < readout.cols(); ++j) acc += row[j] * last[j];
    scores[i] = acc + net.biases.back()[i];
  }
  Prediction p;
  p.probs = softmax(scores);
  p.label = 0;
  for (std::size_t c = 1; c < p.probs.size(); ++c) {
    if (p.probs[c] > p.probs[static_cast<std::size_t>(p.label)]) p.label = static_cast<int>(c);
  }
  return p;
}

}  // namespace

Prediction truncated_predict(const Network& net, std::span<const double> x, int k_pairs) {
  if (k_pairs == kAllPairs) {
    const RankedFeatures ranked = rank_features(net);
    std::unordered_set<int> keep;
    for (const auto& f : ranked.class0) keep.insert(f.neuron_index);
    for (const auto& f : ranked.class1) keep.insert(f.neuron_index);
    return predict_with_keep_set(net, x, keep);
  }
  if (k_pairs < 1) throw InvalidArgumentError("truncated_predict: k_pairs must be >= 1 or all");
  return predict_with_keep_set(net, x, keep_set_for_pairs(rank_features(net), k_pairs));
}

double pair_loss(const Network& net, const std::vector<std::vector<double>>& xs,
                 const std::vector<int>& ys, int rank) {
  if (rank < 1) throw InvalidArgumentError("pair_loss: rank must be >= 1");
  if (xs.empty() || xs.size() != ys.size()) {
    throw InvalidArgumentError("pair_loss: bad dataset");
  }
  const RankedFeatures ranked = rank_features(net);
  if (static_cast<std::size_t>(rank) > ranked.class0.size() ||
      static_cast<std::size_t>(rank) > ranked.class1.size()) {
    throw InvalidArgumentError("pair_loss: rank " + std::to_string(rank) +
                               " exceeds a class list (class0 has " +
                               std::to_string(ranked.class0.size()) + ", class1 has " +
                               std::to_string(ranked.class1.size()) + ")");
  }
  std::unordered_set<int> keep{ranked.class0[static_cast<std::size_t>(rank - 1)].neuron_index,
                               ranked.class1[static_cast<std::size_t>(rank - 1)].neuron_index};
  double sum = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Prediction p = predict_with_keep_set(net, xs[i], keep);
    sum += guarded_nll(p.probs[static_cast<std::size_t>(ys[i])]);
  }
  return sum / static_cast<double>(xs.size());
}

std::vector<double> feature_correlation(std::span<const InputPattern> patterns, bool sign_align) {
  if (patterns.size() < 2) {
    throw InvalidArgumentError("feature_correlation: need at least two patterns");
  }
  const std::size_t dim = patterns[0].vector.size();
  for (const auto& p : patterns) {
    if (p.vector.size() != dim) {
      throw InvalidArgumentError("feature_correlation: pattern length mismatch");
    }
  }

  const std::size_t n = patterns.size();
  std::vector<std::vector<double>> oriented(n);
  std::vector<double> mean(n, 0.0);
  std::vector<double> sd(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    oriented[i] = patterns[i].vector;
    if (sign_align && patterns[i].source_diff < 0.0) {
      for (double& v : oriented[i]) v = -v;
    }
    for (double v : oriented[i]) mean[i] += v;
    mean[i] /= static_cast<double>(dim);
    for (double v : oriented[i]) sd[i] += (v - mean[i]) * (v - mean[i]);
    sd[i] = std::sqrt(sd[i] / static_cast<double>(dim));
  }

  std::vector<double> out;
  out.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (sd[i] == 0.0 || sd[j] == 0.0) {
        out.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      double cov = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        cov += (oriented[i][k] - mean[i]) * (oriented[j][k] - mean[j]);
      }
      cov /= static_cast<double>(dim);
      out.push_back(cov / (sd[i] * sd[j]));
    }
  }
  return out;
}

}  // namespace connlab

#include "connlab/baselines.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "connlab/errors.hpp"
#include "connlab/io.hpp"
#include "connlab/rng.hpp"

namespace connlab {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void check_data(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys) {
  if (xs.empty() || xs.size() != ys.size()) {
    throw InvalidArgumentError("svm: bad dataset");
  }
  for (int y : ys) {
    if (y != 0 && y != 1) throw InvalidArgumentError("svm: labels must be 0 or 1");
  }
}

}  // namespace

SvmTrainResult train_linear_svm(const std::vector<std::vector<double>>& xs,
                                const std::vector<int>& ys, const SvmTrainConfig& cfg) {
  check_data(xs, ys);
  if (cfg.lambda <= 0.0) throw InvalidArgumentError("svm: lambda must be positive");
  if (cfg.epochs < 1) throw InvalidArgumentError("svm: epochs must be >= 1");

  const std::size_t n = xs.size();
  const std::size_t dim = xs[0].size();
  for (const auto& x : xs) {
    if (x.size() != dim) throw InvalidArgumentError("svm: inconsistent feature length");
  }

  Rng rng(mix_seed({cfg.seed, 0x7A}));
  std::vector<double> w(dim, 0.0);
  double b = 0.0;
  std::vector<double> w_avg(dim, 0.0);
  double b_avg = 0.0;

  SvmTrainResult result;
  result.model.lambda = cfg.lambda;
  std::uint64_t t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t step = 0; step < n; ++step) {
      ++t;
      const auto i = static_cast<std::size_t>(rng.uniform_int(n));
      const double y = ys[i] == 1 ? 1.0 : -1.0;
      const double eta = 1.0 / (cfg.lambda * static_cast<double>(t));
      const double margin = y * (dot(w, xs[i]) + b);

      // w <- (1 - eta*lambda) w  (+ eta*y*x on a margin violation)
      const double shrink = 1.0 - eta * cfg.lambda;
      for (double& v : w) v *= shrink;
      if (margin < 1.0) {
        const auto& x = xs[i];
        for (std::size_t k = 0; k < dim; ++k) w[k] += eta * y * x[k];
        b += eta * y;
      }

      const double inv_t = 1.0 / static_cast<double>(t);
      for (std::size_t k = 0; k < dim; ++k) w_avg[k] += (w[k] - w_avg[k]) * inv_t;
      b_avg += (b - b_avg) * inv_t;
    }

    for (double v : w_avg) {
      if (!std::isfinite(v)) {
        throw DivergedTrainingError(epoch, "svm: non-finite weights at epoch " +
                                               std::to_string(epoch));
      }
    }
    LinearModel snapshot{w_avg, b_avg, cfg.lambda};
    result.objective_trace.push_back(hinge_objective(snapshot, xs, ys));
  }

  result.model.w = std::move(w_avg);
  result.model.b = b_avg;
  return result;
}

int predict_linear(const LinearModel& model, std::span<const double> x) {
  if (x.size() != model.w.size()) {
    throw InvalidArgumentError("predict_linear: input has length " + std::to_string(x.size()) +
                               ", expected " + std::to_string(model.w.size()));
  }
  return dot(model.w, x) + model.b > 0.0 ? 1 : 0;
}

double hinge_objective(const LinearModel& model, const std::vector<std::vector<double>>& xs,
                       const std::vector<int>& ys) {
  check_data(xs, ys);
  double hinge = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double y = ys[i] == 1 ? 1.0 : -1.0;
    hinge += std::max(0.0, 1.0 - y * (dot(model.w, xs[i]) + model.b));
  }
  hinge /= static_cast<double>(xs.size());
  double norm_sq = 0.0;
  for (double v : model.w) norm_sq += v * v;
  return 0.5 * model.lambda * norm_sq + hinge;
}

namespace {
constexpr int kLinearFormatVersion = 1;
constexpr const char* kLinearFormatName = "connlab-linear-svm";
}  // namespace

std::string linear_model_to_json(const LinearModel& model) {
  nlohmann::json j{{"format", kLinearFormatName},
                   {"version", kLinearFormatVersion},
                   {"input_dim", model.w.size()},
                   {"lambda", model.lambda},
                   {"w", model.w},
                   {"b", model.b}};
  return j.dump(2) + "\n";
}

LinearModel linear_model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("linear model: JSON parse error: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kLinearFormatName) {
      throw FormatError("linear model: unrecognized format field");
    }
    if (j.at("version").get<int>() != kLinearFormatVersion) {
      throw FormatError("linear model: unsupported version");
    }
    LinearModel model;
    model.w = j.at("w").get<std::vector<double>>();
    model.b = j.at("b").get<double>();
    model.lambda = j.at("lambda").get<double>();
    if (model.w.size() != j.at("input_dim").get<std::size_t>()) {
      throw FormatError("linear model: input_dim does not match weight vector");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("linear model: malformed document: ") + e.what());
  }
}

void save_linear_model(const LinearModel& model, const std::filesystem::path& path) {
  write_text_file(path, linear_model_to_json(model));
}

LinearModel load_linear_model(const std::filesystem::path& path) {
  return linear_model_from_json(read_text_file(path));
}

}  // namespace connlab

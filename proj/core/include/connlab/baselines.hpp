// Linear SVM baseline: primal L2-regularized hinge loss minimized by
// seeded stochastic subgradient descent with step 1/(lambda*t), returning
// the averaged iterate.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace connlab {

struct LinearModel {
  std::vector<double> w;
  double b = 0.0;
  double lambda = 0.0;
};

// Defaults calibrated on the synthetic reference data (standardized
// connectivity features, a few hundred subjects per fold).
struct SvmTrainConfig {
  double lambda = 0.4;
  int epochs = 50;
  std::uint64_t seed = 0;
};

struct SvmTrainResult {
  LinearModel model;
  // Objective at the averaged iterate, once per epoch.
  std::vector<double> objective_trace;
};

SvmTrainResult train_linear_svm(const std::vector<std::vector<double>>& xs,
                                const std::vector<int>& ys, const SvmTrainConfig& cfg);

// sign(w.x + b): positive -> class 1, zero or negative -> class 0.
int predict_linear(const LinearModel& model, std::span<const double> x);

// lambda/2 ||w||^2 + mean hinge loss.
double hinge_objective(const LinearModel& model, const std::vector<std::vector<double>>& xs,
                       const std::vector<int>& ys);

void save_linear_model(const LinearModel& model, const std::filesystem::path& path);
LinearModel load_linear_model(const std::filesystem::path& path);
std::string linear_model_to_json(const LinearModel& model);
LinearModel linear_model_from_json(const std::string& text);

}  // namespace connlab

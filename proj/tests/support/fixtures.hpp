// Frozen synthetic fixtures shared by the integration and acceptance suites.
#pragma once

#include <cstdint>

#include "connlab/connectivity.hpp"
#include "connlab/network.hpp"

namespace fixtures {

inline constexpr std::uint64_t kReferenceSeed = 42;

// 25-node, 500-subject reference fixture; effect size tuned once against
// the trainer so a 1-hidden-layer 20-neuron network clears 0.9 CV accuracy.
inline connlab::SyntheticConfig reference_config() {
  connlab::SyntheticConfig cfg;
  cfg.n_subjects = 500;
  cfg.n_nodes = 25;
  cfg.n_timepoints = 80;
  cfg.class_effect_size = 0.4;
  cfg.n_effect_blocks = 6;
  cfg.noise_sd = 1.0;
  return cfg;
}

inline const connlab::Dataset& reference_dataset() {
  static const connlab::Dataset d =
      connlab::generate_synthetic(reference_config(), kReferenceSeed);
  return d;
}

inline const connlab::FeatureSet& reference_features() {
  static const connlab::FeatureSet f = connlab::prepare_features(reference_dataset());
  return f;
}

// Trainer settings that reach the 0.1 averaged-loss target on the
// reference fixture within the configured iterations.
inline connlab::TrainConfig reference_train_config() {
  connlab::TrainConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.iterations = 300;
  return cfg;
}

// Harder, noisier variant for the feature-repeatability comparison: single
// first-layer kernels must be unstable across runs for the depth ordering
// to be measurable, which needs the full 300-dim input and a weak effect.
inline connlab::SyntheticConfig repeatability_config() {
  connlab::SyntheticConfig cfg;
  cfg.n_subjects = 160;
  cfg.n_nodes = 25;
  cfg.n_timepoints = 40;
  cfg.class_effect_size = 0.3;
  cfg.n_effect_blocks = 8;
  cfg.noise_sd = 1.0;
  return cfg;
}

// Smaller fixture for tests that train many models.
inline connlab::SyntheticConfig mini_config() {
  connlab::SyntheticConfig cfg;
  cfg.n_subjects = 160;
  cfg.n_nodes = 16;
  cfg.n_timepoints = 60;
  cfg.class_effect_size = 0.5;
  cfg.n_effect_blocks = 5;
  cfg.noise_sd = 1.0;
  return cfg;
}

inline const connlab::Dataset& mini_dataset() {
  static const connlab::Dataset d = connlab::generate_synthetic(mini_config(), kReferenceSeed);
  return d;
}

inline connlab::TrainConfig mini_train_config() {
  connlab::TrainConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.iterations = 150;
  return cfg;
}

}  // namespace fixtures

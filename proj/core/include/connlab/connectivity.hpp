// Functional-connectivity data model: per-subject Pearson correlation
// matrices, the Fisher z / per-matrix standardization preprocessing chain,
// upper-triangle vectorization, convex input mixing, a seeded synthetic
// generator, and dataset file I/O.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "connlab/matrix.hpp"

namespace connlab {

// Symmetric matrix of node-pair association values. Raw matrices hold
// Pearson r with unit diagonal; after fisher_z the diagonal is 0.
struct ConnectivityMatrix {
  int n_nodes = 0;
  Matrix values;  // n_nodes x n_nodes

  ConnectivityMatrix() = default;
  explicit ConnectivityMatrix(int nodes)
      : n_nodes(nodes), values(static_cast<std::size_t>(nodes), static_cast<std::size_t>(nodes)) {}

  bool operator==(const ConnectivityMatrix&) const = default;
};

struct SubjectRecord {
  std::string subject_id;
  int label = 0;  // 0 or 1
  ConnectivityMatrix matrix;

  bool operator==(const SubjectRecord&) const = default;
};

struct Dataset {
  std::vector<SubjectRecord> records;
  int n_nodes = 0;
  std::array<std::string, 2> class_names{"0", "1"};

  int input_dim() const { return n_nodes * (n_nodes - 1) / 2; }
  bool operator==(const Dataset&) const = default;
};

// Preprocessed view: one feature vector per subject, ready for a model.
struct FeatureSet {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  std::vector<std::string> ids;
  std::array<std::string, 2> class_names{"0", "1"};
  int n_nodes = 0;
  int input_dim = 0;

  int size() const { return static_cast<int>(x.size()); }
};

// Throws InvalidArgumentError/InvalidInputError when a Dataset invariant is
// violated (mixed node counts, missing class, bad label).
void validate_dataset(const Dataset& d);

// atanh of every off-diagonal entry; |r| is clamped to 1 - 1e-9 first so a
// numerically perfect correlation does not propagate an infinity. The
// diagonal is set to 0 (it never enters the feature vector).
ConnectivityMatrix fisher_z(const ConnectivityMatrix& m);

// Standardizes to zero mean / unit population variance computed over the
// upper-triangle off-diagonal entries only. Expects Fisher-transformed
// input; throws DegenerateInputError when the entries have no variance.
ConnectivityMatrix normalize(const ConnectivityMatrix& m);

// Upper-triangle off-diagonal entries in row-major (i < j) order.
std::vector<double> vectorize(const ConnectivityMatrix& m);

// Inverse of vectorize; the diagonal of the result is 0.
ConnectivityMatrix devectorize(std::span<const double> v, int n_nodes);

// Number of nodes n with n(n-1)/2 == input_dim; throws when input_dim is
// not a valid upper-triangle length.
int nodes_from_input_dim(int input_dim);

// alpha * a + (1 - alpha) * b, alpha in [0, 1].
std::vector<double> mix(std::span<const double> a, std::span<const double> b, double alpha);
ConnectivityMatrix mix(const ConnectivityMatrix& a, const ConnectivityMatrix& b, double alpha);

struct SyntheticConfig {
  int n_subjects = 500;
  int n_nodes = 25;
  int n_timepoints = 80;
  double class_effect_size = 0.4;
  int n_effect_blocks = 6;
  double noise_sd = 1.0;
  std::array<std::string, 2> class_names{"M", "F"};
};

// Draws per-subject latent time series from a class-dependent covariance
// (a shared base plus opposite-sign offsets on randomly chosen node pairs)
// and returns each subject's Pearson correlation matrix. Balanced labels;
// bit-identical output for a fixed seed.
Dataset generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed);

// Manifest CSV with header subject_id,label,matrix_file plus one CSV file
// per matrix. save_dataset also writes a dataset.json sidecar recording
// class-name order and node count so that load(save(d)) == d.
Dataset load_dataset(const std::filesystem::path& manifest_path);
void save_dataset(const Dataset& d, const std::filesystem::path& dir);

// fisher_z + normalize + vectorize for every record.
FeatureSet prepare_features(const Dataset& d);

FeatureSet subset(const FeatureSet& fs, std::span<const int> indices);

}  // namespace connlab

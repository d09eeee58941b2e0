#include "connlab/connectivity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "connlab/errors.hpp"
#include "connlab/io.hpp"
#include "connlab/linalg.hpp"
#include "connlab/rng.hpp"

namespace connlab {

namespace {

constexpr double kClampRadius = 1.0 - 1e-9;

void check_square_symmetric(const ConnectivityMatrix& m, double tol, const std::string& what) {
  if (m.n_nodes <= 0 || m.values.rows() != static_cast<std::size_t>(m.n_nodes) ||
      m.values.cols() != static_cast<std::size_t>(m.n_nodes)) {
    throw InvalidArgumentError(what + ": matrix storage does not match n_nodes");
  }
  for (int i = 0; i < m.n_nodes; ++i) {
    for (int j = i + 1; j < m.n_nodes; ++j) {
      if (std::abs(m.values(i, j) - m.values(j, i)) > tol) {
        throw InvalidInputError(what + ": asymmetric at (" + std::to_string(i) + "," +
                                std::to_string(j) + ")");
      }
    }
  }
}

}  // namespace

void validate_dataset(const Dataset& d) {
  if (d.records.empty()) throw InvalidInputError("dataset: no records");
  bool seen[2] = {false, false};
  for (const auto& rec : d.records) {
    if (rec.label != 0 && rec.label != 1) {
      throw InvalidInputError("dataset: subject '" + rec.subject_id + "' has label " +
                              std::to_string(rec.label) + ", expected 0 or 1");
    }
    seen[rec.label] = true;
    if (rec.matrix.n_nodes != d.n_nodes) {
      throw InvalidInputError("dataset: subject '" + rec.subject_id + "' has " +
                              std::to_string(rec.matrix.n_nodes) + " nodes, expected " +
                              std::to_string(d.n_nodes));
    }
  }
  if (!seen[0] || !seen[1]) throw InvalidInputError("dataset: both classes must be present");
}

ConnectivityMatrix fisher_z(const ConnectivityMatrix& m) {
  check_square_symmetric(m, 1e-12, "fisher_z");
  ConnectivityMatrix out(m.n_nodes);
  for (int i = 0; i < m.n_nodes; ++i) {
    for (int j = 0; j < m.n_nodes; ++j) {
      if (i == j) {
        out.values(i, j) = 0.0;
        continue;
      }
      double r = m.values(i, j);
      if (!std::isfinite(r)) {
        throw InvalidInputError("fisher_z: non-finite entry at (" + std::to_string(i) + "," +
                                std::to_string(j) + ")");
      }
      r = std::clamp(r, -kClampRadius, kClampRadius);
      out.values(i, j) = std::atanh(r);
    }
  }
  return out;
}

ConnectivityMatrix normalize(const ConnectivityMatrix& m) {
  check_square_symmetric(m, 1e-12, "normalize");
  const int n = m.n_nodes;
  const int n_pairs = n * (n - 1) / 2;
  if (n_pairs < 2) throw DegenerateInputError("normalize: fewer than two off-diagonal entries");

  double mean = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) mean += m.values(i, j);
  mean /= n_pairs;

  double var = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double d = m.values(i, j) - mean;
      var += d * d;
    }
  var /= n_pairs;

  if (var <= 1e-20 * (1.0 + mean * mean)) {
    throw DegenerateInputError("normalize: zero variance across off-diagonal entries");
  }

  const double sd = std::sqrt(var);
  ConnectivityMatrix out(n);
  for (int i = 0; i < n; ++i) {
    out.values(i, i) = m.values(i, i);
    for (int j = i + 1; j < n; ++j) {
      const double z = (m.values(i, j) - mean) / sd;
      out.values(i, j) = z;
      out.values(j, i) = z;
    }
  }
  return out;
}

std::vector<double> vectorize(const ConnectivityMatrix& m) {
  check_square_symmetric(m, 1e-12, "vectorize");
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(m.n_nodes) * (m.n_nodes - 1) / 2);
  for (int i = 0; i < m.n_nodes; ++i)
    for (int j = i + 1; j < m.n_nodes; ++j) v.push_back(m.values(i, j));
  return v;
}

ConnectivityMatrix devectorize(std::span<const double> v, int n_nodes) {
  if (static_cast<int>(v.size()) != n_nodes * (n_nodes - 1) / 2) {
    throw InvalidArgumentError("devectorize: vector length " + std::to_string(v.size()) +
                               " does not match " + std::to_string(n_nodes) + " nodes");
  }
  ConnectivityMatrix out(n_nodes);
  std::size_t k = 0;
  for (int i = 0; i < n_nodes; ++i) {
    out.values(i, i) = 0.0;
    for (int j = i + 1; j < n_nodes; ++j, ++k) {
      out.values(i, j) = v[k];
      out.values(j, i) = v[k];
    }
  }
  return out;
}

int nodes_from_input_dim(int input_dim) {
  // n(n-1)/2 = d  =>  n = (1 + sqrt(1 + 8d)) / 2
  const double root = (1.0 + std::sqrt(1.0 + 8.0 * static_cast<double>(input_dim))) / 2.0;
  const int n = static_cast<int>(std::lround(root));
  if (n < 2 || n * (n - 1) / 2 != input_dim) {
    throw InvalidArgumentError("input_dim " + std::to_string(input_dim) +
                               " is not an upper-triangle length");
  }
  return n;
}

std::vector<double> mix(std::span<const double> a, std::span<const double> b, double alpha) {
  if (a.size() != b.size()) throw InvalidArgumentError("mix: length mismatch");
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw InvalidArgumentError("mix: alpha must be in [0,1], got " + format_double(alpha));
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = alpha * a[i] + (1.0 - alpha) * b[i];
  return out;
}

ConnectivityMatrix mix(const ConnectivityMatrix& a, const ConnectivityMatrix& b, double alpha) {
  if (a.n_nodes != b.n_nodes) throw InvalidArgumentError("mix: node count mismatch");
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw InvalidArgumentError("mix: alpha must be in [0,1], got " + format_double(alpha));
  }
  ConnectivityMatrix out(a.n_nodes);
  for (std::size_t k = 0; k < out.values.data().size(); ++k) {
    out.values.data()[k] = alpha * a.values.data()[k] + (1.0 - alpha) * b.values.data()[k];
  }
  return out;
}

namespace {

// Pearson correlation matrix of a (timepoints x nodes) series.
ConnectivityMatrix pearson_matrix(const Matrix& ts) {
  const std::size_t t = ts.rows();
  const std::size_t n = ts.cols();
  std::vector<double> mean(n, 0.0);
  for (std::size_t k = 0; k < t; ++k)
    for (std::size_t j = 0; j < n; ++j) mean[j] += ts(k, j);
  for (std::size_t j = 0; j < n; ++j) mean[j] /= static_cast<double>(t);

  std::vector<double> sd(n, 0.0);
  for (std::size_t k = 0; k < t; ++k)
    for (std::size_t j = 0; j < n; ++j) {
      const double d = ts(k, j) - mean[j];
      sd[j] += d * d;
    }
  for (std::size_t j = 0; j < n; ++j) {
    if (sd[j] <= 0.0) {
      throw DegenerateInputError("pearson: node " + std::to_string(j) + " has zero variance");
    }
    sd[j] = std::sqrt(sd[j]);
  }

  ConnectivityMatrix out(static_cast<int>(n));
  for (std::size_t i = 0; i < n; ++i) {
    out.values(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double cov = 0.0;
      for (std::size_t k = 0; k < t; ++k) cov += (ts(k, i) - mean[i]) * (ts(k, j) - mean[j]);
      const double r = std::clamp(cov / (sd[i] * sd[j]), -1.0, 1.0);
      out.values(i, j) = r;
      out.values(j, i) = r;
    }
  }
  return out;
}

void validate_synthetic_config(const SyntheticConfig& cfg) {
  if (cfg.n_subjects < 4 || cfg.n_subjects % 2 != 0) {
    throw InvalidArgumentError("generate_synthetic: n_subjects must be even and >= 4");
  }
  if (cfg.n_nodes < 3) throw InvalidArgumentError("generate_synthetic: n_nodes must be >= 3");
  if (cfg.n_timepoints < 4) {
    throw InvalidArgumentError("generate_synthetic: n_timepoints must be >= 4");
  }
  if (cfg.class_effect_size < 0.0 || cfg.noise_sd < 0.0) {
    throw InvalidArgumentError("generate_synthetic: effect size and noise must be non-negative");
  }
  const int max_pairs = cfg.n_nodes * (cfg.n_nodes - 1) / 2;
  if (cfg.n_effect_blocks < 0 || cfg.n_effect_blocks > max_pairs) {
    throw InvalidArgumentError("generate_synthetic: n_effect_blocks out of range");
  }
  if (cfg.n_timepoints <= cfg.n_nodes) {
    log_note("generate_synthetic: n_timepoints <= n_nodes; correlation estimates will be noisy");
  }
}

// Unit-diagonal rescaling, keeps the matrix symmetric positive definite.
void rescale_to_unit_diagonal(Matrix& sigma) {
  const std::size_t n = sigma.rows();
  std::vector<double> inv_sd(n);
  for (std::size_t i = 0; i < n; ++i) inv_sd[i] = 1.0 / std::sqrt(sigma(i, i));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sigma(i, j) *= inv_sd[i] * inv_sd[j];
}

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  validate_synthetic_config(cfg);
  Rng rng(mix_seed({seed, 0xC0}));
  const int n = cfg.n_nodes;

  // Shared base covariance from a random low-rank factor plus a ridge.
  const int k_latent = std::max(2, n / 3);
  Matrix factor(n, k_latent);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k_latent; ++j)
      factor(i, j) = rng.normal() / std::sqrt(static_cast<double>(k_latent));
  Matrix base(n, n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      double acc = 0.0;
      for (int k = 0; k < k_latent; ++k) acc += factor(i, k) * factor(j, k);
      base(i, j) = acc;
      base(j, i) = acc;
    }
  }
  for (int i = 0; i < n; ++i) base(i, i) += 0.5;
  rescale_to_unit_diagonal(base);

  // Class-discriminative node pairs: class 0 gets -effect/2, class 1 +effect/2.
  std::vector<int> pair_ids(static_cast<std::size_t>(n * (n - 1) / 2));
  for (std::size_t i = 0; i < pair_ids.size(); ++i) pair_ids[i] = static_cast<int>(i);
  rng.shuffle(pair_ids);
  pair_ids.resize(static_cast<std::size_t>(cfg.n_effect_blocks));

  std::array<Matrix, 2> chol;
  for (int cls = 0; cls < 2; ++cls) {
    Matrix sigma = base;
    const double offset = (cls == 0 ? -0.5 : 0.5) * cfg.class_effect_size;
    for (int pid : pair_ids) {
      // pair id -> (i, j), i < j, row-major over the upper triangle
      int i = 0;
      int remaining = pid;
      while (remaining >= n - 1 - i) {
        remaining -= n - 1 - i;
        ++i;
      }
      const int j = i + 1 + remaining;
      sigma(i, j) += offset;
      sigma(j, i) += offset;
    }
    const int clipped = clip_to_positive_definite(sigma, 1e-6);
    if (clipped > 0) {
      log_note("generate_synthetic: clipped " + std::to_string(clipped) +
               " eigenvalues to keep the class-" + std::to_string(cls) +
               " covariance positive definite");
      rescale_to_unit_diagonal(sigma);
    }
    chol[cls] = cholesky_lower(sigma);
  }

  Dataset out;
  out.n_nodes = n;
  out.class_names = cfg.class_names;
  out.records.reserve(static_cast<std::size_t>(cfg.n_subjects));

  std::vector<double> latent(static_cast<std::size_t>(n));
  for (int s = 0; s < cfg.n_subjects; ++s) {
    const int label = s < cfg.n_subjects / 2 ? 0 : 1;
    const Matrix& l = chol[label];
    Matrix ts(static_cast<std::size_t>(cfg.n_timepoints), static_cast<std::size_t>(n));
    for (int t = 0; t < cfg.n_timepoints; ++t) {
      for (int j = 0; j < n; ++j) latent[static_cast<std::size_t>(j)] = rng.normal();
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        const double* lrow = l.row(static_cast<std::size_t>(i));
        for (int j = 0; j <= i; ++j) acc += lrow[j] * latent[static_cast<std::size_t>(j)];
        ts(static_cast<std::size_t>(t), static_cast<std::size_t>(i)) =
            acc + cfg.noise_sd * rng.normal();
      }
    }
    SubjectRecord rec;
    char id[16];
    std::snprintf(id, sizeof(id), "S%04d", s);
    rec.subject_id = id;
    rec.label = label;
    rec.matrix = pearson_matrix(ts);
    out.records.push_back(std::move(rec));
  }

  validate_dataset(out);
  return out;
}

namespace {

ConnectivityMatrix load_matrix_csv(const std::filesystem::path& path) {
  std::vector<std::string> lines;
  try {
    lines = read_lines(path);
  } catch (const IoError&) {
    throw IoError("cannot open matrix file '" + path.string() + "'");
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw IoError(path.string() + ": empty matrix file");

  const int n = static_cast<int>(lines.size());
  ConnectivityMatrix m(n);
  for (int i = 0; i < n; ++i) {
    const auto fields = split_csv_line(lines[static_cast<std::size_t>(i)]);
    if (static_cast<int>(fields.size()) != n) {
      throw IoError(path.string() + ":" + std::to_string(i + 1) + ": expected " +
                    std::to_string(n) + " columns, got " + std::to_string(fields.size()));
    }
    for (int j = 0; j < n; ++j) {
      m.values(i, j) = parse_double(fields[static_cast<std::size_t>(j)],
                                    path.string() + ":" + std::to_string(i + 1));
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (std::abs(m.values(i, j) - m.values(j, i)) > 1e-9) {
        throw IoError(path.string() + ": asymmetric beyond 1e-9 at (" + std::to_string(i) + "," +
                      std::to_string(j) + ")");
      }
    }
  }
  return m;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  const auto dir = manifest_path.parent_path();
  std::vector<std::string> lines = read_lines(manifest_path);
  const std::string manifest_name = manifest_path.string();

  // Optional sidecar fixes class-name order; otherwise labels are mapped in
  // sorted order of their distinct strings.
  bool have_sidecar = false;
  std::array<std::string, 2> class_names;
  const auto sidecar_path = dir / "dataset.json";
  if (std::filesystem::exists(sidecar_path)) {
    try {
      const auto j = nlohmann::json::parse(read_text_file(sidecar_path));
      class_names[0] = j.at("class_names").at(0).get<std::string>();
      class_names[1] = j.at("class_names").at(1).get<std::string>();
      have_sidecar = true;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(sidecar_path.string() + ": " + e.what());
    }
  }

  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw IoError(manifest_name + ": no records");
  {
    const auto header = split_csv_line(lines[0]);
    if (header.size() != 3 || header[0] != "subject_id" || header[1] != "label" ||
        header[2] != "matrix_file") {
      throw IoError(manifest_name + ":1: expected header 'subject_id,label,matrix_file'");
    }
  }
  if (lines.size() == 1) throw IoError(manifest_name + ": no records");

  struct Row {
    std::string id;
    std::string label;
    std::filesystem::path file;
    int line;
  };
  std::vector<Row> rows;
  std::set<std::string> labels_seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto fields = split_csv_line(lines[i]);
    if (fields.size() != 3) {
      throw IoError(manifest_name + ":" + std::to_string(i + 1) + ": expected 3 fields, got " +
                    std::to_string(fields.size()));
    }
    rows.push_back({fields[0], fields[1], dir / fields[2], static_cast<int>(i + 1)});
    labels_seen.insert(fields[1]);
  }
  if (rows.empty()) throw IoError(manifest_name + ": no records");

  if (!have_sidecar) {
    if (labels_seen.size() != 2) {
      throw IoError(manifest_name + ": expected exactly 2 distinct labels, found " +
                    std::to_string(labels_seen.size()));
    }
    auto it = labels_seen.begin();
    class_names[0] = *it++;
    class_names[1] = *it;
  }

  Dataset out;
  out.class_names = class_names;
  for (const auto& row : rows) {
    SubjectRecord rec;
    rec.subject_id = row.id;
    if (row.label == class_names[0]) {
      rec.label = 0;
    } else if (row.label == class_names[1]) {
      rec.label = 1;
    } else {
      throw IoError(manifest_name + ":" + std::to_string(row.line) + ": unknown label '" +
                    row.label + "'");
    }
    try {
      rec.matrix = load_matrix_csv(row.file);
    } catch (const Error& e) {
      throw IoError(manifest_name + ":" + std::to_string(row.line) + ": " + e.what());
    }
    if (out.records.empty()) {
      out.n_nodes = rec.matrix.n_nodes;
    } else if (rec.matrix.n_nodes != out.n_nodes) {
      throw IoError(manifest_name + ":" + std::to_string(row.line) + ": matrix has " +
                    std::to_string(rec.matrix.n_nodes) + " nodes, expected " +
                    std::to_string(out.n_nodes));
    }
    for (int i = 0; i < rec.matrix.n_nodes; ++i) {
      if (std::abs(rec.matrix.values(i, i) - 1.0) > 1e-9) {
        throw IoError(manifest_name + ":" + std::to_string(row.line) +
                      ": diagonal entry " + std::to_string(i) + " is not 1 (raw matrices only)");
      }
    }
    out.records.push_back(std::move(rec));
  }

  validate_dataset(out);
  return out;
}

void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  validate_dataset(d);
  std::filesystem::create_directories(dir / "matrices");

  std::string manifest = "subject_id,label,matrix_file\n";
  for (const auto& rec : d.records) {
    const std::string rel = "matrices/" + rec.subject_id + ".csv";
    manifest += rec.subject_id + "," + d.class_names[static_cast<std::size_t>(rec.label)] + "," +
                rel + "\n";

    std::string body;
    body.reserve(static_cast<std::size_t>(d.n_nodes) * d.n_nodes * 20);
    for (int i = 0; i < d.n_nodes; ++i) {
      for (int j = 0; j < d.n_nodes; ++j) {
        if (j) body += ',';
        body += format_double(rec.matrix.values(i, j));
      }
      body += '\n';
    }
    write_text_file(dir / rel, body);
  }
  write_text_file(dir / "manifest.csv", manifest);

  nlohmann::json sidecar{
      {"format", "connlab-dataset"},
      {"version", 1},
      {"n_nodes", d.n_nodes},
      {"n_subjects", d.records.size()},
      {"class_names", {d.class_names[0], d.class_names[1]}},
  };
  write_text_file(dir / "dataset.json", sidecar.dump(2) + "\n");
}

FeatureSet prepare_features(const Dataset& d) {
  validate_dataset(d);
  FeatureSet fs;
  fs.class_names = d.class_names;
  fs.n_nodes = d.n_nodes;
  fs.input_dim = d.input_dim();
  fs.x.reserve(d.records.size());
  fs.y.reserve(d.records.size());
  fs.ids.reserve(d.records.size());
  for (const auto& rec : d.records) {
    fs.x.push_back(vectorize(normalize(fisher_z(rec.matrix))));
    fs.y.push_back(rec.label);
    fs.ids.push_back(rec.subject_id);
  }
  return fs;
}

FeatureSet subset(const FeatureSet& fs, std::span<const int> indices) {
  FeatureSet out;
  out.class_names = fs.class_names;
  out.n_nodes = fs.n_nodes;
  out.input_dim = fs.input_dim;
  out.x.reserve(indices.size());
  out.y.reserve(indices.size());
  out.ids.reserve(indices.size());
  for (int idx : indices) {
    out.x.push_back(fs.x[static_cast<std::size_t>(idx)]);
    out.y.push_back(fs.y[static_cast<std::size_t>(idx)]);
    out.ids.push_back(fs.ids[static_cast<std::size_t>(idx)]);
  }
  return out;
}

}  // namespace connlab

// Shared CLI plumbing: config-file overlay, run manifests, output helpers.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace connlab::cli {

// JSON config file whose values fill in options the user did not pass on
// the command line (flags win, then environment, then the file).
class ConfigOverlay {
 public:
  void load(const std::filesystem::path& path);
  bool loaded() const { return loaded_; }
  const std::filesystem::path& path() const { return path_; }

  template <typename T>
  void apply(CLI::App* cmd, const std::string& flag, const std::string& key, T& target) const {
    if (!loaded_) return;
    const CLI::Option* opt = cmd->get_option(flag);
    if (opt->count() == 0 && json_.contains(key)) target = json_.at(key).get<T>();
  }

  const nlohmann::json& json() const { return json_; }

 private:
  nlohmann::json json_;
  std::filesystem::path path_;
  bool loaded_ = false;
};

struct InputFingerprint {
  std::string path;
  std::string fnv1a64;
};

// Hash of the manifest plus every matrix file it references, in order.
InputFingerprint fingerprint_dataset(const std::filesystem::path& manifest);
InputFingerprint fingerprint_file(const std::filesystem::path& path);

// Every run writes its resolved configuration, seed, version, and input
// hashes beside its outputs.
void write_run_manifest(const std::filesystem::path& out_dir, const std::string& command,
                        std::uint64_t seed, const nlohmann::json& resolved_config,
                        const std::vector<InputFingerprint>& inputs,
                        const std::vector<std::string>& outputs);

void ensure_out_dir(const std::filesystem::path& out_dir);

// Writes a CSV and, when gnuplot is set, a whitespace-separated .dat twin.
void write_csv_artifact(const std::filesystem::path& out_dir, const std::string& name,
                        const std::string& csv, bool gnuplot);

std::vector<std::string> split_list(const std::string& text);
std::vector<int> parse_int_list(const std::string& text, const std::string& what);

}  // namespace connlab::cli

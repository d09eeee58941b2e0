#include "common.hpp"

#include "connlab/errors.hpp"
#include "connlab/io.hpp"
#include "connlab/version.hpp"

namespace connlab::cli {

void ConfigOverlay::load(const std::filesystem::path& path) {
  try {
    json_ = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!json_.is_object()) throw FormatError(path.string() + ": config must be a JSON object");
  path_ = path;
  loaded_ = true;
}

InputFingerprint fingerprint_file(const std::filesystem::path& path) {
  return {path.string(), to_hex(fnv1a64_file(path))};
}

InputFingerprint fingerprint_dataset(const std::filesystem::path& manifest) {
  std::uint64_t h = fnv1a64_file(manifest);
  const auto dir = manifest.parent_path();
  const auto lines = read_lines(manifest);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto fields = split_csv_line(lines[i]);
    if (fields.size() == 3) h = fnv1a64_file(dir / fields[2], h);
  }
  return {manifest.string(), to_hex(h)};
}

void ensure_out_dir(const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
}

void write_run_manifest(const std::filesystem::path& out_dir, const std::string& command,
                        std::uint64_t seed, const nlohmann::json& resolved_config,
                        const std::vector<InputFingerprint>& inputs,
                        const std::vector<std::string>& outputs) {
  nlohmann::json manifest;
  manifest["tool"] = "connlab";
  manifest["version"] = kVersion;
  manifest["command"] = command;
  manifest["seed"] = seed;
  manifest["config"] = resolved_config;
  nlohmann::json in = nlohmann::json::array();
  for (const auto& f : inputs) in.push_back({{"path", f.path}, {"fnv1a64", f.fnv1a64}});
  manifest["inputs"] = std::move(in);
  manifest["outputs"] = outputs;
  write_text_file(out_dir / "run_manifest.json", manifest.dump(2) + "\n");
}

void write_csv_artifact(const std::filesystem::path& out_dir, const std::string& name,
                        const std::string& csv, bool gnuplot) {
  write_text_file(out_dir / name, csv);
  if (!gnuplot) return;
  std::string dat;
  dat.reserve(csv.size() + 2);
  bool first_line = true;
  for (char c : csv) {
    if (first_line && dat.empty()) dat += "# ";
    if (c == ',') {
      dat += ' ';
    } else {
      dat += c;
    }
    if (c == '\n') first_line = false;
  }
  std::string stem = name;
  if (const auto dot = stem.rfind('.'); dot != std::string::npos) stem.resize(dot);
  write_text_file(out_dir / (stem + ".dat"), dat);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  for (const auto& token : split_list(text)) {
    try {
      out.push_back(std::stoi(token));
    } catch (const std::exception&) {
      throw InvalidArgumentError(what + ": cannot parse '" + token + "'");
    }
  }
  if (out.empty()) throw InvalidArgumentError(what + ": empty list");
  return out;
}

}  // namespace connlab::cli

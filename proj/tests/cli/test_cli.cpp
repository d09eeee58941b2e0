// End-to-end tests that drive the built connlab binary. The path to the
// binary comes from the CONNLAB_CLI environment variable (set by ctest).
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "connlab/io.hpp"
#include "support/tempdir.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

const std::string& cli_path() {
  static const std::string path = [] {
    const char* env = std::getenv("CONNLAB_CLI");
    return std::string(env ? env : "");
  }();
  return path;
}

CliResult run_cli(const std::string& args) {
  REQUIRE_MESSAGE(!cli_path().empty(), "CONNLAB_CLI must point at the built binary");
  testsupport::TempDir io("cli_io");
  const fs::path out_file = io.path / "out.txt";
  const fs::path err_file = io.path / "err.txt";
  const std::string command =
      cli_path() + " " + args + " >" + out_file.string() + " 2>" + err_file.string();
  const int raw = std::system(command.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = connlab::read_text_file(out_file);
  r.err = connlab::read_text_file(err_file);
  return r;
}

std::string small_gen_args(const fs::path& out, int seed = 7) {
  return "gen-data --out " + out.string() +
         " --nodes 8 --subjects 16 --timepoints 40 --effect 0.6 --effect-blocks 3 --noise 0.8" +
         " --seed " + std::to_string(seed);
}

// Sorted (relative path, content hash) listing of a directory tree.
std::vector<std::pair<std::string, std::uint64_t>> tree_hash(const fs::path& root) {
  std::vector<std::pair<std::string, std::uint64_t>> entries;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    entries.emplace_back(fs::relative(entry.path(), root).string(),
                         connlab::fnv1a64_file(entry.path()));
  }
  std::sort(entries.begin(), entries.end());
  return entries;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& line : connlab::read_lines(path)) {
    if (!line.empty()) rows.push_back(connlab::split_csv_line(line));
  }
  return rows;
}

}  // namespace

TEST_CASE("gen-data twice with the same seed is byte-identical") {
  testsupport::TempDir tmp("cli_gen");
  const fs::path a = tmp.path / "a";
  const fs::path b = tmp.path / "b";
  CHECK(run_cli(small_gen_args(a)).exit_code == 0);
  CHECK(run_cli(small_gen_args(b)).exit_code == 0);

  auto ha = tree_hash(a);
  auto hb = tree_hash(b);
  // run_manifest records the out dir path, which legitimately differs
  std::erase_if(ha, [](const auto& e) { return e.first == "run_manifest.json"; });
  std::erase_if(hb, [](const auto& e) { return e.first == "run_manifest.json"; });
  REQUIRE(!ha.empty());
  CHECK(ha == hb);

  const fs::path c = tmp.path / "c";
  CHECK(run_cli(small_gen_args(c, 8)).exit_code == 0);
  auto hc = tree_hash(c);
  std::erase_if(hc, [](const auto& e) { return e.first == "run_manifest.json"; });
  CHECK(ha != hc);
}

TEST_CASE("usage errors exit with code 2 and runtime failures with 1") {
  const CliResult unknown = run_cli("gen-data --frobnicate 3");
  CHECK(unknown.exit_code == 2);
  CHECK(unknown.err.find("error:") != std::string::npos);

  const CliResult missing = run_cli("train");
  CHECK(missing.exit_code == 2);

  const CliResult no_cmd = run_cli("");
  CHECK(no_cmd.exit_code == 2);

  testsupport::TempDir tmp("cli_err");
  const CliResult bad_path = run_cli("train --data " + (tmp.path / "nope.csv").string() +
                                     " --out " + (tmp.path / "out").string());
  CHECK(bad_path.exit_code == 1);
  CHECK(bad_path.err.rfind("error:", 0) == 0);
  CHECK(bad_path.err.find('\n') == bad_path.err.size() - 1);  // one line

  const CliResult version = run_cli("--version");
  CHECK(version.exit_code == 0);
  CHECK(version.out.find("connlab") != std::string::npos);
}

TEST_CASE("full pipeline: gen-data, train, eval, rank, mcdrop, cv, repeat") {
  testsupport::TempDir tmp("cli_pipeline");
  const fs::path data_dir = tmp.path / "data";
  REQUIRE(run_cli(small_gen_args(data_dir)).exit_code == 0);
  const std::string manifest = (data_dir / "manifest.csv").string();

  const fs::path train_dir = tmp.path / "train";
  const CliResult train = run_cli("train --data " + manifest + " --out " + train_dir.string() +
                                  " --layers 1 --neurons 6 --iterations 120 --seed 3");
  REQUIRE_MESSAGE(train.exit_code == 0, train.err);
  CHECK(fs::exists(train_dir / "model.json"));
  CHECK(fs::exists(train_dir / "loss_trace.csv"));
  CHECK(fs::exists(train_dir / "train_summary.json"));
  CHECK(fs::exists(train_dir / "run_manifest.json"));
  {
    const auto rows = read_csv(train_dir / "loss_trace.csv");
    REQUIRE(rows.size() == 121);
    CHECK(rows[0] == std::vector<std::string>{"iteration", "total_loss"});
  }

  const fs::path eval_dir = tmp.path / "eval";
  const CliResult eval = run_cli("eval --data " + manifest + " --model " +
                                 (train_dir / "model.json").string() + " --out " +
                                 eval_dir.string());
  REQUIRE_MESSAGE(eval.exit_code == 0, eval.err);
  const std::string eval_json = connlab::read_text_file(eval_dir / "eval.json");
  CHECK(eval_json.find("\"accuracy\"") != std::string::npos);
  CHECK(eval_json.find("\"n\": 16") != std::string::npos);

  const fs::path rank_dir = tmp.path / "rank";
  const CliResult rank = run_cli("rank --model " + (train_dir / "model.json").string() +
                                 " --data " + manifest + " --out " + rank_dir.string() +
                                 " --top 1 --ranks 1,2 --pairs 1,2 --gnuplot");
  REQUIRE_MESSAGE(rank.exit_code == 0, rank.err);
  {
    const auto rows = read_csv(rank_dir / "ranked_features.csv");
    REQUIRE(rows.size() == 7);  // header + 6 neurons
    CHECK(rows[0] == std::vector<std::string>{"neuron_index", "diff", "magnitude",
                                              "assigned_class", "rank_within_class"});
    CHECK(fs::exists(rank_dir / "pattern_class0_rank1.csv"));
    CHECK(fs::exists(rank_dir / "pattern_class0_rank1.json"));
    CHECK(fs::exists(rank_dir / "pair_loss.csv"));
    CHECK(fs::exists(rank_dir / "truncated.csv"));
    CHECK(fs::exists(rank_dir / "pair_loss.dat"));  // --gnuplot twin
    const auto trunc = read_csv(rank_dir / "truncated.csv");
    CHECK(trunc.back()[0] == "all");
  }

  const fs::path mc_dir = tmp.path / "mcdrop";
  const CliResult mcdrop = run_cli("mcdrop --model " + (train_dir / "model.json").string() +
                                   " --data " + manifest + " --out " + mc_dir.string() +
                                   " --policy rate:0 --T 50 --subsets 3 --subset-policy rate:0" +
                                   " --seed 5");
  REQUIRE_MESSAGE(mcdrop.exit_code == 0, mcdrop.err);
  {
    const auto rows = read_csv(mc_dir / "dropout_sweep.csv");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == std::vector<std::string>{"policy", "mc_accuracy", "wa_accuracy"});
    CHECK(rows[1][1] == rows[1][2]);  // rate:0 reduces to weight averaging
    const auto sub = read_csv(mc_dir / "subset_uncertainty.csv");
    REQUIRE(sub.size() == 6);
    CHECK(sub[0] == std::vector<std::string>{"subset", "accuracy", "mean_uncertainty"});
    const char* names[] = {"F", "F1", "FM", "M1", "M"};
    for (int i = 0; i < 5; ++i) {
      CHECK(sub[static_cast<std::size_t>(i) + 1][0] == names[i]);
      CHECK(sub[static_cast<std::size_t>(i) + 1][2] == "0");  // rate:0, exactly zero
    }
  }

  const fs::path cv_dir = tmp.path / "cv";
  const CliResult cv = run_cli("cv --data " + manifest + " --out " + cv_dir.string() +
                               " --model dnn --layers 1 --neurons 6 --permutations 2" +
                               " --iterations 60 --jobs 2 --seed 9");
  REQUIRE_MESSAGE(cv.exit_code == 0, cv.err);
  CHECK(fs::exists(cv_dir / "report.json"));
  {
    const auto rows = read_csv(cv_dir / "summary.csv");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == std::vector<std::string>{"layers", "neurons", "scale", "mean_acc",
                                              "std_acc"});
    CHECK(rows[1][0] == "1");
    CHECK(rows[1][2] == "8");
  }

  const fs::path rep_dir = tmp.path / "repeat";
  const CliResult repeat = run_cli("repeat --data " + manifest + " --out " + rep_dir.string() +
                                   " --layers 1 --neurons 4 --permutations 2 --iterations 40" +
                                   " --jobs 2 --seed 4");
  REQUIRE_MESSAGE(repeat.exit_code == 0, repeat.err);
  CHECK(fs::exists(rep_dir / "repeatability.json"));
  {
    const auto rows = read_csv(rep_dir / "correlations.csv");
    CHECK(rows.size() == 1 + 6);  // header + C(4,2)
  }
}

TEST_CASE("cv reports are byte-identical across job counts") {
  testsupport::TempDir tmp("cli_det");
  const fs::path data_dir = tmp.path / "data";
  REQUIRE(run_cli(small_gen_args(data_dir)).exit_code == 0);
  const std::string manifest = (data_dir / "manifest.csv").string();

  const fs::path a = tmp.path / "j1";
  const fs::path b = tmp.path / "j4";
  const std::string base = "cv --data " + manifest + " --model linear-svm --permutations 4" +
                           " --seed 11 --out ";
  REQUIRE(run_cli(base + a.string() + " --jobs 1").exit_code == 0);
  REQUIRE(run_cli(base + b.string() + " --jobs 4").exit_code == 0);
  CHECK(connlab::read_text_file(a / "report.json") ==
        connlab::read_text_file(b / "report.json"));
}

TEST_CASE("sweep mode writes one report per grid cell") {
  testsupport::TempDir tmp("cli_sweep");
  const fs::path data_dir = tmp.path / "data";
  REQUIRE(run_cli(small_gen_args(data_dir)).exit_code == 0);
  const fs::path out = tmp.path / "sweep";
  const CliResult cv = run_cli("cv --data " + (data_dir / "manifest.csv").string() + " --out " +
                               out.string() +
                               " --layers 1,2 --neurons 4,6 --permutations 1 --iterations 30" +
                               " --seed 2");
  REQUIRE_MESSAGE(cv.exit_code == 0, cv.err);
  CHECK(fs::exists(out / "report_L1_N4.json"));
  CHECK(fs::exists(out / "report_L1_N6.json"));
  CHECK(fs::exists(out / "report_L2_N4.json"));
  CHECK(fs::exists(out / "report_L2_N6.json"));
  CHECK(read_csv(out / "summary.csv").size() == 5);
}

TEST_CASE("config files fill in unset flags and explicit flags win") {
  testsupport::TempDir tmp("cli_config");
  connlab::write_text_file(tmp.path / "cfg.json",
                           "{\"nodes\": 6, \"subjects\": 12, \"timepoints\": 30}\n");
  const fs::path out = tmp.path / "out";
  const CliResult r = run_cli("gen-data --out " + out.string() + " --config " +
                              (tmp.path / "cfg.json").string() + " --subjects 8 --seed 1");
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  const std::string sidecar = connlab::read_text_file(out / "dataset.json");
  CHECK(sidecar.find("\"n_nodes\": 6") != std::string::npos);      // from the config file
  CHECK(sidecar.find("\"n_subjects\": 8") != std::string::npos);   // flag wins
}

TEST_CASE("run manifests record the resolved config and input hashes") {
  testsupport::TempDir tmp("cli_manifest");
  const fs::path data_dir = tmp.path / "data";
  REQUIRE(run_cli(small_gen_args(data_dir)).exit_code == 0);
  const fs::path out = tmp.path / "eval";
  const fs::path train_dir = tmp.path / "train";
  REQUIRE(run_cli("train --data " + (data_dir / "manifest.csv").string() + " --out " +
                  train_dir.string() + " --neurons 4 --iterations 20 --seed 6")
              .exit_code == 0);
  REQUIRE(run_cli("eval --data " + (data_dir / "manifest.csv").string() + " --model " +
                  (train_dir / "model.json").string() + " --out " + out.string())
              .exit_code == 0);
  const std::string manifest = connlab::read_text_file(out / "run_manifest.json");
  CHECK(manifest.find("\"command\": \"eval\"") != std::string::npos);
  CHECK(manifest.find("\"fnv1a64\"") != std::string::npos);
  CHECK(manifest.find("\"version\"") != std::string::npos);
  CHECK(manifest.find("eval.json") != std::string::npos);
}

TEST_CASE("CONNLAB_SEED provides the master seed default") {
  testsupport::TempDir tmp("cli_envseed");
  const fs::path a = tmp.path / "a";
  const fs::path b = tmp.path / "b";
  const std::string args = "gen-data --nodes 6 --subjects 8 --timepoints 30 --out ";
  const std::string with_env = "CONNLAB_SEED=21 " + cli_path() + " " + args;
  CHECK(std::system((with_env + a.string() + " >/dev/null 2>&1").c_str()) == 0);
  CHECK(run_cli(args + b.string() + " --seed 21").exit_code == 0);
  CHECK(connlab::fnv1a64_file(a / "matrices" / "S0000.csv") ==
        connlab::fnv1a64_file(b / "matrices" / "S0000.csv"));
}

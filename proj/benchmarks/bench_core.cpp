// Microbenchmarks for the hot paths: preprocessing, forward/backward
// passes, Monte Carlo prediction, and synthetic generation.
#include <benchmark/benchmark.h>

#include "connlab/bayesian.hpp"
#include "connlab/connectivity.hpp"
#include "connlab/network.hpp"
#include "connlab/rng.hpp"

using namespace connlab;

namespace {

ConnectivityMatrix random_correlation(int n, std::uint64_t seed) {
  Rng rng(seed);
  ConnectivityMatrix m(n);
  for (int i = 0; i < n; ++i) {
    m.values(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      const double r = rng.uniform(-0.9, 0.9);
      m.values(i, j) = r;
      m.values(j, i) = r;
    }
  }
  return m;
}

std::vector<double> random_input(int dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(static_cast<std::size_t>(dim));
  for (double& v : x) v = rng.normal();
  return x;
}

void BM_PrepareMatrix(benchmark::State& state) {
  const int nodes = static_cast<int>(state.range(0));
  const ConnectivityMatrix m = random_correlation(nodes, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(vectorize(normalize(fisher_z(m))));
  }
}
BENCHMARK(BM_PrepareMatrix)->Arg(25)->Arg(100);

void BM_Forward(benchmark::State& state) {
  const int neurons = static_cast<int>(state.range(0));
  const NetworkSpec spec = make_spec(300, 1, neurons, 0.2);
  const Network net = init_network(spec, 2);
  const auto x = random_input(300, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward(net, x));
  }
}
BENCHMARK(BM_Forward)->Arg(20)->Arg(100)->Arg(200);

void BM_GradientStep(benchmark::State& state) {
  const NetworkSpec spec = make_spec(300, 1, static_cast<int>(state.range(0)), 0.2);
  const Network net = init_network(spec, 4);
  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
  Rng rng(5);
  for (int i = 0; i < 64; ++i) {
    xs.push_back(random_input(300, 100 + static_cast<std::uint64_t>(i)));
    ys.push_back(static_cast<int>(rng.uniform_int(2)));
  }
  Rng mask_rng(6);
  for (auto _ : state) {
    const DropoutMasks masks = sample_masks(spec, mask_rng);
    benchmark::DoNotOptimize(gradients(net, xs, ys, 1e-6, 1e-4, masks));
  }
}
BENCHMARK(BM_GradientStep)->Arg(20)->Arg(100);

void BM_McDropoutPredict(benchmark::State& state) {
  const NetworkSpec spec = make_spec(300, 3, 20, 0.5);
  const Network net = init_network(spec, 7);
  const auto x = random_input(300, 8);
  const int T = static_cast<int>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        mc_dropout_predict(net, x, T, DropoutPolicy::make_rate(0.5), ++seed));
  }
}
BENCHMARK(BM_McDropoutPredict)->Arg(25)->Arg(100);

void BM_GenerateSynthetic(benchmark::State& state) {
  SyntheticConfig cfg;
  cfg.n_subjects = 50;
  cfg.n_nodes = static_cast<int>(state.range(0));
  cfg.n_timepoints = 80;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_synthetic(cfg, ++seed));
  }
}
BENCHMARK(BM_GenerateSynthetic)->Arg(25);

}  // namespace

BENCHMARK_MAIN();

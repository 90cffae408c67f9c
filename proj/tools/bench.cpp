// Kernel benchmarks: OpenMP-parallel paths against their serial
// references, plus the closed-form evaluator that replaces the direct
// row sums inside the solvers.

#include <benchmark/benchmark.h>

#include <memory>

#include "dopa/channel.hpp"
#include "dopa/mdp_decomposed.hpp"
#include "dopa/mdp_full.hpp"
#include "dopa/simulate.hpp"
#include "dopa/waterfill.hpp"

namespace {

using namespace dopa;

const PhyConfig kPhy;
const double kAlpha = kPhy.alpha();

const EigenSampleCache& bench_cache() {
  static const EigenSampleCache cache = EigenSampleCache::generate(kPhy, 100000, 7);
  return cache;
}

const PhiEvaluator& bench_eval() {
  static const PhiEvaluator eval(bench_cache());
  return eval;
}

ChainParams bench_chain(int buffer) {
  ChainParams c;
  c.tau = 1.0;
  c.gamma = 0.01;
  c.buffer = buffer;
  c.streams = {{1.0, 0.02, 200.0}, {10.0, 0.02, 200.0}};
  return c;
}

WaterfillParams bench_params() {
  WaterfillParams wf;
  wf.marginal = (Eigen::VectorXd(2) << 160.0, 700.0).finished();
  wf.nbar = Eigen::VectorXd::Constant(2, 200.0);
  wf.gamma = 0.01;
  wf.alpha = kAlpha;
  return wf;
}

void BM_CacheGenerate(benchmark::State& state) {
  const Exec exec = state.range(0) ? Exec::Parallel : Exec::Serial;
  for (auto _ : state) {
    benchmark::DoNotOptimize(EigenSampleCache::generate(kPhy, 20000, 7, exec));
  }
  state.SetItemsProcessed(state.iterations() * 20000);
}
BENCHMARK(BM_CacheGenerate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_PhiDirect(benchmark::State& state) {
  const Exec exec = state.range(0) ? Exec::Parallel : Exec::Serial;
  const WaterfillParams wf = bench_params();
  const std::vector<int> ranks = sort_assignment(wf.marginal);
  const EigenSampleCache& cache = bench_cache();
  for (auto _ : state) {
    benchmark::DoNotOptimize(phi_direct(wf, cache, ranks, exec));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(cache.rows()));
}
BENCHMARK(BM_PhiDirect)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_PhiFast(benchmark::State& state) {
  const WaterfillParams wf = bench_params();
  const PhiEvaluator& eval = bench_eval();
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval.phi(wf));
  }
}
BENCHMARK(BM_PhiFast)->Unit(benchmark::kNanosecond);

void BM_BellmanBackup(benchmark::State& state) {
  const Exec exec = state.range(1) ? Exec::Parallel : Exec::Serial;
  const ChainParams chain = bench_chain(static_cast<int>(state.range(0)));
  const StateSpace space(chain.buffer, 2);
  std::vector<double> v(space.count(), 0.0);
  for (std::size_t s = 0; s < v.size(); ++s) v[s] = static_cast<double>(s % 97);
  const PhiEvaluator& eval = bench_eval();
  for (auto _ : state) {
    benchmark::DoNotOptimize(bellman_backup(v, chain, kAlpha, eval, exec));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(space.count()));
}
BENCHMARK(BM_BellmanBackup)->Args({40, 0})->Args({40, 1})->Args({100, 0})->Args({100, 1})
    ->Unit(benchmark::kMicrosecond);

void BM_SolveDecomposed(benchmark::State& state) {
  const ChainParams chain = bench_chain(static_cast<int>(state.range(0)));
  const PhiEvaluator& eval = bench_eval();
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_decomposed(chain, kAlpha, eval));
  }
}
BENCHMARK(BM_SolveDecomposed)->Arg(4)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_SolveRvi(benchmark::State& state) {
  const ChainParams chain = bench_chain(4);
  RviOptions opts;
  opts.tol = 1e-8;
  const PhiEvaluator& eval = bench_eval();
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_rvi(chain, kAlpha, eval, opts));
  }
}
BENCHMARK(BM_SolveRvi)->Unit(benchmark::kMillisecond);

void BM_SimSlots(benchmark::State& state) {
  const ChainParams chain = bench_chain(4);
  const PolicyHandle policy =
      make_decomposed_policy(solve_decomposed(chain, kAlpha, bench_eval()), chain);
  const long slots = 50000;
  std::uint64_t seed = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_sim(policy, chain, kPhy, slots, seed++));
  }
  state.SetItemsProcessed(state.iterations() * slots);
}
BENCHMARK(BM_SimSlots)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

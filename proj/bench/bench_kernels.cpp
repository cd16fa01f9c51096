// Serial reference path against the OpenMP path for each kernel.
// Run with OMP_NUM_THREADS set to compare thread counts.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "refscore/kernels.hpp"
#include "refscore/numeric.hpp"
#include "synthetic.hpp"

using namespace refscore;
using kernels::Exec;

namespace {

// Roughly the size of a large unit of assessment.
const testing::SyntheticData& data() {
  static const auto d = [] {
    testing::SyntheticSpec s;
    s.institutions = 60;
    s.journals = 40;
    s.mean_articles = 100;
    s.seed = 11;
    return testing::make_synthetic(s);
  }();
  return d;
}

kernels::PbData pb_data() {
  const auto& d = data();
  kernels::PbData pb;
  pb.institutions = d.counts.rows();
  pb.journals = d.counts.cols();
  pb.counts = d.counts.counts;
  for (const auto& p : d.profiles) {
    pb.successes.push_back(p.y4);
    pb.envir.push_back(p.envir);
  }
  return pb;
}

std::vector<double> logits() {
  std::vector<double> t;
  for (double p : data().pi4) t.push_back(std::log(p / (1.0 - p)));
  return t;
}

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::parallel : Exec::serial; }

void BM_likelihood_terms(benchmark::State& state) {
  const auto pb = pb_data();
  const auto theta = logits();
  kernels::PbTerms out;
  for (auto _ : state) {
    kernels::pb_likelihood_terms(pb, theta, 0.3, state.range(1) != 0, exec_of(state), out);
    benchmark::DoNotOptimize(out.loglik.data());
  }
}
BENCHMARK(BM_likelihood_terms)->ArgsProduct({{0, 1}, {0, 1}})->ArgNames({"omp", "grad"})->Unit(benchmark::kMicrosecond);

void BM_impute_successes(benchmark::State& state) {
  const auto& d = data();
  std::vector<int> y;
  for (const auto& p : d.profiles) y.push_back(p.y4);
  const auto lo = logits();
  std::vector<double> imputed;
  for (auto _ : state) {
    kernels::impute_successes(d.counts, y, lo, exec_of(state), imputed);
    benchmark::DoNotOptimize(imputed.data());
  }
}
BENCHMARK(BM_impute_successes)->Arg(0)->Arg(1)->ArgName("omp")->Unit(benchmark::kMicrosecond);

void BM_draw_indices(benchmark::State& state) {
  const auto& d = data();
  const std::size_t J = d.counts.cols();
  const std::size_t draws = 1000;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> jitter(0.0, 0.2);
  std::vector<double> d4(draws * J), d34(draws * J);
  for (std::size_t k = 0; k < draws; ++k) {
    for (std::size_t j = 0; j < J; ++j) {
      d4[k * J + j] = num::sigmoid(std::log(d.pi4[j] / (1.0 - d.pi4[j])) + jitter(rng));
      d34[k * J + j] = num::sigmoid(std::log(d.pi34[j] / (1.0 - d.pi34[j])) + jitter(rng));
    }
  }
  std::vector<double> delta, money;
  for (auto _ : state) {
    kernels::draw_indices(d.counts, d.profiles, d4, d34, draws, 1.0, exec_of(state), delta, money);
    benchmark::DoNotOptimize(delta.data());
  }
}
BENCHMARK(BM_draw_indices)->Arg(0)->Arg(1)->ArgName("omp")->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();

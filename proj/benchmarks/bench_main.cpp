#include <benchmark/benchmark.h>

#include "qcomp/completion.hpp"
#include "qcomp/evaluation.hpp"
#include "qcomp/parallel.hpp"
#include "qcomp/planner.hpp"
#include "qcomp/training.hpp"

namespace {

using namespace qcomp;

Eigen::MatrixXd make_sigma(Index p) {
  Eigen::MatrixXd s(p, p);
  for (Index i = 0; i < p; ++i) {
    for (Index j = 0; j < p; ++j) s(i, j) = std::pow(0.7, std::abs(static_cast<double>(i - j)));
  }
  return s;
}

SyntheticData make_data(Index p, std::size_t n) {
  auto spec = SyntheticSpec::with_covariance(make_sigma(p), n, 1);
  spec.missingness.rate = 0.5;
  return generate_synthetic(spec);
}

ModelParams make_params(Index p) {
  ModelParams params = identity_params(AssaySchema(make_data(p, 0).data.schema));
  params.cov = CovarianceFactor::from_covariance(make_sigma(p));
  return params;
}

void BM_LossGradient(benchmark::State& state) {
  const auto p = static_cast<Index>(state.range(0));
  const auto data = make_data(p, 5000).data;
  const auto params = make_params(p);
  set_thread_count(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(loss_gradient(params, data.rows));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}
BENCHMARK(BM_LossGradient)->Arg(4)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_CompleteAll(benchmark::State& state) {
  const auto p = static_cast<Index>(state.range(0));
  const auto data = make_data(p, 5000).data;
  const Completer completer(make_params(p));
  set_thread_count(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(completer.complete_all(data, false));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}
BENCHMARK(BM_CompleteAll)->Arg(4)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_GreedyPlan(benchmark::State& state) {
  const auto p = static_cast<Index>(state.range(0));
  const auto params = make_params(p);
  std::vector<Index> candidates;
  for (Index j = 1; j < p; ++j) candidates.push_back(j);
  for (auto _ : state) {
    benchmark::DoNotOptimize(greedy_plan(params, 0, candidates, {}, 0.0));
  }
}
BENCHMARK(BM_GreedyPlan)->Arg(8)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();

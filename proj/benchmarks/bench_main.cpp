#include <memory>
#include <vector>

#include <benchmark/benchmark.h>

#include "blur/analytic.hpp"
#include "blur/losses.hpp"
#include "blur/rng.hpp"
#include "blur/updaters.hpp"

namespace {

blur::ParamVector random_vector(blur::Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return blur::ParamVector(std::move(v));
}

void BM_BlurDirection(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  blur::Rng rng(1);
  const auto gf = random_vector(rng, n), gr = random_vector(rng, n);
  for (auto _ : state) benchmark::DoNotOptimize(blur::blur_direction(gf, gr, 1.0));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_BlurDirection)->RangeMultiplier(10)->Range(10, 100000);

void BM_WeightedSumDirection(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  blur::Rng rng(2);
  const auto gf = random_vector(rng, n), gr = random_vector(rng, n);
  for (auto _ : state) benchmark::DoNotOptimize(blur::weighted_sum_direction(gf, gr, 1.0));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_WeightedSumDirection)->RangeMultiplier(10)->Range(10, 100000);

void BM_ToyLossGradient(benchmark::State& state) {
  const auto kind = static_cast<blur::LossKind>(state.range(0));
  const blur::ToyLMShape shape{32, 16};
  blur::CorpusParams cp;
  const auto corpus = blur::generate_corpus(cp);
  auto ref = std::make_shared<blur::ReferenceModel>(shape, blur::ToyLM::random(shape, 3, 0.3).params());
  const blur::LossObjective obj({.kind = kind}, shape, blur::sequence_samples(corpus.forget.sequences), ref);
  const auto theta = blur::ToyLM::random(shape, 4, 0.3).params();
  for (auto _ : state) benchmark::DoNotOptimize(obj.evaluate(theta));
  state.SetLabel(blur::to_string(kind));
}
BENCHMARK(BM_ToyLossGradient)
    ->Arg(static_cast<int>(blur::LossKind::cross_entropy_retain))
    ->Arg(static_cast<int>(blur::LossKind::npo_forget))
    ->Arg(static_cast<int>(blur::LossKind::rmu_forget));

void BM_QuadraticPairRun(benchmark::State& state) {
  blur::AnalyticProblemId id;
  id.kind = blur::AnalyticProblemId::Kind::quadratic_pair;
  const auto p = blur::make_problem(id);
  const auto theta0 = blur::ParamVector::zeros(p.dim());
  const auto T = state.range(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        blur::run(p, theta0, blur::UpdateRule::blur(1.0), blur::StepSchedule::constant(2.5e-3), T));
  }
  state.SetItemsProcessed(state.iterations() * T);
}
BENCHMARK(BM_QuadraticPairRun)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

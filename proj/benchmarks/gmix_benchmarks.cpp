#include "gmix/constraints.hpp"
#include "gmix/model.hpp"
#include "gmix/prediction.hpp"
#include "gmix/simulation.hpp"

#include <benchmark/benchmark.h>

using namespace gmix;

namespace {

Scenario scenario(Index categories, int max_age) {
  ScenarioConfig sc;
  sc.grid = AgeGrid(18, max_age);
  std::vector<std::string> cats;
  for (Index k = 0; k < categories; ++k) cats.push_back("c" + std::to_string(k));
  if (categories > 1) sc.features.push_back({FeatureSpec("g", cats), 0.2, 0.0, 1.0});
  return simulate_scenario(sc);
}

Tensor3 random_tensor(Index slices, Index ages, Rng& rng) {
  Tensor3 t(slices, ages);
  for (double& v : t.values()) v = 2 * uniform01(rng) - 1;
  return t;
}

}  // namespace

// Args: categories of the single feature, mode (0 complete, 1 partial).
void BM_LogJointAndGrad(benchmark::State& state) {
  const Index K = state.range(0);
  const Mode mode = state.range(1) ? Mode::Partial : Mode::Complete;
  const Scenario s = scenario(K, 57);
  ModelSpec spec;
  spec.mode = mode;
  spec.space = s.space;
  spec.grid = s.config.grid;
  spec.m_gamma = 10;
  spec.m_omega = 10;
  const Model model(spec, mode == Mode::Complete ? s.survey.complete : s.survey.partial, s.truth.pop);
  const Eigen::VectorXd theta = model.initial_params();
  Eigen::VectorXd grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.log_joint_and_grad(theta, grad));
  state.counters["dim"] = static_cast<double>(model.dim());
}
BENCHMARK(BM_LogJointAndGrad)->Args({1, 0})->Args({2, 0})->Args({4, 0})->Args({4, 1})->Unit(benchmark::kMicrosecond);

void BM_SoftmaxFiber(benchmark::State& state) {
  const Index K = state.range(0), A = 40;
  Rng rng(1);
  const Tensor3 omega = random_tensor(K * K, A, rng);
  const Tensor3 s = proportion_tensor(scenario(K, 57).truth.pop, Mode::Complete);
  for (auto _ : state) benchmark::DoNotOptimize(softmax_fiber(omega, s));
}
BENCHMARK(BM_SoftmaxFiber)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMicrosecond);

void BM_KroneckerSum(benchmark::State& state) {
  const Index features = state.range(0), A = 40;
  Rng rng(2);
  std::vector<Tensor3> parts;
  for (Index j = 0; j < features; ++j) parts.push_back(random_tensor(4, A, rng));
  for (auto _ : state) benchmark::DoNotOptimize(kronecker_sum_mode1(parts));
}
BENCHMARK(BM_KroneckerSum)->Arg(1)->Arg(2)->Arg(3)->Unit(benchmark::kMicrosecond);

void BM_TruncatedDirichlet(benchmark::State& state) {
  const Index K = state.range(0);
  Rng rng(3);
  const Eigen::VectorXd alpha = Eigen::VectorXd::Constant(K, 2.0);
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(K, 0.5 / static_cast<double>(K));
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(K, 1.5 / static_cast<double>(K));
  for (auto _ : state) benchmark::DoNotOptimize(truncated_dirichlet_sample(alpha, lo, hi, rng));
}
BENCHMARK(BM_TruncatedDirichlet)->Arg(2)->Arg(4)->Arg(8);

void BM_SampleComplete(benchmark::State& state) {
  const Index K = state.range(0);
  const Scenario s = scenario(K, 47);
  Rng rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(sample_complete(s.truth.m_partial, s.truth.pop, 1.0, rng));
}
BENCHMARK(BM_SampleComplete)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

#include "symdiff/codebook.hpp"
#include "symdiff/constellation.hpp"
#include "symdiff/denoiser.hpp"
#include "symdiff/diffusion.hpp"
#include "symdiff/markov_fit.hpp"
#include "symdiff/schedule.hpp"
#include "symdiff/simulator.hpp"
#include "symdiff/truth_transitions.hpp"

#include <benchmark/benchmark.h>

#include <memory>
#include <random>

using namespace symdiff;

namespace {

void BM_Detect(benchmark::State& state) {
  const auto c = Constellation::square_qam(static_cast<int>(state.range(0)));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  std::vector<Point2> pts(4096);
  for (auto& p : pts) p = {g(rng), g(rng)};
  for (auto _ : state) {
    Index acc = 0;
    for (const auto& p : pts) acc += c.detect(p);
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(pts.size()));
}
BENCHMARK(BM_Detect)->Arg(16)->Arg(64);

void BM_PointToRegion(benchmark::State& state) {
  const auto c = Constellation::square_qam(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(point_to_region_matrix(c, 0.3));
}
BENCHMARK(BM_PointToRegion)->Arg(16)->Arg(64);

void BM_FitObjective(benchmark::State& state) {
  const auto c = Constellation::square_qam(16);
  const auto s = NoiseSchedule::sigmoid(ScheduleParams{});
  const TruthTransitionSet set = analytic_truth_set(c, s, default_fit_steps());
  std::vector<Matrix> targets;
  for (const auto& t : set.matrices) targets.push_back(t.matrix);
  Matrix v = Matrix::Identity(16, 16);
  v.col(0).setOnes();
  const Matrix diag = Matrix::Constant(static_cast<Eigen::Index>(targets.size()), 16, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(p2_objective(v, diag, targets, 10.0, 10.0));
}
BENCHMARK(BM_FitObjective);

void BM_ReverseMarginals(benchmark::State& state) {
  const auto c = Constellation::square_qam(16);
  const auto s = NoiseSchedule::sigmoid(ScheduleParams{});
  std::vector<Matrix> steps(s.steps() + 1, Matrix::Identity(16, 16));
  for (int k = 1; k <= s.steps(); ++k) steps[k] = point_to_region_matrix(c, s.step_var(k));
  auto p = std::make_shared<const DiffusionProcess>(DiffusionProcess::from_steps(steps));
  auto cb = std::make_shared<const Codebook>(Codebook::one_hot(16));
  const ExactBayesDenoiser d(Vector::Constant(16, 1.0 / 16), p, cb);
  const int k = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(reverse_marginals(*p, d, *cb, k));
}
BENCHMARK(BM_ReverseMarginals)->Arg(10)->Arg(97);

void BM_Awgn(benchmark::State& state) {
  const std::vector<Point2> x(static_cast<std::size_t>(state.range(0)), Point2{0.3, 0.3});
  for (auto _ : state) benchmark::DoNotOptimize(awgn(x, 2.0, 1.0, 7));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Awgn)->Arg(100000);

void BM_Quantize(benchmark::State& state) {
  const FeatureSource src = FeatureSource::default_mixture();
  const Codebook cb(farthest_point_init(src, 16, 1));
  const Matrix y = src.sample(10000, 2);
  for (auto _ : state) benchmark::DoNotOptimize(cb.quantize(y));
  state.SetItemsProcessed(state.iterations() * 10000);
}
BENCHMARK(BM_Quantize);

}  // namespace

BENCHMARK_MAIN();

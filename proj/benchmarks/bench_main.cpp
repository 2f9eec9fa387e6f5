#include <benchmark/benchmark.h>

#include <random>

#include "pann/losses.hpp"
#include "pann/metrics.hpp"
#include "pann/phantom.hpp"
#include "pann/primal_dual.hpp"
#include "pann/segnet.hpp"
#include "pann/trainer.hpp"

namespace {

using namespace pann;

const Suite& suite() {
  static const Suite s = build_suite(default_suite_config(), 1);
  return s;
}

void BM_Forward(benchmark::State& state) {
  const auto params = init_params(reference_architecture(5), 1);
  const Image& img = suite().full[0].image();
  for (auto _ : state) benchmark::DoNotOptimize(forward(params, img));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(img.values().size()));
}
BENCHMARK(BM_Forward);

void BM_ForwardBackward(benchmark::State& state) {
  const auto params = init_params(reference_architecture(5), 1);
  const Sample& s = suite().full[0];
  for (auto _ : state) {
    const auto fwd = forward(params, s.image());
    const auto loss = loss_full(fwd.probs, s.labels());
    benchmark::DoNotOptimize(backward(params, fwd.cache, loss.grad));
  }
}
BENCHMARK(BM_ForwardBackward);

void BM_EvaluateObjective(benchmark::State& state) {
  const auto params = init_params(reference_architecture(5), 1);
  const Suite& su = suite();
  const auto& ps = su.partial[0].samples[0];
  const LabelMap pseudo =
      estimate_pseudo_labels(predict(params, ps.image()), ps.labels(), su.partial[0].visible);
  Batch b;
  for (int i = 0; i < 3; ++i) b.full.push_back({&su.full[i].image(), &su.full[i].labels()});
  b.partial.push_back({&ps.image(), &ps.labels(), &pseudo});
  const auto q = compute_prior(su.full, su.label_space).p;
  const auto duals = init_duals(q);
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_objective(b, params, duals, q, 1.0, 0.1, true));
  }
}
BENCHMARK(BM_EvaluateObjective);

void BM_DualStep(benchmark::State& state) {
  const std::vector<double> q{0.7, 0.15, 0.06, 0.03, 0.06};
  const std::vector<double> pbar{0.65, 0.2, 0.05, 0.04, 0.06};
  auto d = init_duals(q);
  for (auto _ : state) {
    d = dual_ascent_step(d, dual_grads(pbar, q, d), 0.5);
    benchmark::DoNotOptimize(d);
  }
}
BENCHMARK(BM_DualStep);

void BM_SurfaceDistances(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  BinaryMask a(n, n), b(n, n);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double dy = y - n / 2.0, dx = x - n / 2.0;
      a(y, x) = dy * dy + dx * dx < n * n / 9.0;
      b(y, x) = (dy - 1) * (dy - 1) + dx * dx * 1.2 < n * n / 9.0;
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(surface_distances(a, b));
}
BENCHMARK(BM_SurfaceDistances)->Arg(32)->Arg(64)->Arg(128);

void BM_Evaluate(benchmark::State& state) {
  const auto params = init_params(reference_architecture(5), 1);
  const Suite& su = suite();
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(params, su.test, su.label_space));
}
BENCHMARK(BM_Evaluate);

// Ten stage-two iterations; the first one refreshes every pseudo label.
void BM_StageTwoChunk(benchmark::State& state) {
  TrainConfig c;
  c.m1 = 0;
  c.m2 = 10;
  Trainer t(suite(), c);
  for (auto _ : state) t.run_stage2();
}
BENCHMARK(BM_StageTwoChunk);

}  // namespace

BENCHMARK_MAIN();

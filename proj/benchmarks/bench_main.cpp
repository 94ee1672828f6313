// Microbenchmarks for the hot paths: the deformed exponential, batch weight
// computation, planar rollouts, and the policy update laws.

#include <cstdint>
#include <span>
#include <vector>

#include <benchmark/benchmark.h>
#include <Eigen/Core>

#include <tsmpc/policy.hpp>
#include <tsmpc/rng.hpp>
#include <tsmpc/rollout.hpp>
#include <tsmpc/systems.hpp>
#include <tsmpc/transforms.hpp>

namespace {

using namespace tsmpc;

constexpr int kHorizon = 96;
constexpr int kControlDim = 2;

Eigen::VectorXd random_costs(int n, std::uint64_t seed) {
  RngStream rng(seed);
  Eigen::VectorXd costs(n);
  for (int i = 0; i < n; ++i) costs(i) = rng.uniform(0.0, 1.0);
  return costs;
}

void BM_ExpR(benchmark::State& state) {
  const double r = static_cast<double>(state.range(0)) / 100.0;
  const Eigen::VectorXd xs = random_costs(1024, 11).array() * -1.0;
  for (auto _ : state) {
    double acc = 0.0;
    for (int i = 0; i < xs.size(); ++i) acc += exp_r(xs(i), r);
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * xs.size());
}
BENCHMARK(BM_ExpR)->Arg(105)->Arg(200)->Arg(1600);

void BM_TsallisBatchWeights(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const CostTransform transform = TsallisTransform{2.0, EliteFraction{0.1}};
  const Eigen::MatrixXd costs = random_costs(n, 22);
  for (auto _ : state) {
    const double gamma =
        resolve_gamma(transform, std::span<const double>(costs.data(), costs.size()));
    const Eigen::VectorXd likelihoods = average_likelihoods(costs, transform, gamma);
    const EmpiricalWeights weights = normalize_weights(likelihoods);
    benchmark::DoNotOptimize(weights.value.sum());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_TsallisBatchWeights)->Arg(256)->Arg(1024)->Arg(4096);

void BM_PlanarRolloutBatch(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const PlanarNavigation model(51);
  const Policy policy{
      GaussianPolicy::isotropic(kHorizon, kControlDim, 18.667, VarianceMode::kFixed)};
  RngStream rng(33);
  const ControlBatch batch = sample_controls(policy, n, rng);
  const auto x0_grid = replicate_state(model.initial_state(), n, 1);
  NoiseConfig noise;
  noise.sigma_eps = 1.0;
  for (auto _ : state) {
    const Eigen::MatrixXd costs =
        rollout_batch(model, x0_grid, batch.controls, noise, 1000, 0, 0);
    benchmark::DoNotOptimize(costs.sum());
  }
  state.SetItemsProcessed(state.iterations() * n * kHorizon);
}
BENCHMARK(BM_PlanarRolloutBatch)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_GaussianUpdate(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const GaussianPolicy prev =
      GaussianPolicy::isotropic(kHorizon, kControlDim, 2.0, VarianceMode::kAdaptive);
  RngStream rng(44);
  const ControlBatch batch = sample_controls(Policy{prev}, n, rng);
  const EmpiricalWeights weights = normalize_weights(random_costs(n, 45));
  for (auto _ : state) {
    const GaussianPolicy next = gaussian_update(batch, weights, prev, 0.0);
    benchmark::DoNotOptimize(next.mean.sum());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_GaussianUpdate)->Arg(256)->Arg(1024);

void BM_SteinUpdate(benchmark::State& state) {
  const int particles = 8;
  const int n = static_cast<int>(state.range(0));
  SteinPolicy prev;
  RngStream init(55);
  prev.particles.reserve(particles);
  for (int l = 0; l < particles; ++l) {
    Eigen::MatrixXd theta(kHorizon, kControlDim);
    for (int t = 0; t < kHorizon; ++t)
      for (int d = 0; d < kControlDim; ++d) theta(t, d) = 2.0 * init.normal();
    prev.particles.push_back(theta);
  }
  prev.sampling_std = 1.0;
  prev.step_size = 0.5;
  prev.bandwidth_multiplier = 9.444;
  RngStream rng(56);
  const ControlBatch batch = sample_controls(Policy{prev}, n, rng);
  const EmpiricalWeights weights = normalize_weights(random_costs(n, 57));
  for (auto _ : state) {
    const SteinPolicy next = stein_update(batch, weights, prev);
    benchmark::DoNotOptimize(next.particles[0].sum());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_SteinUpdate)->Arg(256)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();

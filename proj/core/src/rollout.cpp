#include "tsmpc/rollout.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "tsmpc/parallel.hpp"
#include "tsmpc/rng.hpp"

namespace tsmpc {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::uint64_t kRolloutTag = 0x5011edull;
}  // namespace

std::uint64_t default_rollout_seed(std::uint64_t trial_seed, int mpc_step, int opt_iter,
                                   int n, int m) {
  return mix_seed({trial_seed, kRolloutTag, static_cast<std::uint64_t>(mpc_step),
                   static_cast<std::uint64_t>(opt_iter), static_cast<std::uint64_t>(n),
                   static_cast<std::uint64_t>(m)});
}

std::vector<Eigen::VectorXd> replicate_state(const Eigen::VectorXd& x0, int num_samples,
                                             int num_state_samples) {
  if (num_samples < 1 || num_state_samples < 1)
    throw std::invalid_argument("replicate_state: counts must be >= 1");
  return std::vector<Eigen::VectorXd>(
      static_cast<std::size_t>(num_samples) * num_state_samples, x0);
}

Eigen::MatrixXd rollout_batch(const SystemModel& model,
                              const std::vector<Eigen::VectorXd>& x0_grid,
                              const std::vector<Eigen::MatrixXd>& controls,
                              const NoiseConfig& noise, std::uint64_t trial_seed,
                              int mpc_step, int opt_iter, int threads) {
  const int num_samples = static_cast<int>(controls.size());
  if (num_samples == 0) throw std::invalid_argument("rollout_batch: empty control batch");
  if (x0_grid.empty() || x0_grid.size() % controls.size() != 0)
    throw std::invalid_argument(
        "rollout_batch: x0_grid must hold N*M states in sample-major order");
  const int num_state_samples = static_cast<int>(x0_grid.size() / controls.size());
  const auto horizon = controls[0].rows();
  const int nu = model.control_dim();
  const int nx = model.state_dim();
  for (const auto& u : controls)
    if (u.rows() != horizon || u.cols() != nu)
      throw std::invalid_argument("rollout_batch: control dimension mismatch");
  if (!(noise.sigma_eps >= 0.0))
    throw std::invalid_argument("rollout_batch: sigma_eps must be >= 0");
  const NoiseConfig::SeedScheme seed_scheme =
      noise.seed_scheme ? noise.seed_scheme : NoiseConfig::SeedScheme(&default_rollout_seed);

  Eigen::MatrixXd costs(num_samples, num_state_samples);
  const std::int64_t total = static_cast<std::int64_t>(num_samples) * num_state_samples;

  parallel_for_blocks(total, threads, [&](std::int64_t begin, std::int64_t end) {
    Eigen::MatrixXd states(horizon + 1, nx);
    for (std::int64_t idx = begin; idx < end; ++idx) {
      const int n = static_cast<int>(idx / num_state_samples);
      const int m = static_cast<int>(idx % num_state_samples);
      RngStream rng(seed_scheme(trial_seed, mpc_step, opt_iter, n, m));

      Eigen::VectorXd x = x0_grid[idx];
      if (x.size() != nx)
        throw std::invalid_argument("rollout_batch: initial state dimension mismatch");
      states.row(0) = x.transpose();
      bool diverged = false;
      for (Eigen::Index t = 0; t < horizon; ++t) {
        Eigen::VectorXd u = controls[n].row(t).transpose();
        if (noise.sigma_eps > 0.0) u += noise.sigma_eps * rng.normal_vector(nu);
        x = model.step(x, u);
        if (!x.allFinite()) {
          diverged = true;
          break;
        }
        states.row(t + 1) = x.transpose();
      }
      costs(n, m) = diverged ? kInf : model.trajectory_cost(states, controls[n]);
    }
  });
  return costs;
}

Eigen::MatrixXd normalize_costs(const Eigen::MatrixXd& costs, bool* degenerate) {
  if (costs.size() == 0) throw std::invalid_argument("normalize_costs: empty batch");
  if (degenerate) *degenerate = false;
  double lo = kInf;
  double hi = -kInf;
  for (Eigen::Index i = 0; i < costs.size(); ++i) {
    const double c = *(costs.data() + i);
    if (std::isnan(c)) throw std::invalid_argument("normalize_costs: NaN cost");
    if (std::isfinite(c)) {
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
  }
  if (!std::isfinite(lo)) throw std::runtime_error("normalize_costs: every rollout diverged");
  Eigen::MatrixXd normalized(costs.rows(), costs.cols());
  if (hi == lo) {
    normalized.setZero();
    // Diverged entries still rank worst even in a flat batch.
    for (Eigen::Index i = 0; i < costs.size(); ++i)
      if (!std::isfinite(*(costs.data() + i))) *(normalized.data() + i) = 1.0;
    if (degenerate) *degenerate = true;
    return normalized;
  }
  const double range = hi - lo;
  for (Eigen::Index i = 0; i < costs.size(); ++i) {
    const double c = *(costs.data() + i);
    *(normalized.data() + i) = std::isfinite(c) ? (c - lo) / range : 1.0;
  }
  return normalized;
}

Eigen::VectorXd average_likelihoods(const Eigen::MatrixXd& normalized_costs,
                                    const CostTransform& transform, double gamma_resolved) {
  const auto n = normalized_costs.rows();
  const auto m = normalized_costs.cols();
  Eigen::VectorXd result(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < m; ++j)
      acc += likelihood(transform, normalized_costs(i, j), gamma_resolved);
    result(i) = acc / static_cast<double>(m);
  }
  return result;
}

RolloutEvaluation evaluate_controls(const SystemModel& model,
                                    const std::vector<Eigen::VectorXd>& x0_grid,
                                    const ControlBatch& batch, const CostTransform& transform,
                                    const NoiseConfig& noise, std::uint64_t trial_seed,
                                    int mpc_step, int opt_iter, int threads) {
  RolloutEvaluation eval;
  eval.costs = rollout_batch(model, x0_grid, batch.controls, noise, trial_seed, mpc_step,
                             opt_iter, threads);
  bool flat = false;
  eval.normalized_costs = normalize_costs(eval.costs, &flat);
  eval.gamma_resolved = resolve_gamma(
      transform, std::span<const double>(eval.normalized_costs.data(),
                                         static_cast<std::size_t>(eval.normalized_costs.size())));
  eval.likelihoods = average_likelihoods(eval.normalized_costs, transform, eval.gamma_resolved);
  eval.weights = normalize_weights(eval.likelihoods);
  eval.degenerate = flat || eval.weights.degenerate;
  return eval;
}

}  // namespace tsmpc

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "tsmpc/policy.hpp"
#include "tsmpc/systems.hpp"
#include "tsmpc/transforms.hpp"

namespace tsmpc {

// Additive control-channel noise injected during rollouts. Each (sample,
// state-sample) rollout draws from its own stream whose seed is a pure
// function of (trial_seed, mpc_step, opt_iter, n, m), so batches are
// reproducible and independent of evaluation order or thread count. Tests may
// substitute the seed scheme (e.g. to force shared noise across m).
struct NoiseConfig {
  double sigma_eps = 0.0;  // per-dimension std of the injected control noise

  using SeedScheme =
      std::function<std::uint64_t(std::uint64_t, int, int, int, int)>;
  SeedScheme seed_scheme;  // falls back to default_rollout_seed when empty
};

std::uint64_t default_rollout_seed(std::uint64_t trial_seed, int mpc_step, int opt_iter,
                                   int n, int m);

// Simulates every (control sample n, state sample m) pair and returns the
// N x M matrix of trajectory costs. x0_grid holds N*M initial states in
// n-major order (use replicate_state for the common shared-state case).
// Dynamics see the sampled controls plus injected noise; costs are charged on
// the noise-free sampled controls. Rollouts that produce non-finite states
// get +inf cost.
Eigen::MatrixXd rollout_batch(const SystemModel& model,
                              const std::vector<Eigen::VectorXd>& x0_grid,
                              const std::vector<Eigen::MatrixXd>& controls,
                              const NoiseConfig& noise, std::uint64_t trial_seed,
                              int mpc_step, int opt_iter, int threads = 1);

std::vector<Eigen::VectorXd> replicate_state(const Eigen::VectorXd& x0, int num_samples,
                                             int num_state_samples);

// Affine rescaling of a cost batch to [0, 1] over its finite entries:
// (J - min) / (max - min), with +inf mapped to 1. An all-equal batch maps to
// all zeros and sets *degenerate. Throws std::runtime_error when no entry is
// finite (every rollout diverged).
Eigen::MatrixXd normalize_costs(const Eigen::MatrixXd& costs, bool* degenerate = nullptr);

// Monte-Carlo optimality likelihood per control sample: the likelihood shape
// applied entrywise to normalized costs, averaged over the M state samples.
Eigen::VectorXd average_likelihoods(const Eigen::MatrixXd& normalized_costs,
                                    const CostTransform& transform, double gamma_resolved);

// One full scoring pass over a sampled control batch: rollout, normalize,
// resolve the elite threshold on the flattened batch, average likelihoods
// over state samples, and normalize to importance weights.
struct RolloutEvaluation {
  Eigen::MatrixXd costs;             // N x M raw trajectory costs
  Eigen::MatrixXd normalized_costs;  // N x M in [0, 1]
  double gamma_resolved;             // NaN for transforms without a threshold
  Eigen::VectorXd likelihoods;       // N
  EmpiricalWeights weights;          // N
  bool degenerate = false;           // flat batch and/or all-zero likelihoods
};

RolloutEvaluation evaluate_controls(const SystemModel& model,
                                    const std::vector<Eigen::VectorXd>& x0_grid,
                                    const ControlBatch& batch, const CostTransform& transform,
                                    const NoiseConfig& noise, std::uint64_t trial_seed,
                                    int mpc_step, int opt_iter, int threads = 1);

}  // namespace tsmpc

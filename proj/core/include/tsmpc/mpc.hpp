#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "tsmpc/policy.hpp"
#include "tsmpc/rollout.hpp"
#include "tsmpc/systems.hpp"
#include "tsmpc/transforms.hpp"

namespace tsmpc {

// Full controller specification for one trial.
struct MpcConfig {
  int horizon = 0;            // T, planning steps per optimization
  int num_steps = 0;          // episode length in executed MPC steps
  int iters_per_step = 1;     // K, optimization iterations per MPC step
  int warmup_iters = 1;       // iterations for the first step, >= K
  int num_samples = 0;        // N control samples per iteration
  int num_state_samples = 1;  // M rollouts per control sample
  NoiseConfig noise;
  CostTransform transform;
  Policy initial_policy;
  // Used by Gaussian/GMM updates; a CEM transform's own alpha takes precedence.
  double smoothing_alpha = 0.0;
  std::uint64_t trial_seed = 0;
  int threads = 1;

  void validate() const;

  // smoothing_alpha unless the transform is CEM, whose configured alpha wins.
  double effective_smoothing_alpha() const;
};

// Per-MPC-step optimizer diagnostics (from the step's final iteration unless
// noted).
struct StepDiagnostics {
  double gamma_resolved = 0.0;          // NaN for MPPI
  bool degenerate = false;              // any iteration this step degenerated
  double effective_sample_size = 0.0;   // 1 / sum_n w_n^2
};

// Realized closed-loop trajectory of one trial.
struct TrialRecord {
  Eigen::MatrixXd states;    // (num_steps + 1) x n_x
  Eigen::MatrixXd controls;  // num_steps x n_u, commanded controls
  double total_cost = 0.0;   // task cost of the realized trajectory
  bool crashed = false;
  int steps_to_goal = -1;    // first state index within goal_radius, -1 if never
  std::vector<StepDiagnostics> diagnostics;  // one per MPC step
};

// Runs one receding-horizon trial: at every step, iterate
// sample -> rollout -> normalize -> weight -> policy update, execute the
// selected control on the system under evaluation noise (seeded from
// eval_seed), then shift the policy. The first step runs warmup_iters
// iterations, later steps iters_per_step.
TrialRecord run_mpc_trial(const MpcConfig& config, const SystemModel& model,
                          std::uint64_t eval_seed);

struct TrialSetSummary {
  double mean_cost = 0.0;
  double std_cost = 0.0;   // sample standard deviation (n - 1)
  double crash_rate = 0.0;
  std::vector<TrialRecord> trials;
};

// Runs num_trials independent trials with trial seeds config.trial_seed + i
// and evaluation seeds eval_seed_base + i. Trials are parallelized across
// config.threads (rollout batches then run single-threaded inside each
// trial); results are identical for any thread count.
TrialSetSummary run_trial_set(const MpcConfig& config, const SystemModel& model,
                              int num_trials, std::uint64_t eval_seed_base);

}  // namespace tsmpc

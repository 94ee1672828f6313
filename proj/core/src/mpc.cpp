#include "tsmpc/mpc.hpp"

#include <cmath>
#include <stdexcept>

#include "tsmpc/parallel.hpp"
#include "tsmpc/rng.hpp"

namespace tsmpc {

namespace {
constexpr std::uint64_t kSamplerTag = 0x5a3b1e5ull;
constexpr std::uint64_t kEvalTag = 0xe7a1ull;
}  // namespace

void MpcConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("MpcConfig: horizon must be >= 1");
  if (num_steps < 1) throw std::invalid_argument("MpcConfig: num_steps must be >= 1");
  if (iters_per_step < 1) throw std::invalid_argument("MpcConfig: iters_per_step must be >= 1");
  if (warmup_iters < iters_per_step)
    throw std::invalid_argument("MpcConfig: warmup_iters must be >= iters_per_step");
  if (num_samples < 2) throw std::invalid_argument("MpcConfig: num_samples must be >= 2");
  if (num_state_samples < 1)
    throw std::invalid_argument("MpcConfig: num_state_samples must be >= 1");
  if (!(smoothing_alpha >= 0.0 && smoothing_alpha < 1.0))
    throw std::invalid_argument("MpcConfig: smoothing_alpha must lie in [0, 1)");
  if (threads < 1) throw std::invalid_argument("MpcConfig: threads must be >= 1");
  if (policy_horizon(initial_policy) != horizon)
    throw std::invalid_argument("MpcConfig: policy horizon does not match config horizon");
  std::visit([](const auto& p) { p.validate(); }, initial_policy);
}

double MpcConfig::effective_smoothing_alpha() const {
  if (const auto* cem = std::get_if<CemTransform>(&transform)) return cem->smoothing_alpha;
  return smoothing_alpha;
}

TrialRecord run_mpc_trial(const MpcConfig& config, const SystemModel& model,
                          std::uint64_t eval_seed) {
  config.validate();
  if (policy_control_dim(config.initial_policy) != model.control_dim())
    throw std::invalid_argument("run_mpc_trial: policy/model control dimension mismatch");

  const int nx = model.state_dim();
  const int nu = model.control_dim();
  const double alpha = config.effective_smoothing_alpha();

  TrialRecord record;
  record.states.resize(config.num_steps + 1, nx);
  record.controls.resize(config.num_steps, nu);
  record.diagnostics.reserve(config.num_steps);

  const Eigen::VectorXd goal = model.goal_position();

  Policy policy = config.initial_policy;
  Eigen::VectorXd x = model.initial_state();
  record.states.row(0) = x.transpose();

  for (int step = 0; step < config.num_steps; ++step) {
    const int iters = step == 0 ? config.warmup_iters : config.iters_per_step;
    const auto x0_grid = replicate_state(x, config.num_samples, config.num_state_samples);

    StepDiagnostics diag;
    for (int iter = 0; iter < iters; ++iter) {
      RngStream sampler(mix_seed({config.trial_seed, kSamplerTag,
                                  static_cast<std::uint64_t>(step),
                                  static_cast<std::uint64_t>(iter)}));
      const ControlBatch batch = sample_controls(policy, config.num_samples, sampler);
      const RolloutEvaluation eval =
          evaluate_controls(model, x0_grid, batch, config.transform, config.noise,
                            config.trial_seed, step, iter, config.threads);
      policy = update_policy(policy, batch, eval.weights, alpha);

      diag.gamma_resolved = eval.gamma_resolved;
      diag.degenerate = diag.degenerate || eval.degenerate;
      diag.effective_sample_size = 1.0 / eval.weights.value.squaredNorm();
    }
    record.diagnostics.push_back(diag);

    // Execute the selected control under evaluation noise; the record keeps
    // the commanded control, matching how rollout costs are charged.
    const Eigen::VectorXd u = select_control(policy);
    Eigen::VectorXd u_exec = u;
    if (config.noise.sigma_eps > 0.0) {
      RngStream eval_rng(
          mix_seed({eval_seed, kEvalTag, static_cast<std::uint64_t>(step)}));
      u_exec += config.noise.sigma_eps * eval_rng.normal_vector(nu);
    }
    x = model.step(x, u_exec);
    if (!x.allFinite()) throw std::runtime_error("run_mpc_trial: system state diverged");
    record.states.row(step + 1) = x.transpose();
    record.controls.row(step) = u.transpose();

    policy = recede(policy);
  }

  record.total_cost = model.trajectory_cost(record.states, record.controls);
  for (int t = 0; t <= config.num_steps && !record.crashed; ++t)
    record.crashed = model.is_crashed(record.states.row(t).transpose());
  if (goal.size() > 0) {
    for (int t = 0; t <= config.num_steps; ++t) {
      const Eigen::VectorXd pos = record.states.row(t).head(goal.size()).transpose();
      if ((pos - goal).norm() <= model.goal_radius()) {
        record.steps_to_goal = t;
        break;
      }
    }
  }
  return record;
}

TrialSetSummary run_trial_set(const MpcConfig& config, const SystemModel& model,
                              int num_trials, std::uint64_t eval_seed_base) {
  if (num_trials < 1) throw std::invalid_argument("run_trial_set: num_trials must be >= 1");
  config.validate();

  TrialSetSummary summary;
  summary.trials.resize(num_trials);

  // One trial per work item; intra-trial rollouts stay single-threaded so the
  // per-trial stream layout is identical however trials are scheduled.
  MpcConfig trial_config = config;
  trial_config.threads = 1;
  parallel_for(num_trials, config.threads, [&](std::int64_t i) {
    MpcConfig local = trial_config;
    local.trial_seed = config.trial_seed + static_cast<std::uint64_t>(i);
    summary.trials[i] =
        run_mpc_trial(local, model, eval_seed_base + static_cast<std::uint64_t>(i));
  });

  double mean = 0.0;
  for (const auto& trial : summary.trials) mean += trial.total_cost;
  mean /= num_trials;
  double var = 0.0;
  int crashes = 0;
  for (const auto& trial : summary.trials) {
    var += (trial.total_cost - mean) * (trial.total_cost - mean);
    crashes += trial.crashed ? 1 : 0;
  }
  summary.mean_cost = mean;
  summary.std_cost = num_trials > 1 ? std::sqrt(var / (num_trials - 1)) : 0.0;
  summary.crash_rate = static_cast<double>(crashes) / num_trials;
  return summary;
}

}  // namespace tsmpc

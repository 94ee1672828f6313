#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

#include "tsmpc/mpc.hpp"
#include "tsmpc/policy.hpp"
#include "tsmpc/systems.hpp"
#include "tsmpc/transforms.hpp"

namespace tsmpc {

// Configuration parsing failure; message names the offending field path
// (e.g. "mpc.horizon").
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TaskKind { kPlanar, kQuadcopter, kSingleStage };
enum class MethodKind { kTsallis, kMppi, kCem };
enum class PolicyKind { kGaussian, kGmm, kStein };

struct TaskConfig {
  TaskKind kind = TaskKind::kPlanar;
  std::uint64_t field_seed = 0;  // obstacle-field generator seed
};

struct MethodConfig {
  MethodKind kind = MethodKind::kTsallis;
  double r = 2.0;                // Tsallis deformation
  double elite_fraction = 0.1;   // Tsallis/CEM, fraction mode
  // Absolute elite threshold; NaN selects fraction mode.
  double gamma = std::numeric_limits<double>::quiet_NaN();
  double inv_lambda = 10.0;      // MPPI inverse temperature
  double smoothing_alpha = 0.0;  // CEM update smoothing

  CostTransform to_transform() const;
};

struct PolicyConfig {
  PolicyKind kind = PolicyKind::kGaussian;
  double init_std = 1.0;  // initial (Gaussian/GMM) or sampling (Stein) std
  VarianceMode variance_mode = VarianceMode::kAdaptive;
  double variance_floor = 1e-6;
  int components = 2;  // GMM
  int em_iters = 5;    // GMM
  int particles = 2;   // Stein
  double step_size = 0.5;             // Stein
  double bandwidth_multiplier = 1.0;  // Stein
  // Std of the seeded per-component/per-particle mean offsets; NaN = init_std.
  double init_spread = std::numeric_limits<double>::quiet_NaN();

  // Deterministically builds the initial policy; `seed` controls the GMM
  // component / Stein particle offsets.
  Policy build(int horizon, int control_dim, std::uint64_t seed) const;
};

struct MpcSection {
  int horizon = 0;
  int num_steps = 0;
  int iters_per_step = 1;
  int warmup_iters = 0;  // 0 = same as iters_per_step
  int num_samples = 0;
  int num_state_samples = 1;
  double control_noise_std = 0.0;
  double smoothing_alpha = 0.0;
};

struct SeedsConfig {
  std::uint64_t trial_seed = 0;
  std::uint64_t eval_seed = 0;
  int num_trials = 1;
};

struct SingleStageSection {
  int num_seeds = 1024;
  int num_samples = 64;
};

struct ExperimentConfig {
  std::string name;  // output-file prefix; defaulted from task/method/policy
  TaskConfig task;
  MethodConfig method;
  PolicyConfig policy;            // MPC tasks only
  MpcSection mpc;                 // MPC tasks only
  SingleStageSection single_stage;  // single-stage task only
  SeedsConfig seeds;

  void validate() const;  // throws ConfigError with a field path

  std::unique_ptr<SystemModel> make_model() const;  // MPC tasks only
  MpcConfig make_mpc_config(const SystemModel& model, std::uint64_t trial_seed) const;
};

// Strict parser: unknown keys, missing required keys, wrong types, and
// out-of-range values all throw ConfigError naming the field path.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

// Canonical JSON serialization (sorted keys, all defaults materialized) and
// its FNV-1a 64-bit hash, used to fingerprint outputs.
std::string canonical_json(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);

// Applies a named scalar override (sweep/sensitivity parameter) to a config.
// Supported: r, elite_fraction, gamma, inv_lambda, smoothing_alpha, init_std,
// step_size, bandwidth_multiplier, control_noise_std.
void apply_override(ExperimentConfig& config, const std::string& name, double value);

const char* to_string(TaskKind kind);
const char* to_string(MethodKind kind);
const char* to_string(PolicyKind kind);

}  // namespace tsmpc

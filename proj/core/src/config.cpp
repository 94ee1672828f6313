#include "tsmpc/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tsmpc/rng.hpp"

namespace tsmpc {

namespace {

using nlohmann::json;

constexpr std::uint64_t kPolicyInitTag = 0x1217ull;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config error at " + path + ": " + what);
}

// Typed field access with unknown-key rejection.
class ObjectReader {
 public:
  ObjectReader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail(path_, "expected an object");
  }

  ~ObjectReader() = default;

  void finish() const {
    for (const auto& item : node_.items())
      if (!seen_.contains(item.key())) fail(path_ + "." + item.key(), "unknown key");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return node_.contains(key);
  }

  const json* get(const std::string& key) {
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  const json& require(const std::string& key) {
    const json* value = get(key);
    if (!value) fail(path_ + "." + key, "missing required key");
    return *value;
  }

  std::string field_path(const std::string& key) const { return path_ + "." + key; }

  double number(const std::string& key, double fallback) {
    const json* value = get(key);
    if (!value) return fallback;
    if (!value->is_number()) fail(field_path(key), "expected a number");
    return value->get<double>();
  }

  double required_number(const std::string& key) {
    const json& value = require(key);
    if (!value.is_number()) fail(field_path(key), "expected a number");
    return value.get<double>();
  }

  int integer(const std::string& key, int fallback) {
    const json* value = get(key);
    if (!value) return fallback;
    if (!value->is_number_integer()) fail(field_path(key), "expected an integer");
    return value->get<int>();
  }

  int required_integer(const std::string& key) {
    const json& value = require(key);
    if (!value.is_number_integer()) fail(field_path(key), "expected an integer");
    return value.get<int>();
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    const json* value = get(key);
    if (!value) return fallback;
    if (!value->is_number_unsigned() && !value->is_number_integer())
      fail(field_path(key), "expected a nonnegative integer");
    if (value->is_number_integer() && value->get<std::int64_t>() < 0)
      fail(field_path(key), "expected a nonnegative integer");
    return value->get<std::uint64_t>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    const json* value = get(key);
    if (!value) return fallback;
    if (!value->is_string()) fail(field_path(key), "expected a string");
    return value->get<std::string>();
  }

  std::string required_string(const std::string& key) {
    const json& value = require(key);
    if (!value.is_string()) fail(field_path(key), "expected a string");
    return value.get<std::string>();
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

TaskKind parse_task_kind(const std::string& text, const std::string& path) {
  if (text == "planar") return TaskKind::kPlanar;
  if (text == "quadcopter") return TaskKind::kQuadcopter;
  if (text == "single_stage") return TaskKind::kSingleStage;
  fail(path, "unknown task kind '" + text + "' (planar, quadcopter, single_stage)");
}

MethodKind parse_method_kind(const std::string& text, const std::string& path) {
  if (text == "tsallis") return MethodKind::kTsallis;
  if (text == "mppi") return MethodKind::kMppi;
  if (text == "cem") return MethodKind::kCem;
  fail(path, "unknown method kind '" + text + "' (tsallis, mppi, cem)");
}

PolicyKind parse_policy_kind(const std::string& text, const std::string& path) {
  if (text == "gaussian") return PolicyKind::kGaussian;
  if (text == "gmm") return PolicyKind::kGmm;
  if (text == "stein") return PolicyKind::kStein;
  fail(path, "unknown policy kind '" + text + "' (gaussian, gmm, stein)");
}

}  // namespace

const char* to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kPlanar: return "planar";
    case TaskKind::kQuadcopter: return "quadcopter";
    case TaskKind::kSingleStage: return "single_stage";
  }
  return "?";
}

const char* to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::kTsallis: return "tsallis";
    case MethodKind::kMppi: return "mppi";
    case MethodKind::kCem: return "cem";
  }
  return "?";
}

const char* to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kGaussian: return "gaussian";
    case PolicyKind::kGmm: return "gmm";
    case PolicyKind::kStein: return "stein";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Derived objects
// ---------------------------------------------------------------------------

CostTransform MethodConfig::to_transform() const {
  EliteSpec elite = std::isnan(gamma) ? EliteSpec(EliteFraction{elite_fraction})
                                      : EliteSpec(EliteThreshold{gamma});
  switch (kind) {
    case MethodKind::kTsallis: return TsallisTransform{r, elite};
    case MethodKind::kMppi: return MppiTransform{inv_lambda};
    case MethodKind::kCem: return CemTransform{elite, smoothing_alpha};
  }
  throw std::logic_error("MethodConfig::to_transform: bad kind");
}

Policy PolicyConfig::build(int horizon, int control_dim, std::uint64_t seed) const {
  const double spread = std::isnan(init_spread) ? init_std : init_spread;
  switch (kind) {
    case PolicyKind::kGaussian:
      return GaussianPolicy::isotropic(horizon, control_dim, init_std, variance_mode,
                                       variance_floor);
    case PolicyKind::kGmm: {
      GmmPolicy policy = GmmPolicy::isotropic(components, horizon, control_dim, init_std,
                                              variance_floor, em_iters);
      RngStream rng(mix_seed({seed, kPolicyInitTag}));
      // Constant-in-time per-component offsets keep components distinct from
      // the first EM round while remaining smooth trajectories.
      for (auto& mean : policy.means)
        mean.rowwise() += (spread * rng.normal_vector(control_dim)).transpose();
      return policy;
    }
    case PolicyKind::kStein: {
      SteinPolicy policy;
      policy.sampling_std = init_std;
      policy.step_size = step_size;
      policy.bandwidth_multiplier = bandwidth_multiplier;
      RngStream rng(mix_seed({seed, kPolicyInitTag}));
      policy.particles.reserve(particles);
      for (int l = 0; l < particles; ++l) {
        Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(horizon, control_dim);
        theta.rowwise() += (spread * rng.normal_vector(control_dim)).transpose();
        policy.particles.push_back(std::move(theta));
      }
      policy.validate();
      return policy;
    }
  }
  throw std::logic_error("PolicyConfig::build: bad kind");
}

std::unique_ptr<SystemModel> ExperimentConfig::make_model() const {
  switch (task.kind) {
    case TaskKind::kPlanar: return std::make_unique<PlanarNavigation>(task.field_seed);
    case TaskKind::kQuadcopter: return std::make_unique<Quadcopter>(task.field_seed);
    case TaskKind::kSingleStage:
      throw std::logic_error("make_model: the single-stage task has no dynamics model");
  }
  throw std::logic_error("make_model: bad task kind");
}

MpcConfig ExperimentConfig::make_mpc_config(const SystemModel& model,
                                            std::uint64_t trial_seed) const {
  MpcConfig out;
  out.horizon = mpc.horizon;
  out.num_steps = mpc.num_steps;
  out.iters_per_step = mpc.iters_per_step;
  out.warmup_iters = mpc.warmup_iters > 0 ? mpc.warmup_iters : mpc.iters_per_step;
  out.num_samples = mpc.num_samples;
  out.num_state_samples = mpc.num_state_samples;
  out.noise.sigma_eps = mpc.control_noise_std;
  out.transform = method.to_transform();
  out.initial_policy = policy.build(mpc.horizon, model.control_dim(), trial_seed);
  out.smoothing_alpha = mpc.smoothing_alpha;
  out.trial_seed = trial_seed;
  return out;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  switch (method.kind) {
    case MethodKind::kTsallis:
      if (!(method.r > 1.0)) fail("method.r", "Tsallis requires r > 1");
      break;
    case MethodKind::kMppi:
      if (!(method.inv_lambda > 0.0)) fail("method.inv_lambda", "must be > 0");
      break;
    case MethodKind::kCem:
      if (!(method.smoothing_alpha >= 0.0 && method.smoothing_alpha < 1.0))
        fail("method.smoothing_alpha", "must lie in [0, 1)");
      break;
  }
  if (method.kind != MethodKind::kMppi) {
    if (std::isnan(method.gamma)) {
      if (!(method.elite_fraction > 0.0 && method.elite_fraction <= 1.0))
        fail("method.elite_fraction", "must lie in (0, 1]");
    } else if (!(method.gamma > 0.0)) {
      fail("method.gamma", "must be > 0");
    }
  }

  if (seeds.num_trials < 1) fail("seeds.num_trials", "must be >= 1");

  if (task.kind == TaskKind::kSingleStage) {
    if (single_stage.num_seeds < 1) fail("single_stage.num_seeds", "must be >= 1");
    if (single_stage.num_samples < 2) fail("single_stage.num_samples", "must be >= 2");
    return;
  }

  if (mpc.horizon < 1) fail("mpc.horizon", "must be >= 1");
  if (mpc.num_steps < 1) fail("mpc.num_steps", "must be >= 1");
  if (mpc.iters_per_step < 1) fail("mpc.iters_per_step", "must be >= 1");
  if (mpc.warmup_iters != 0 && mpc.warmup_iters < mpc.iters_per_step)
    fail("mpc.warmup_iters", "must be >= iters_per_step (or 0 for the default)");
  if (mpc.num_samples < 2) fail("mpc.num_samples", "must be >= 2");
  if (mpc.num_state_samples < 1) fail("mpc.num_state_samples", "must be >= 1");
  if (!(mpc.control_noise_std >= 0.0)) fail("mpc.control_noise_std", "must be >= 0");
  if (!(mpc.smoothing_alpha >= 0.0 && mpc.smoothing_alpha < 1.0))
    fail("mpc.smoothing_alpha", "must lie in [0, 1)");

  if (!(policy.init_std > 0.0)) fail("policy.init_std", "must be > 0");
  if (!(policy.variance_floor > 0.0)) fail("policy.variance_floor", "must be > 0");
  switch (policy.kind) {
    case PolicyKind::kGaussian:
      break;
    case PolicyKind::kGmm:
      if (policy.components < 1) fail("policy.components", "must be >= 1");
      if (policy.em_iters < 1) fail("policy.em_iters", "must be >= 1");
      break;
    case PolicyKind::kStein:
      if (policy.particles < 1) fail("policy.particles", "must be >= 1");
      if (mpc.num_samples % std::max(policy.particles, 1) != 0)
        fail("policy.particles", "must divide mpc.num_samples");
      if (!(policy.step_size > 0.0)) fail("policy.step_size", "must be > 0");
      if (!(policy.bandwidth_multiplier > 0.0))
        fail("policy.bandwidth_multiplier", "must be > 0");
      break;
  }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json root_node;
  try {
    root_node = json::parse(json_text);
  } catch (const json::parse_error& err) {
    throw ConfigError(std::string("config error at <root>: invalid JSON (") + err.what() + ")");
  }

  ExperimentConfig config;
  ObjectReader root(root_node, "<root>");

  {
    ObjectReader task(root.require("task"), "task");
    config.task.kind = parse_task_kind(task.required_string("kind"), "task.kind");
    config.task.field_seed = task.unsigned_integer("field_seed", 0);
    task.finish();
  }

  {
    ObjectReader method(root.require("method"), "method");
    config.method.kind = parse_method_kind(method.required_string("kind"), "method.kind");
    switch (config.method.kind) {
      case MethodKind::kTsallis:
        config.method.r = method.required_number("r");
        break;
      case MethodKind::kMppi:
        config.method.inv_lambda = method.required_number("inv_lambda");
        break;
      case MethodKind::kCem:
        config.method.smoothing_alpha = method.number("smoothing_alpha", 0.0);
        break;
    }
    if (config.method.kind != MethodKind::kMppi) {
      const bool has_fraction = method.has("elite_fraction");
      const bool has_gamma = method.has("gamma");
      if (has_fraction == has_gamma)
        fail("method", "provide exactly one of elite_fraction or gamma");
      if (has_fraction) config.method.elite_fraction = method.required_number("elite_fraction");
      if (has_gamma) config.method.gamma = method.required_number("gamma");
    }
    method.finish();
  }

  const bool is_single_stage = config.task.kind == TaskKind::kSingleStage;

  if (is_single_stage) {
    if (root.has("policy")) fail("policy", "not used by the single-stage task");
    if (root.has("mpc")) fail("mpc", "not used by the single-stage task");
    if (root.has("single_stage")) {
      ObjectReader section(root.require("single_stage"), "single_stage");
      config.single_stage.num_seeds = section.integer("num_seeds", 1024);
      config.single_stage.num_samples = section.integer("num_samples", 64);
      section.finish();
    }
  } else {
    {
      ObjectReader policy(root.require("policy"), "policy");
      config.policy.kind = parse_policy_kind(policy.required_string("kind"), "policy.kind");
      config.policy.init_std = policy.required_number("init_std");
      const std::string mode = policy.string("variance_mode", "adaptive");
      if (mode == "adaptive") config.policy.variance_mode = VarianceMode::kAdaptive;
      else if (mode == "fixed") config.policy.variance_mode = VarianceMode::kFixed;
      else fail("policy.variance_mode", "expected 'adaptive' or 'fixed'");
      config.policy.variance_floor = policy.number("variance_floor", 1e-6);
      if (config.policy.kind == PolicyKind::kGmm) {
        config.policy.components = policy.required_integer("components");
        config.policy.em_iters = policy.integer("em_iters", 5);
      }
      if (config.policy.kind == PolicyKind::kStein) {
        config.policy.particles = policy.required_integer("particles");
        config.policy.step_size = policy.number("step_size", 0.5);
        config.policy.bandwidth_multiplier = policy.number("bandwidth_multiplier", 1.0);
      }
      config.policy.init_spread = policy.number("init_spread", config.policy.init_spread);
      policy.finish();
    }
    {
      ObjectReader mpc(root.require("mpc"), "mpc");
      config.mpc.horizon = mpc.required_integer("horizon");
      config.mpc.num_steps = mpc.required_integer("num_steps");
      config.mpc.iters_per_step = mpc.integer("iters_per_step", 1);
      config.mpc.warmup_iters = mpc.integer("warmup_iters", 0);
      config.mpc.num_samples = mpc.required_integer("num_samples");
      config.mpc.num_state_samples = mpc.integer("num_state_samples", 1);
      config.mpc.control_noise_std = mpc.required_number("control_noise_std");
      config.mpc.smoothing_alpha = mpc.number("smoothing_alpha", 0.0);
      mpc.finish();
    }
    if (root.has("single_stage")) fail("single_stage", "only used by the single-stage task");
  }

  {
    ObjectReader seeds(root.require("seeds"), "seeds");
    config.seeds.trial_seed = seeds.unsigned_integer("trial_seed", 0);
    config.seeds.eval_seed = seeds.unsigned_integer("eval_seed", 0);
    config.seeds.num_trials = seeds.integer("num_trials", 1);
    seeds.finish();
  }

  std::string default_name = std::string(to_string(config.task.kind)) + "-" +
                             to_string(config.method.kind);
  if (!is_single_stage) default_name += std::string("-") + to_string(config.policy.kind);
  config.name = root.string("name", default_name);

  root.finish();
  config.validate();
  return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config error at <root>: cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str());
}

// ---------------------------------------------------------------------------
// Canonical serialization and hashing
// ---------------------------------------------------------------------------

std::string canonical_json(const ExperimentConfig& config) {
  json root;
  root["name"] = config.name;
  root["task"] = {{"kind", to_string(config.task.kind)},
                  {"field_seed", config.task.field_seed}};

  json method{{"kind", to_string(config.method.kind)}};
  switch (config.method.kind) {
    case MethodKind::kTsallis: method["r"] = config.method.r; break;
    case MethodKind::kMppi: method["inv_lambda"] = config.method.inv_lambda; break;
    case MethodKind::kCem: method["smoothing_alpha"] = config.method.smoothing_alpha; break;
  }
  if (config.method.kind != MethodKind::kMppi) {
    if (std::isnan(config.method.gamma)) method["elite_fraction"] = config.method.elite_fraction;
    else method["gamma"] = config.method.gamma;
  }
  root["method"] = method;

  if (config.task.kind == TaskKind::kSingleStage) {
    root["single_stage"] = {{"num_seeds", config.single_stage.num_seeds},
                            {"num_samples", config.single_stage.num_samples}};
  } else {
    json policy{{"kind", to_string(config.policy.kind)},
                {"init_std", config.policy.init_std},
                {"variance_mode",
                 config.policy.variance_mode == VarianceMode::kAdaptive ? "adaptive" : "fixed"},
                {"variance_floor", config.policy.variance_floor}};
    if (!std::isnan(config.policy.init_spread)) policy["init_spread"] = config.policy.init_spread;
    if (config.policy.kind == PolicyKind::kGmm) {
      policy["components"] = config.policy.components;
      policy["em_iters"] = config.policy.em_iters;
    }
    if (config.policy.kind == PolicyKind::kStein) {
      policy["particles"] = config.policy.particles;
      policy["step_size"] = config.policy.step_size;
      policy["bandwidth_multiplier"] = config.policy.bandwidth_multiplier;
    }
    root["policy"] = policy;
    root["mpc"] = {{"horizon", config.mpc.horizon},
                   {"num_steps", config.mpc.num_steps},
                   {"iters_per_step", config.mpc.iters_per_step},
                   {"warmup_iters", config.mpc.warmup_iters > 0 ? config.mpc.warmup_iters
                                                                : config.mpc.iters_per_step},
                   {"num_samples", config.mpc.num_samples},
                   {"num_state_samples", config.mpc.num_state_samples},
                   {"control_noise_std", config.mpc.control_noise_std},
                   {"smoothing_alpha", config.mpc.smoothing_alpha}};
  }

  root["seeds"] = {{"trial_seed", config.seeds.trial_seed},
                   {"eval_seed", config.seeds.eval_seed},
                   {"num_trials", config.seeds.num_trials}};
  return root.dump();  // nlohmann::json orders keys, so the dump is canonical
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = canonical_json(config);
  std::uint64_t hash = 0xcbf29ce484222325ull;  // FNV-1a 64
  for (unsigned char byte : text) {
    hash ^= byte;
    hash *= 0x100000001b3ull;
  }
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(hash));
  return buffer;
}

void apply_override(ExperimentConfig& config, const std::string& name, double value) {
  if (name == "r") {
    config.method.r = value;
  } else if (name == "elite_fraction") {
    config.method.elite_fraction = value;
    config.method.gamma = std::numeric_limits<double>::quiet_NaN();
  } else if (name == "gamma") {
    config.method.gamma = value;
  } else if (name == "inv_lambda") {
    config.method.inv_lambda = value;
  } else if (name == "smoothing_alpha") {
    config.method.smoothing_alpha = value;
    config.mpc.smoothing_alpha = value;
  } else if (name == "init_std") {
    config.policy.init_std = value;
  } else if (name == "step_size") {
    config.policy.step_size = value;
  } else if (name == "bandwidth_multiplier") {
    config.policy.bandwidth_multiplier = value;
  } else if (name == "control_noise_std") {
    config.mpc.control_noise_std = value;
  } else {
    throw std::invalid_argument("apply_override: unknown parameter '" + name + "'");
  }
  config.validate();
}

}  // namespace tsmpc

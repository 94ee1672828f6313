#include "tsmpc/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tsmpc/analysis.hpp"
#include "tsmpc/config.hpp"
#include "tsmpc/mpc.hpp"
#include "tsmpc/parallel.hpp"
#include "tsmpc/rng.hpp"

namespace tsmpc {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Small shared helpers
// ---------------------------------------------------------------------------

std::string format_double(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string quoted = "\"";
  for (char c : field) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

std::string git_describe() {
  FILE* pipe = popen("git describe --always --dirty 2>/dev/null", "r");
  if (!pipe) return "unknown";
  char buffer[256];
  std::string result;
  while (fgets(buffer, sizeof(buffer), pipe)) result += buffer;
  pclose(pipe);
  while (!result.empty() && (result.back() == '\n' || result.back() == '\r'))
    result.pop_back();
  return result.empty() ? "unknown" : result;
}

int resolve_threads(const CliOptions& options) {
  if (const char* env = std::getenv("TSALLIS_MPC_THREADS")) {
    const int parsed = std::atoi(env);
    if (parsed >= 1) return parsed;
  }
  return options.threads >= 1 ? options.threads : default_thread_count();
}

namespace {

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path.string());
  out << content;
  if (!out) throw std::runtime_error("failed writing output file: " + path.string());
}

std::string metadata_line(const ExperimentConfig& config, std::uint64_t seed_offset) {
  std::ostringstream line;
  line << "# config_hash=" << config_hash(config) << " trial_seed=" << config.seeds.trial_seed
       << " eval_seed=" << config.seeds.eval_seed << " seed_offset=" << seed_offset << "\n";
  return line.str();
}

json seeds_json(const ExperimentConfig& config, std::uint64_t seed_offset) {
  return json{{"trial_seed", config.seeds.trial_seed},
              {"eval_seed", config.seeds.eval_seed},
              {"seed_offset", seed_offset},
              {"num_trials", config.seeds.num_trials}};
}

// Offsets are applied once, up front, so every downstream artifact (hash,
// metadata, streams) sees the shifted seeds.
ExperimentConfig load_shifted_config(const CliOptions& options) {
  if (options.config_path.empty())
    throw ConfigError("config error at <cli>: --config is required");
  ExperimentConfig config = load_experiment_config(options.config_path);
  config.seeds.trial_seed += options.seed_offset;
  config.seeds.eval_seed += options.seed_offset;
  return config;
}

EvalMetrics mpc_metrics(const TrialSetSummary& summary) {
  EvalMetrics metrics;
  metrics.mean_cost = summary.mean_cost;
  metrics.std_cost = summary.std_cost;
  return metrics;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct TrialRow {
  int trial;
  double realized_cost;
  bool crashed;
  int steps_to_goal;
};

std::string trials_csv(const ExperimentConfig& config, std::uint64_t seed_offset,
                       const std::vector<TrialRow>& rows) {
  std::ostringstream csv;
  csv << metadata_line(config, seed_offset);
  csv << "trial,realized_cost,crashed,steps_to_goal\n";
  for (const auto& row : rows)
    csv << row.trial << ',' << format_double(row.realized_cost) << ',' << (row.crashed ? 1 : 0)
        << ',' << row.steps_to_goal << '\n';
  return csv.str();
}

int run_mpc_task(const ExperimentConfig& config, const CliOptions& options, std::ostream& out) {
  const auto model = config.make_model();
  MpcConfig mpc = config.make_mpc_config(*model, config.seeds.trial_seed);
  mpc.threads = resolve_threads(options);
  const TrialSetSummary summary =
      run_trial_set(mpc, *model, config.seeds.num_trials, config.seeds.eval_seed);

  std::vector<TrialRow> rows;
  rows.reserve(summary.trials.size());
  int reached = 0;
  double steps_acc = 0.0;
  for (std::size_t i = 0; i < summary.trials.size(); ++i) {
    const TrialRecord& trial = summary.trials[i];
    rows.push_back({static_cast<int>(i), trial.total_cost, trial.crashed, trial.steps_to_goal});
    if (trial.steps_to_goal >= 0) {
      ++reached;
      steps_acc += trial.steps_to_goal;
    }
  }

  json metrics{{"mean_cost", summary.mean_cost},
               {"std_cost", summary.std_cost},
               {"crash_rate", summary.crash_rate},
               {"goal_rate", static_cast<double>(reached) / summary.trials.size()}};
  metrics["mean_steps_to_goal"] =
      reached > 0 ? json(steps_acc / reached) : json(nullptr);

  json summary_doc{{"name", config.name},
                   {"task", to_string(config.task.kind)},
                   {"method", to_string(config.method.kind)},
                   {"policy", to_string(config.policy.kind)},
                   {"config_hash", config_hash(config)},
                   {"git_describe", git_describe()},
                   {"seeds", seeds_json(config, options.seed_offset)},
                   {"metrics", metrics}};

  const fs::path dir(options.out_dir);
  fs::create_directories(dir);
  const fs::path csv_path = dir / (config.name + "_trials.csv");
  const fs::path json_path = dir / (config.name + "_summary.json");
  write_text_file(csv_path, trials_csv(config, options.seed_offset, rows));
  write_text_file(json_path, summary_doc.dump(2) + "\n");

  out << "wrote " << csv_path.string() << " and " << json_path.string()
      << " (mean_cost=" << format_double(summary.mean_cost)
      << " std_cost=" << format_double(summary.std_cost)
      << " crash_rate=" << format_double(summary.crash_rate) << ")\n";
  return 0;
}

int run_single_stage_task(const ExperimentConfig& config, const CliOptions& options,
                          std::ostream& out) {
  const SingleStageObjective objective;
  const CostTransform transform = config.method.to_transform();
  const auto batches =
      make_single_stage_batches(objective, config.single_stage.num_seeds,
                                config.single_stage.num_samples, config.seeds.trial_seed);

  std::vector<TrialRow> rows;
  rows.reserve(batches.size());
  std::vector<double> costs, errors;
  costs.reserve(batches.size());
  errors.reserve(batches.size());
  for (std::size_t s = 0; s < batches.size(); ++s) {
    // Single-batch evaluation reuses the exact scoring path of the sweep.
    const EvalMetrics seed_metrics =
        evaluate_single_stage(transform, objective, {batches[s]});
    rows.push_back({static_cast<int>(s), seed_metrics.mean_cost, false, -1});
    costs.push_back(seed_metrics.mean_cost);
    errors.push_back(seed_metrics.mean_control_error);
  }
  const MeanStd cost_stats = mean_std(costs);
  const MeanStd error_stats = mean_std(errors);

  json summary_doc{{"name", config.name},
                   {"task", to_string(config.task.kind)},
                   {"method", to_string(config.method.kind)},
                   {"config_hash", config_hash(config)},
                   {"git_describe", git_describe()},
                   {"seeds", json{{"trial_seed", config.seeds.trial_seed},
                                  {"seed_offset", options.seed_offset},
                                  {"num_seeds", config.single_stage.num_seeds},
                                  {"num_samples", config.single_stage.num_samples}}},
                   {"metrics", json{{"mean_cost", cost_stats.mean},
                                    {"std_cost", cost_stats.std},
                                    {"mean_control_error", error_stats.mean}}}};

  const fs::path dir(options.out_dir);
  fs::create_directories(dir);
  const fs::path csv_path = dir / (config.name + "_trials.csv");
  const fs::path json_path = dir / (config.name + "_summary.json");
  write_text_file(csv_path, trials_csv(config, options.seed_offset, rows));
  write_text_file(json_path, summary_doc.dump(2) + "\n");

  out << "wrote " << csv_path.string() << " and " << json_path.string()
      << " (mean_cost=" << format_double(cost_stats.mean)
      << " std_cost=" << format_double(cost_stats.std)
      << " mean_control_error=" << format_double(error_stats.mean) << ")\n";
  return 0;
}

}  // namespace

int cmd_run(const CliOptions& options, std::ostream& out, std::ostream& err) {
  try {
    const ExperimentConfig config = load_shifted_config(options);
    if (config.task.kind == TaskKind::kSingleStage)
      return run_single_stage_task(config, options, out);
    return run_mpc_task(config, options, out);
  } catch (const ConfigError& error) {
    err << error.what() << "\n";
    return 1;
  } catch (const std::exception& error) {
    err << "runtime error: " << error.what() << "\n";
    return 2;
  }
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

namespace {

struct SweepPlan {
  GridSpec grid;                    // grid mode
  std::vector<std::string> params;  // sensitivity mode
  double delta = 0.1;               // sensitivity mode
};

SweepPlan load_sweep_plan(const std::string& path, const std::string& mode) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config error at <grid>: cannot open '" + path + "'");
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& parse_err) {
    throw ConfigError(std::string("config error at <grid>: invalid JSON (") + parse_err.what() +
                      ")");
  }
  if (!root.is_object()) throw ConfigError("config error at <grid>: expected an object");

  SweepPlan plan;
  if (mode == "grid") {
    if (!root.contains("params") || !root["params"].is_object())
      throw ConfigError("config error at <grid>.params: expected an object of value lists");
    // nlohmann::json iterates keys in sorted order, fixing the parameter
    // order (and therefore row enumeration) independent of file layout.
    for (const auto& item : root["params"].items()) {
      if (!item.value().is_array() || item.value().empty())
        throw ConfigError("config error at <grid>.params." + item.key() +
                          ": expected a non-empty array of numbers");
      std::vector<double> values;
      for (const auto& v : item.value()) {
        if (!v.is_number())
          throw ConfigError("config error at <grid>.params." + item.key() +
                            ": expected numbers");
        values.push_back(v.get<double>());
      }
      plan.grid.names.push_back(item.key());
      plan.grid.values.push_back(std::move(values));
    }
    if (root.contains("budget")) {
      if (!root["budget"].is_number_unsigned())
        throw ConfigError("config error at <grid>.budget: expected a nonnegative integer");
      plan.grid.budget = root["budget"].get<std::size_t>();
    }
    for (const auto& item : root.items())
      if (item.key() != "params" && item.key() != "budget")
        throw ConfigError("config error at <grid>." + item.key() + ": unknown key");
    try {
      plan.grid.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config error at <grid>: ") + e.what());
    }
  } else if (mode == "sensitivity") {
    if (!root.contains("params") || !root["params"].is_array() || root["params"].empty())
      throw ConfigError("config error at <grid>.params: expected a non-empty array of names");
    for (const auto& v : root["params"]) {
      if (!v.is_string())
        throw ConfigError("config error at <grid>.params: expected parameter names");
      plan.params.push_back(v.get<std::string>());
    }
    if (root.contains("delta")) {
      if (!root["delta"].is_number())
        throw ConfigError("config error at <grid>.delta: expected a number");
      plan.delta = root["delta"].get<double>();
    }
    if (!(plan.delta > 0.0 && plan.delta < 1.0))
      throw ConfigError("config error at <grid>.delta: must lie in (0, 1)");
    for (const auto& item : root.items())
      if (item.key() != "params" && item.key() != "delta")
        throw ConfigError("config error at <grid>." + item.key() + ": unknown key");
  } else {
    throw ConfigError("config error at <cli>: --mode must be 'grid' or 'sensitivity'");
  }
  return plan;
}

double param_value(const ExperimentConfig& config, const std::string& name) {
  if (name == "r") return config.method.r;
  if (name == "elite_fraction") return config.method.elite_fraction;
  if (name == "gamma") return config.method.gamma;
  if (name == "inv_lambda") return config.method.inv_lambda;
  if (name == "smoothing_alpha") return config.method.smoothing_alpha;
  if (name == "init_std") return config.policy.init_std;
  if (name == "step_size") return config.policy.step_size;
  if (name == "bandwidth_multiplier") return config.policy.bandwidth_multiplier;
  if (name == "control_noise_std") return config.mpc.control_noise_std;
  throw ConfigError("config error at <grid>.params: unknown parameter '" + name + "'");
}

// Builds the metric evaluator for a sweep: single-stage sweeps share one set
// of sample batches across every grid point (paired seeds); MPC sweeps rerun
// the full trial set per point.
std::function<EvalMetrics(const std::vector<std::string>&, const GridAssignment&)>
make_evaluator(const ExperimentConfig& base, int threads,
               std::shared_ptr<std::vector<SingleStageBatch>>* batches_out) {
  if (base.task.kind == TaskKind::kSingleStage) {
    const SingleStageObjective objective;
    auto batches = std::make_shared<std::vector<SingleStageBatch>>(make_single_stage_batches(
        objective, base.single_stage.num_seeds, base.single_stage.num_samples,
        base.seeds.trial_seed));
    if (batches_out) *batches_out = batches;
    return [base, batches, objective](const std::vector<std::string>& names,
                                      const GridAssignment& assignment) {
      ExperimentConfig config = base;
      for (std::size_t p = 0; p < names.size(); ++p)
        apply_override(config, names[p], assignment[p]);
      return evaluate_single_stage(config.method.to_transform(), objective, *batches);
    };
  }
  auto model = std::shared_ptr<SystemModel>(base.make_model());
  return [base, model, threads](const std::vector<std::string>& names,
                                const GridAssignment& assignment) {
    ExperimentConfig config = base;
    for (std::size_t p = 0; p < names.size(); ++p)
      apply_override(config, names[p], assignment[p]);
    MpcConfig mpc = config.make_mpc_config(*model, config.seeds.trial_seed);
    mpc.threads = threads;
    return mpc_metrics(run_trial_set(mpc, *model, config.seeds.num_trials,
                                     config.seeds.eval_seed));
  };
}

std::map<std::size_t, EvalMetrics> load_checkpoint(const fs::path& path, std::size_t limit) {
  std::map<std::size_t, EvalMetrics> done;
  std::ifstream in(path);
  if (!in) return done;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string index_text, mean_text, std_text, err_text;
    if (!std::getline(fields, index_text, ',') || !std::getline(fields, mean_text, ',') ||
        !std::getline(fields, std_text, ',') || !std::getline(fields, err_text))
      continue;  // ignore torn lines from an interrupted write
    char* end = nullptr;
    const std::size_t index = std::strtoull(index_text.c_str(), &end, 10);
    if (end == index_text.c_str() || index >= limit) continue;
    EvalMetrics metrics;
    metrics.mean_cost = std::strtod(mean_text.c_str(), nullptr);
    metrics.std_cost = std::strtod(std_text.c_str(), nullptr);
    metrics.mean_control_error = std::strtod(err_text.c_str(), nullptr);
    done[index] = metrics;
  }
  return done;
}

std::string checkpoint_line(std::size_t index, const EvalMetrics& metrics) {
  std::ostringstream line;
  line << index << ',' << format_double(metrics.mean_cost) << ','
       << format_double(metrics.std_cost) << ',' << format_double(metrics.mean_control_error)
       << '\n';
  return line.str();
}

int sweep_grid(const ExperimentConfig& config, const CliOptions& options, const SweepPlan& plan,
               std::ostream& out) {
  const int threads = resolve_threads(options);
  const std::size_t total = plan.grid.size();
  const fs::path dir(options.out_dir);
  fs::create_directories(dir);
  const fs::path checkpoint_path = dir / (config.name + "_sweep_checkpoint.csv");

  auto evaluator = make_evaluator(config, threads, nullptr);

  std::map<std::size_t, EvalMetrics> done = load_checkpoint(checkpoint_path, total);
  const std::size_t resumed = done.size();
  {
    std::ofstream checkpoint(checkpoint_path, std::ios::app | std::ios::binary);
    if (!checkpoint)
      throw std::runtime_error("cannot open checkpoint: " + checkpoint_path.string());
    for (std::size_t i = 0; i < total; ++i) {
      if (done.contains(i)) continue;
      const EvalMetrics metrics = evaluator(plan.grid.names, grid_assignment(plan.grid, i));
      done[i] = metrics;
      checkpoint << checkpoint_line(i, metrics) << std::flush;
    }
  }

  // Assemble rows in enumeration order and pick the winners with the same
  // tie-breaking as grid_search.
  SweepResult result;
  result.rows.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    result.rows[i].assignment = grid_assignment(plan.grid, i);
    result.rows[i].metrics = done.at(i);
  }
  auto better = [](double metric_a, const GridAssignment& a, double metric_b,
                   const GridAssignment& b) {
    const bool a_ok = !std::isnan(metric_a);
    const bool b_ok = !std::isnan(metric_b);
    if (a_ok != b_ok) return a_ok;
    if (a_ok && metric_a != metric_b) return metric_a < metric_b;
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  };
  for (std::size_t i = 1; i < total; ++i) {
    if (better(result.rows[i].metrics.mean_cost, result.rows[i].assignment,
               result.rows[result.best_by_mean].metrics.mean_cost,
               result.rows[result.best_by_mean].assignment))
      result.best_by_mean = i;
    if (better(result.rows[i].metrics.std_cost, result.rows[i].assignment,
               result.rows[result.best_by_std].metrics.std_cost,
               result.rows[result.best_by_std].assignment))
      result.best_by_std = i;
  }

  std::ostringstream csv;
  csv << metadata_line(config, options.seed_offset);
  csv << "index";
  for (const auto& name : plan.grid.names) csv << ',' << csv_escape(name);
  csv << ",mean_cost,std_cost,mean_control_error\n";
  for (std::size_t i = 0; i < total; ++i) {
    csv << i;
    for (double v : result.rows[i].assignment) csv << ',' << format_double(v);
    csv << ',' << format_double(result.rows[i].metrics.mean_cost) << ','
        << format_double(result.rows[i].metrics.std_cost) << ','
        << format_double(result.rows[i].metrics.mean_control_error) << '\n';
  }

  auto row_json = [&](std::size_t i) {
    json assignment;
    for (std::size_t p = 0; p < plan.grid.names.size(); ++p)
      assignment[plan.grid.names[p]] = result.rows[i].assignment[p];
    return json{{"index", i},
                {"assignment", assignment},
                {"mean_cost", result.rows[i].metrics.mean_cost},
                {"std_cost", result.rows[i].metrics.std_cost},
                {"mean_control_error", result.rows[i].metrics.mean_control_error}};
  };
  json summary_doc{{"name", config.name},
                   {"mode", "grid"},
                   {"config_hash", config_hash(config)},
                   {"git_describe", git_describe()},
                   {"seeds", seeds_json(config, options.seed_offset)},
                   {"params", plan.grid.names},
                   {"rows", total},
                   {"resumed_rows", resumed},
                   {"best_by_mean", row_json(result.best_by_mean)},
                   {"best_by_std", row_json(result.best_by_std)}};

  const fs::path csv_path = dir / (config.name + "_sweep.csv");
  const fs::path json_path = dir / (config.name + "_sweep_summary.json");
  write_text_file(csv_path, csv.str());
  write_text_file(json_path, summary_doc.dump(2) + "\n");
  out << "wrote " << csv_path.string() << " and " << json_path.string() << " (" << total
      << " rows, " << resumed << " resumed)\n";
  return 0;
}

int sweep_sensitivity(const ExperimentConfig& config, const CliOptions& options,
                      const SweepPlan& plan, std::ostream& out) {
  const int threads = resolve_threads(options);
  auto evaluator = make_evaluator(config, threads, nullptr);

  GridAssignment base_values;
  base_values.reserve(plan.params.size());
  for (const auto& name : plan.params) base_values.push_back(param_value(config, name));

  const auto rows = sensitivity_sweep(
      plan.params, base_values, plan.delta,
      [&](const GridAssignment& assignment) { return evaluator(plan.params, assignment); });

  std::ostringstream csv;
  csv << metadata_line(config, options.seed_offset);
  csv << "param,value_minus,value_base,value_plus,mean_minus,mean_base,mean_plus,"
         "std_minus,std_base,std_plus,mean_variation_pct,std_variation_pct\n";
  for (const auto& row : rows) {
    csv << csv_escape(row.name) << ',' << format_double(row.value_minus) << ','
        << format_double(row.value_base) << ',' << format_double(row.value_plus) << ','
        << format_double(row.minus.mean_cost) << ',' << format_double(row.base.mean_cost) << ','
        << format_double(row.plus.mean_cost) << ',' << format_double(row.minus.std_cost) << ','
        << format_double(row.base.std_cost) << ',' << format_double(row.plus.std_cost) << ','
        << format_double(row.mean_variation_pct) << ',' << format_double(row.std_variation_pct)
        << '\n';
  }

  json rows_doc = json::array();
  for (const auto& row : rows)
    rows_doc.push_back(json{{"param", row.name},
                            {"mean_variation_pct", row.mean_variation_pct},
                            {"std_variation_pct", row.std_variation_pct}});
  json summary_doc{{"name", config.name},
                   {"mode", "sensitivity"},
                   {"delta", plan.delta},
                   {"config_hash", config_hash(config)},
                   {"git_describe", git_describe()},
                   {"seeds", seeds_json(config, options.seed_offset)},
                   {"rows", rows_doc}};

  const fs::path dir(options.out_dir);
  fs::create_directories(dir);
  const fs::path csv_path = dir / (config.name + "_sensitivity.csv");
  const fs::path json_path = dir / (config.name + "_sensitivity_summary.json");
  write_text_file(csv_path, csv.str());
  write_text_file(json_path, summary_doc.dump(2) + "\n");
  out << "wrote " << csv_path.string() << " and " << json_path.string() << " ("
      << rows.size() << " parameters)\n";
  return 0;
}

}  // namespace

int cmd_sweep(const CliOptions& options, std::ostream& out, std::ostream& err) {
  try {
    const ExperimentConfig config = load_shifted_config(options);
    if (options.grid_path.empty())
      throw ConfigError("config error at <cli>: --grid is required");
    const SweepPlan plan = load_sweep_plan(options.grid_path, options.mode);
    if (options.mode == "grid") return sweep_grid(config, options, plan, out);
    return sweep_sensitivity(config, options, plan, out);
  } catch (const ConfigError& error) {
    err << error.what() << "\n";
    return 1;
  } catch (const std::exception& error) {
    err << "runtime error: " << error.what() << "\n";
    return 2;
  }
}

// ---------------------------------------------------------------------------
// check: fast invariant self-test (the same properties the unit tests pin
// down, runnable from a deployed binary). --inject-fault exists to prove the
// harness can detect a broken invariant.
// ---------------------------------------------------------------------------

namespace {

struct CheckContext {
  bool flip_ara_sign = false;
};

bool check_deformed_inverse(std::string& detail) {
  for (double r : {0.5, 2.0, 5.0}) {
    for (double x = 0.1; x <= 10.0; x += 0.37) {
      const double roundtrip = exp_r(log_r(x, r), r);
      if (std::abs(roundtrip - x) > 1e-10 * std::max(1.0, std::abs(x))) {
        detail = "exp_r(log_r(x)) mismatch at x=" + format_double(x) + " r=" + format_double(r);
        return false;
      }
    }
  }
  return true;
}

bool check_tsallis_limits(std::string& detail) {
  RngStream rng(1234);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd costs(16);
    for (int i = 0; i < 16; ++i) costs(i) = rng.uniform();
    const std::span<const double> span(costs.data(), 16);
    const double gamma = resolve_gamma(span, EliteFraction{0.25});
    for (int i = 0; i < 16; ++i) {
      // Convergence at the elite boundary goes like ln(gap)/(r-1), so r must
      // be large enough to absorb the nextafter-sized gap of the threshold.
      const double tsallis = tsallis_likelihood(costs(i), gamma, 1e9);
      const double cem = costs(i) <= gamma ? 1.0 : 0.0;
      if (std::abs(tsallis - cem) > 1e-5) {
        detail = "r->inf limit differs from the indicator at cost " + format_double(costs(i));
        return false;
      }
    }
  }
  return true;
}

bool check_likelihood_monotone(std::string& detail) {
  RngStream rng(99);
  const std::vector<CostTransform> transforms = {
      TsallisTransform{1.5, EliteThreshold{0.9}}, TsallisTransform{8.0, EliteThreshold{0.5}},
      MppiTransform{3.0}, CemTransform{EliteThreshold{0.4}}};
  for (const auto& transform : transforms) {
    double prev = std::numeric_limits<double>::infinity();
    for (double cost = 0.0; cost <= 1.0; cost += 0.01) {
      const double lik = likelihood(transform, cost, needs_gamma(transform) ? 0.9 : 0.4);
      if (lik > prev + 1e-12) {
        detail = "likelihood increased at cost " + format_double(cost);
        return false;
      }
      prev = lik;
    }
  }
  (void)rng;
  return true;
}

bool check_elite_threshold(std::string& detail) {
  RngStream rng(777);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 3 + static_cast<int>(rng.uniform() * 40);
    Eigen::VectorXd costs(n);
    for (int i = 0; i < n; ++i) costs(i) = rng.uniform() * 10.0;
    const double fraction = 0.05 + 0.9 * rng.uniform();
    const auto k = static_cast<int>(std::ceil(fraction * n));
    const double gamma =
        resolve_gamma(std::span<const double>(costs.data(), n), EliteFraction{fraction});
    int strict = 0, weak = 0;
    for (int i = 0; i < n; ++i) {
      strict += costs(i) < gamma ? 1 : 0;
      weak += costs(i) <= gamma ? 1 : 0;
    }
    if (strict != k || weak != k) {  // draws have distinct costs a.s.
      detail = "elite count mismatch: k=" + std::to_string(k) +
               " strict=" + std::to_string(strict) + " weak=" + std::to_string(weak);
      return false;
    }
  }
  return true;
}

bool check_ara_consistency(const CheckContext& ctx, std::string& detail) {
  RngStream rng(424242);
  for (int rep = 0; rep < 40; ++rep) {
    const double r = 1.05 + 5.0 * rng.uniform();
    const double gamma = 0.5 + 2.5 * rng.uniform();
    const double cost = 0.85 * gamma * rng.uniform();
    const CostTransform transform = TsallisTransform{r, EliteThreshold{gamma}};
    double closed = ara_coefficient(transform, cost, gamma);
    if (ctx.flip_ara_sign) closed = -closed;
    // A step near eps^(1/4) balances truncation against roundoff in the
    // second-difference stencil; an absolute floor covers A ~ 0 near r = 2.
    const double numeric = ara_finite_difference(
        [&](double j) { return tsallis_likelihood(j, gamma, r); }, cost,
        1e-4 * std::max(1.0, gamma));
    const double scale = std::max(std::abs(closed), std::abs(numeric));
    if (std::abs(closed - numeric) > 1e-3 * scale + 1e-6) {
      detail = "Tsallis ARA mismatch: closed=" + format_double(closed) +
               " numeric=" + format_double(numeric) + " (r=" + format_double(r) + ")";
      return false;
    }
  }
  for (int rep = 0; rep < 10; ++rep) {
    const double inv_lambda = 0.2 + 5.0 * rng.uniform();
    const CostTransform transform = MppiTransform{inv_lambda};
    double closed = ara_coefficient(transform, 0.3, std::numeric_limits<double>::quiet_NaN());
    if (ctx.flip_ara_sign) closed = -closed;
    const double numeric = ara_finite_difference(
        [&](double j) { return std::exp(-inv_lambda * j); }, 0.3, 1e-4);
    if (std::abs(closed - numeric) > 1e-3 * std::abs(closed)) {
      detail = "exponential ARA mismatch: closed=" + format_double(closed) +
               " numeric=" + format_double(numeric);
      return false;
    }
  }
  return true;
}

bool check_ara_sign_law(std::string& detail) {
  // A(J) = -(r-2) / ((r-1)(gamma-J)) on J < gamma: positive (risk-seeking,
  // cost-minimization convention) below r = 2, negative above, zero at r = 2.
  const double gamma = 1.0;
  for (double cost : {0.0, 0.3, 0.7}) {
    const double below =
        ara_coefficient(TsallisTransform{1.5, EliteThreshold{gamma}}, cost, gamma);
    const double above =
        ara_coefficient(TsallisTransform{3.5, EliteThreshold{gamma}}, cost, gamma);
    const double at_two =
        ara_coefficient(TsallisTransform{2.0, EliteThreshold{gamma}}, cost, gamma);
    if (!(below > 0.0 && above < 0.0 && at_two == 0.0)) {
      detail = "sign law violated at cost " + format_double(cost);
      return false;
    }
  }
  return true;
}

bool check_weight_simplex(std::string& detail) {
  RngStream rng(31337);
  for (int rep = 0; rep < 30; ++rep) {
    Eigen::VectorXd lik(12);
    for (int i = 0; i < 12; ++i) lik(i) = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
    const EmpiricalWeights w = normalize_weights(lik);
    if (std::abs(w.value.sum() - 1.0) > 1e-12 || (w.value.array() < 0.0).any()) {
      detail = "weights left the simplex";
      return false;
    }
  }
  const EmpiricalWeights uniform = normalize_weights(Eigen::VectorXd::Zero(5));
  if (!uniform.degenerate || std::abs(uniform.value(0) - 0.2) > 1e-15) {
    detail = "all-zero likelihoods did not fall back to uniform";
    return false;
  }
  return true;
}

bool check_normalization_range(std::string& detail) {
  RngStream rng(5150);
  Eigen::MatrixXd costs(8, 3);
  for (int i = 0; i < costs.size(); ++i)
    *(costs.data() + i) = rng.uniform() * 100.0 - 20.0;
  costs(2, 1) = std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd normalized = normalize_costs(costs);
  if (normalized.minCoeff() < 0.0 || normalized.maxCoeff() > 1.0 ||
      normalized(2, 1) != 1.0) {
    detail = "normalized costs left [0, 1]";
    return false;
  }
  return true;
}

bool check_kernel_gradient(std::string& detail) {
  RngStream rng(2020);
  const int T = 4, nu = 2;
  std::vector<Eigen::MatrixXd> particles{rng.normal_matrix(T, nu), rng.normal_matrix(T, nu),
                                         rng.normal_matrix(T, nu)};
  const auto bandwidths = stein_bandwidths(particles, 1.0);
  Eigen::MatrixXd grad(T, nu);
  stein_kernel(particles[0], particles[1], bandwidths, &grad);
  for (int t = 0; t < T; ++t) {
    for (int d = 0; d < nu; ++d) {
      Eigen::MatrixXd hi = particles[0], lo = particles[0];
      hi(t, d) += 1e-6;
      lo(t, d) -= 1e-6;
      const double numeric = (stein_kernel(hi, particles[1], bandwidths) -
                              stein_kernel(lo, particles[1], bandwidths)) /
                             2e-6;
      if (std::abs(numeric - grad(t, d)) > 1e-6 * std::max(1.0, std::abs(numeric))) {
        detail = "kernel gradient mismatch at (" + std::to_string(t) + "," + std::to_string(d) +
                 ")";
        return false;
      }
    }
  }
  return true;
}

bool check_spd_updates(std::string& detail) {
  RngStream rng(11);
  GaussianPolicy policy = GaussianPolicy::isotropic(3, 2, 1.0, VarianceMode::kAdaptive, 1e-8);
  for (int rep = 0; rep < 10; ++rep) {
    ControlBatch batch;
    const int n = 6;
    for (int i = 0; i < n; ++i) batch.controls.push_back(rng.normal_matrix(3, 2));
    batch.labels = Eigen::VectorXi::Zero(n);
    Eigen::VectorXd lik = Eigen::VectorXd::Zero(n);
    lik(rep % n) = 1.0;  // one-hot: the scatter collapses to rank zero
    policy = gaussian_update(batch, normalize_weights(lik), policy, 0.0);
    for (const auto& cov : policy.cov) {
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() != Eigen::Success) {
        detail = "covariance lost positive definiteness under one-hot weights";
        return false;
      }
    }
  }
  return true;
}

}  // namespace

int cmd_check(const CliOptions& options, std::ostream& out, std::ostream& err) {
  CheckContext ctx;
  if (!options.inject_fault.empty()) {
    if (options.inject_fault == "ara-sign") {
      ctx.flip_ara_sign = true;
    } else {
      err << "config error at <cli>: unknown --inject-fault '" << options.inject_fault << "'\n";
      return 1;
    }
  }

  using Check = std::pair<const char*, std::function<bool(std::string&)>>;
  const std::vector<Check> checks = {
      {"deformed-inverse", check_deformed_inverse},
      {"tsallis-limits", check_tsallis_limits},
      {"likelihood-monotone", check_likelihood_monotone},
      {"elite-threshold", check_elite_threshold},
      {"ara-consistency", [&](std::string& d) { return check_ara_consistency(ctx, d); }},
      {"ara-sign-law", check_ara_sign_law},
      {"weight-simplex", check_weight_simplex},
      {"normalization-range", check_normalization_range},
      {"kernel-gradient", check_kernel_gradient},
      {"spd-updates", check_spd_updates},
  };

  int failures = 0;
  for (const auto& [name, run] : checks) {
    std::string detail;
    bool ok = false;
    try {
      ok = run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    if (ok) {
      out << "ok   " << name << "\n";
    } else {
      ++failures;
      out << "FAIL " << name << (detail.empty() ? "" : ": " + detail) << "\n";
    }
  }
  out << (failures == 0 ? "all checks passed" : std::to_string(failures) + " check(s) failed")
      << "\n";
  return failures == 0 ? 0 : 2;
}

}  // namespace tsmpc

#include "tsmpc/analysis.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "tsmpc/parallel.hpp"
#include "tsmpc/policy.hpp"
#include "tsmpc/rng.hpp"
#include "tsmpc/rollout.hpp"

namespace tsmpc {

namespace {
constexpr std::uint64_t kSingleStageTag = 0x51e6ea7ull;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}  // namespace

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean_std: empty input");
  MeanStd out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double acc = 0.0;
    for (double v : values) acc += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(acc / static_cast<double>(values.size() - 1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Single-stage experiment
// ---------------------------------------------------------------------------

std::vector<SingleStageBatch> make_single_stage_batches(const SingleStageObjective& objective,
                                                        int num_seeds, int num_samples,
                                                        std::uint64_t seed_base) {
  if (num_seeds < 1) throw std::invalid_argument("make_single_stage_batches: num_seeds >= 1");
  if (num_samples < 2)
    throw std::invalid_argument("make_single_stage_batches: num_samples >= 2");

  std::vector<SingleStageBatch> batches(num_seeds);
  for (int s = 0; s < num_seeds; ++s) {
    RngStream rng(mix_seed({seed_base, kSingleStageTag, static_cast<std::uint64_t>(s)}));
    SingleStageBatch& batch = batches[s];
    batch.u.resize(num_samples);
    batch.cost.resize(num_samples);
    for (int i = 0; i < num_samples; ++i)
      batch.u(i) = rng.uniform(SingleStageObjective::kDomainLo, SingleStageObjective::kDomainHi);
    for (int i = 0; i < num_samples; ++i)
      batch.cost(i) = objective.cost(batch.u(i), rng.normal());
    batch.normalized = normalize_costs(batch.cost);
  }
  return batches;
}

EvalMetrics evaluate_single_stage(const CostTransform& transform,
                                  const SingleStageObjective& objective,
                                  const std::vector<SingleStageBatch>& batches) {
  if (batches.empty()) throw std::invalid_argument("evaluate_single_stage: no batches");
  std::vector<double> costs;
  std::vector<double> errors;
  costs.reserve(batches.size());
  errors.reserve(batches.size());

  for (const auto& batch : batches) {
    const double gamma = resolve_gamma(
        transform,
        std::span<const double>(batch.normalized.data(),
                                static_cast<std::size_t>(batch.normalized.size())));
    Eigen::VectorXd lik(batch.normalized.size());
    for (Eigen::Index i = 0; i < lik.size(); ++i)
      lik(i) = likelihood(transform, batch.normalized(i), gamma);
    const EmpiricalWeights w = normalize_weights(lik);
    // Fixed-variance Gaussian update law over a single timestep: the weighted
    // sample mean. There is no previous parameter iterate here, so smoothing
    // does not apply.
    const double u_updated = w.value.dot(batch.u);
    costs.push_back(objective.noiseless(u_updated));
    errors.push_back(std::abs(u_updated - kSingleStageOptimum));
  }

  const MeanStd cost_stats = mean_std(costs);
  EvalMetrics metrics;
  metrics.mean_cost = cost_stats.mean;
  metrics.std_cost = cost_stats.std;
  metrics.mean_control_error = mean_std(errors).mean;
  return metrics;
}

EvalMetrics run_single_stage(const CostTransform& transform,
                             const SingleStageObjective& objective, int num_seeds,
                             int num_samples, std::uint64_t seed_base) {
  return evaluate_single_stage(transform, objective,
                               make_single_stage_batches(objective, num_seeds, num_samples,
                                                         seed_base));
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

std::size_t GridSpec::size() const {
  std::size_t n = 1;
  for (const auto& list : values) n *= list.size();
  return values.empty() ? 0 : n;
}

void GridSpec::validate() const {
  if (names.empty()) throw std::invalid_argument("GridSpec: no parameters");
  if (names.size() != values.size())
    throw std::invalid_argument("GridSpec: names/values size mismatch");
  for (const auto& list : values)
    if (list.empty()) throw std::invalid_argument("GridSpec: empty value list");
  if (budget == 0) throw std::invalid_argument("GridSpec: zero budget");
  if (size() > budget)
    throw std::invalid_argument("GridSpec: grid size exceeds the configured budget");
}

GridAssignment grid_assignment(const GridSpec& spec, std::size_t index) {
  GridAssignment assignment(spec.names.size());
  for (std::size_t p = spec.names.size(); p-- > 0;) {
    const auto& list = spec.values[p];
    assignment[p] = list[index % list.size()];
    index /= list.size();
  }
  return assignment;
}

namespace {

// metric-then-assignment ordering; NaN sorts last.
bool row_better(double metric_a, const GridAssignment& a, double metric_b,
                const GridAssignment& b) {
  const bool a_ok = !std::isnan(metric_a);
  const bool b_ok = !std::isnan(metric_b);
  if (a_ok != b_ok) return a_ok;
  if (a_ok && metric_a != metric_b) return metric_a < metric_b;
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

SweepResult grid_search(const GridSpec& spec,
                        const std::function<EvalMetrics(const GridAssignment&)>& evaluate,
                        int threads) {
  spec.validate();
  const std::size_t total = spec.size();

  SweepResult result;
  result.rows.resize(total);
  parallel_for(static_cast<std::int64_t>(total), threads, [&](std::int64_t i) {
    const auto idx = static_cast<std::size_t>(i);
    result.rows[idx].assignment = grid_assignment(spec, idx);
    result.rows[idx].metrics = evaluate(result.rows[idx].assignment);
  });

  for (std::size_t i = 1; i < total; ++i) {
    const auto& row = result.rows[i];
    const auto& mean_best = result.rows[result.best_by_mean];
    if (row_better(row.metrics.mean_cost, row.assignment, mean_best.metrics.mean_cost,
                   mean_best.assignment))
      result.best_by_mean = i;
    const auto& std_best = result.rows[result.best_by_std];
    if (row_better(row.metrics.std_cost, row.assignment, std_best.metrics.std_cost,
                   std_best.assignment))
      result.best_by_std = i;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Sensitivity analysis
// ---------------------------------------------------------------------------

double variation_pct(double value_plus, double value_minus, double value_base) {
  if (value_base == 0.0) return kNaN;
  return (value_plus + value_minus - 2.0 * value_base) / (2.0 * value_base) * 100.0;
}

std::vector<SensitivityRow> sensitivity_sweep(
    const std::vector<std::string>& names, const GridAssignment& base_values, double delta,
    const std::function<EvalMetrics(const GridAssignment&)>& evaluate) {
  if (names.empty()) throw std::invalid_argument("sensitivity_sweep: no parameters");
  if (names.size() != base_values.size())
    throw std::invalid_argument("sensitivity_sweep: names/base size mismatch");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("sensitivity_sweep: delta must lie in (0, 1)");

  const EvalMetrics base_metrics = evaluate(base_values);

  std::vector<SensitivityRow> rows;
  rows.reserve(names.size());
  for (std::size_t p = 0; p < names.size(); ++p) {
    SensitivityRow row;
    row.name = names[p];
    row.value_base = base_values[p];
    row.value_minus = base_values[p] * (1.0 - delta);
    row.value_plus = base_values[p] * (1.0 + delta);
    row.base = base_metrics;

    GridAssignment perturbed = base_values;
    perturbed[p] = row.value_minus;
    row.minus = evaluate(perturbed);
    perturbed[p] = row.value_plus;
    row.plus = evaluate(perturbed);

    row.mean_variation_pct =
        variation_pct(row.plus.mean_cost, row.minus.mean_cost, row.base.mean_cost);
    row.std_variation_pct =
        variation_pct(row.plus.std_cost, row.minus.std_cost, row.base.std_cost);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace tsmpc

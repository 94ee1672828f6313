#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tsmpc/systems.hpp"
#include "tsmpc/transforms.hpp"

namespace tsmpc {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1), 0 for n == 1
};

// Two-pass mean and sample standard deviation.
MeanStd mean_std(std::span<const double> values);

// Metrics aggregated over evaluation seeds/trials. mean_control_error is only
// meaningful for the single-stage experiment (NaN otherwise).
struct EvalMetrics {
  double mean_cost = 0.0;
  double std_cost = 0.0;
  double mean_control_error = std::numeric_limits<double>::quiet_NaN();
};

// ---------------------------------------------------------------------------
// Single-stage stochastic optimization experiment.
//
// Per seed: 64 (configurable) controls drawn uniformly over the domain, each
// observed once under additive cost noise; costs are batch-normalized, pushed
// through the likelihood shape, and the fixed-variance Gaussian update (the
// weighted sample mean) produces the updated control, scored on the noiseless
// objective. The sample draws depend only on the seed, never on the method,
// so competing transforms see identical batches (paired comparison).
// ---------------------------------------------------------------------------

struct SingleStageBatch {
  Eigen::VectorXd u;           // sampled controls
  Eigen::VectorXd cost;        // noisy observed costs
  Eigen::VectorXd normalized;  // batch-normalized costs in [0, 1]
};

std::vector<SingleStageBatch> make_single_stage_batches(const SingleStageObjective& objective,
                                                        int num_seeds, int num_samples,
                                                        std::uint64_t seed_base);

// Scores one transform on precomputed batches (reuse the batches to sweep
// many transforms against identical draws).
EvalMetrics evaluate_single_stage(const CostTransform& transform,
                                  const SingleStageObjective& objective,
                                  const std::vector<SingleStageBatch>& batches);

// Convenience: batches + evaluation in one call.
EvalMetrics run_single_stage(const CostTransform& transform,
                             const SingleStageObjective& objective, int num_seeds,
                             int num_samples, std::uint64_t seed_base);

// ---------------------------------------------------------------------------
// Hyperparameter grid search.
// ---------------------------------------------------------------------------

// Cartesian product of named value lists, enumerated row-major (the last
// parameter varies fastest), capped by an explicit budget.
struct GridSpec {
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;  // parallel to names, each non-empty
  std::size_t budget = 262144;

  std::size_t size() const;
  void validate() const;
};

using GridAssignment = std::vector<double>;  // one value per GridSpec name

GridAssignment grid_assignment(const GridSpec& spec, std::size_t index);

struct SweepRow {
  GridAssignment assignment;
  EvalMetrics metrics;
};

struct SweepResult {
  std::vector<SweepRow> rows;    // enumeration order
  std::size_t best_by_mean = 0;  // row index minimizing mean_cost
  std::size_t best_by_std = 0;   // row index minimizing std_cost
};

// Evaluates every grid point. Ties on the metric are broken toward the
// lexicographically smallest assignment, so the winner does not depend on
// enumeration or thread scheduling. NaN metrics lose against any finite one.
SweepResult grid_search(const GridSpec& spec,
                        const std::function<EvalMetrics(const GridAssignment&)>& evaluate,
                        int threads = 1);

// ---------------------------------------------------------------------------
// Local sensitivity analysis.
// ---------------------------------------------------------------------------

struct SensitivityRow {
  std::string name;
  double value_minus = 0.0;
  double value_base = 0.0;
  double value_plus = 0.0;
  EvalMetrics minus, base, plus;
  // Signed average relative change of the metric across the +/- perturbation:
  //   (v_plus + v_minus - 2 v_base) / (2 v_base) * 100
  double mean_variation_pct = 0.0;
  double std_variation_pct = 0.0;
};

double variation_pct(double value_plus, double value_minus, double value_base);

// Perturbs each named parameter by a relative +/- delta around base_values
// (all other parameters held at base) and reports the metric variations. The
// base point is evaluated once. Perturbed values that make the configuration
// invalid surface as exceptions from the evaluator.
std::vector<SensitivityRow> sensitivity_sweep(
    const std::vector<std::string>& names, const GridAssignment& base_values, double delta,
    const std::function<EvalMetrics(const GridAssignment&)>& evaluate);

}  // namespace tsmpc

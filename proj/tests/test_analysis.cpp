#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "oracles.hpp"
#include "tsmpc/analysis.hpp"
#include "tsmpc/policy.hpp"
#include "tsmpc/rng.hpp"
#include "tsmpc/transforms.hpp"

using namespace tsmpc;

namespace {

// Re-derives the per-batch updated control of the single-stage pipeline.
double recompute_updated_control(const CostTransform& transform,
                                 const SingleStageBatch& batch) {
  const std::span<const double> normalized(batch.normalized.data(),
                                           static_cast<std::size_t>(batch.normalized.size()));
  const double gamma = resolve_gamma(transform, normalized);
  Eigen::VectorXd lik(batch.normalized.size());
  for (Eigen::Index i = 0; i < lik.size(); ++i)
    lik(i) = likelihood(transform, batch.normalized(i), gamma);
  return normalize_weights(lik).value.dot(batch.u);
}

EvalMetrics quadratic_metrics(const GridAssignment& a) {
  EvalMetrics m;
  m.mean_cost = (a[0] - 3.0) * (a[0] - 3.0);
  m.std_cost = std::abs(a[0] - 4.0);
  return m;
}

}  // namespace

TEST_SUITE("analysis") {
  TEST_CASE("mean_std matches the two-pass oracle") {
    RngStream rng(8301);
    for (int rep = 0; rep < 5; ++rep) {
      std::vector<double> values;
      for (int i = 0; i < 17; ++i) values.push_back(rng.uniform(-3.0, 9.0));
      const MeanStd stats = mean_std(values);
      CHECK(stats.mean == doctest::Approx(oracle::mean_of(values)).epsilon(1e-12));
      CHECK(stats.std == doctest::Approx(oracle::sample_std(values)).epsilon(1e-12));
    }
    const std::vector<double> single = {4.2};
    CHECK(mean_std(single).mean == 4.2);
    CHECK(mean_std(single).std == 0.0);
    CHECK_THROWS_AS(mean_std(std::vector<double>{}), std::invalid_argument);
  }

  TEST_CASE("single-stage batches are deterministic and paired") {
    const SingleStageObjective objective;
    const auto first = make_single_stage_batches(objective, 6, 32, 7000);
    const auto second = make_single_stage_batches(objective, 6, 32, 7000);
    REQUIRE(first.size() == 6);
    for (std::size_t s = 0; s < first.size(); ++s) {
      CHECK((first[s].u - second[s].u).cwiseAbs().maxCoeff() == 0.0);
      CHECK((first[s].cost - second[s].cost).cwiseAbs().maxCoeff() == 0.0);
      CHECK((first[s].normalized - second[s].normalized).cwiseAbs().maxCoeff() == 0.0);

      CHECK(first[s].u.minCoeff() >= -5.0);
      CHECK(first[s].u.maxCoeff() <= 5.0);
      CHECK(first[s].normalized.minCoeff() == 0.0);
      CHECK(first[s].normalized.maxCoeff() == 1.0);

      // Normalization is the affine rescale of the observed costs.
      const double lo = first[s].cost.minCoeff();
      const double hi = first[s].cost.maxCoeff();
      for (Eigen::Index i = 0; i < first[s].cost.size(); ++i)
        CHECK(first[s].normalized(i) ==
              doctest::Approx((first[s].cost(i) - lo) / (hi - lo)).epsilon(1e-15));
    }
    // Different seeds in the family produce different draws.
    CHECK((first[0].u - first[1].u).cwiseAbs().maxCoeff() > 0.0);

    CHECK_THROWS_AS(make_single_stage_batches(objective, 0, 32, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_single_stage_batches(objective, 4, 1, 1), std::invalid_argument);
  }

  TEST_CASE("single-stage evaluation matches a full pipeline recompute") {
    const SingleStageObjective objective;
    const auto batches = make_single_stage_batches(objective, 24, 64, 9100);

    for (const CostTransform& transform :
         {CostTransform{TsallisTransform{3.0, EliteFraction{0.2}}},
          CostTransform{MppiTransform{8.0}},
          CostTransform{CemTransform{EliteFraction{0.125}}}}) {
      std::vector<double> costs;
      std::vector<double> errors;
      for (const auto& batch : batches) {
        const double u_updated = recompute_updated_control(transform, batch);
        costs.push_back(objective.noiseless(u_updated));
        errors.push_back(std::abs(u_updated - kSingleStageOptimum));
      }
      const EvalMetrics metrics = evaluate_single_stage(transform, objective, batches);
      CHECK(metrics.mean_cost == doctest::Approx(oracle::mean_of(costs)).epsilon(1e-12));
      CHECK(metrics.std_cost == doctest::Approx(oracle::sample_std(costs)).epsilon(1e-12));
      CHECK(metrics.mean_control_error ==
            doctest::Approx(oracle::mean_of(errors)).epsilon(1e-12));
    }

    const EvalMetrics composed = run_single_stage(
        CostTransform{MppiTransform{8.0}}, objective, 24, 64, 9100);
    const EvalMetrics direct =
        evaluate_single_stage(CostTransform{MppiTransform{8.0}}, objective, batches);
    CHECK(composed.mean_cost == direct.mean_cost);
    CHECK(composed.std_cost == direct.std_cost);
  }

  TEST_CASE("CEM update stays inside the elite hull on noiseless batches") {
    SingleStageObjective noiseless = SingleStageObjective{};
    noiseless.noise_scale = 0.0;
    const auto batches = make_single_stage_batches(noiseless, 20, 48, 9200);
    const CostTransform cem = CemTransform{EliteFraction{0.25}};

    for (const auto& batch : batches) {
      const std::span<const double> normalized(
          batch.normalized.data(), static_cast<std::size_t>(batch.normalized.size()));
      const double gamma = resolve_gamma(cem, normalized);
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (Eigen::Index i = 0; i < batch.u.size(); ++i) {
        if (batch.normalized(i) <= gamma) {
          lo = std::min(lo, batch.u(i));
          hi = std::max(hi, batch.u(i));
        }
      }
      const double u_updated = recompute_updated_control(cem, batch);
      CHECK(u_updated >= lo);
      CHECK(u_updated <= hi);
    }
  }

  TEST_CASE("vanishing inverse temperature recovers the unweighted mean") {
    const SingleStageObjective objective;
    const auto batches = make_single_stage_batches(objective, 10, 64, 9300);
    const CostTransform flat = MppiTransform{1e-12};
    for (const auto& batch : batches) {
      const double u_updated = recompute_updated_control(flat, batch);
      CHECK(u_updated == doctest::Approx(batch.u.mean()).epsilon(1e-9));
    }
  }

  TEST_CASE("single-stage qualitative ordering at representative settings") {
    const SingleStageObjective objective;
    const auto batches = make_single_stage_batches(objective, 256, 64, 9400);
    const EvalMetrics tsallis = evaluate_single_stage(
        CostTransform{TsallisTransform{2.0, EliteFraction{0.1}}}, objective, batches);
    const EvalMetrics mppi =
        evaluate_single_stage(CostTransform{MppiTransform{5.0}}, objective, batches);
    CHECK(tsallis.mean_cost < mppi.mean_cost);
    CHECK(tsallis.std_cost < mppi.std_cost);
  }

  TEST_CASE("grid enumeration is row-major with the last parameter fastest") {
    GridSpec spec;
    spec.names = {"a", "b"};
    spec.values = {{1.0, 2.0}, {10.0, 20.0, 30.0}};
    CHECK(spec.size() == 6);
    CHECK_NOTHROW(spec.validate());

    CHECK(grid_assignment(spec, 0) == GridAssignment{1.0, 10.0});
    CHECK(grid_assignment(spec, 1) == GridAssignment{1.0, 20.0});
    CHECK(grid_assignment(spec, 2) == GridAssignment{1.0, 30.0});
    CHECK(grid_assignment(spec, 3) == GridAssignment{2.0, 10.0});
    CHECK(grid_assignment(spec, 4) == GridAssignment{2.0, 20.0});
    CHECK(grid_assignment(spec, 5) == GridAssignment{2.0, 30.0});
  }

  TEST_CASE("grid specs reject malformed shapes and budget overruns") {
    GridSpec spec;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.names = {"a", "b"};
    spec.values = {{1.0}};
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.values = {{1.0}, {}};
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.values = {{1.0}, {2.0, 3.0}};
    spec.budget = 0;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.budget = 1;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.budget = 2;
    CHECK_NOTHROW(spec.validate());
  }

  TEST_CASE("grid search finds a known quadratic minimum") {
    GridSpec spec;
    spec.names = {"x"};
    spec.values = {{0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0}};
    const SweepResult result = grid_search(spec, quadratic_metrics, 1);
    REQUIRE(result.rows.size() == 7);
    for (std::size_t i = 0; i < 7; ++i)
      CHECK(result.rows[i].assignment[0] == static_cast<double>(i));
    CHECK(result.best_by_mean == 3);
    CHECK(result.best_by_std == 4);

    // Thread count changes neither the rows nor the winners.
    const SweepResult threaded = grid_search(spec, quadratic_metrics, 4);
    CHECK(threaded.best_by_mean == result.best_by_mean);
    CHECK(threaded.best_by_std == result.best_by_std);
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(threaded.rows[i].metrics.mean_cost == result.rows[i].metrics.mean_cost);
      CHECK(threaded.rows[i].metrics.std_cost == result.rows[i].metrics.std_cost);
    }
  }

  TEST_CASE("singleton grids, NaN metrics, and ties") {
    GridSpec singleton;
    singleton.names = {"x"};
    singleton.values = {{2.5}};
    const SweepResult one = grid_search(singleton, quadratic_metrics, 1);
    REQUIRE(one.rows.size() == 1);
    CHECK(one.best_by_mean == 0);
    CHECK(one.best_by_std == 0);

    // A NaN metric can never win against a finite one.
    GridSpec spec;
    spec.names = {"x"};
    spec.values = {{0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0}};
    const SweepResult no_nan = grid_search(
        spec,
        [](const GridAssignment& a) {
          EvalMetrics m = quadratic_metrics(a);
          if (a[0] == 3.0) m.mean_cost = std::numeric_limits<double>::quiet_NaN();
          return m;
        },
        1);
    // (2-3)^2 == (4-3)^2: the tie breaks toward the smaller assignment.
    CHECK(no_nan.best_by_mean == 2);

    GridSpec unordered;
    unordered.names = {"x"};
    unordered.values = {{5.0, 1.0}};
    const SweepResult tie = grid_search(
        unordered,
        [](const GridAssignment&) {
          EvalMetrics m;
          m.mean_cost = 7.0;
          m.std_cost = 7.0;
          return m;
        },
        1);
    CHECK(tie.best_by_mean == 1);  // assignment {1} is lexicographically smaller
    CHECK(tie.best_by_std == 1);
  }

  TEST_CASE("variation percentage formula") {
    CHECK(variation_pct(1.2, 0.9, 1.0) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(std::isnan(variation_pct(1.0, 1.0, 0.0)));
    // Symmetric perturbations of a linear response cancel exactly.
    CHECK(std::abs(variation_pct(1.1 * 4.0, 0.9 * 4.0, 4.0)) < 1e-12);
    // A quadratic response leaves the second-order term delta^2 * 100.
    CHECK(variation_pct(1.1 * 1.1, 0.9 * 0.9, 1.0) ==
          doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("variation percentages reproduce recorded sensitivity cells") {
    // Recorded (minus, base, plus) metric triples and the rounded variation
    // percentages they must reproduce.
    struct Cell {
      double minus, base, plus, expected;
    };
    const std::vector<Cell> cells = {
        {30294.44, 30023.73, 30143.85, 0.65},  // exponential-shape temperature, mean
        {3499.19, 3644.07, 4273.51, 6.65},     // exponential-shape temperature, std
        {35557.07, 34617.47, 34427.06, 1.08},  // elite-threshold shape, mean
        {1753.46, 2523.34, 2654.51, -12.66},   // elite-threshold shape, std
        {28806.34, 28714.70, 28571.64, -0.09}, // power-shape threshold, mean
        {531.61, 570.20, 591.37, -1.53},       // power-shape threshold, std
        {28873.70, 28714.70, 28535.40, -0.04}, // power-shape order, mean
        {572.90, 570.20, 657.00, 7.85},        // power-shape order, std
    };
    for (const Cell& cell : cells)
      CHECK(std::abs(variation_pct(cell.plus, cell.minus, cell.base) - cell.expected) <
            0.005);
  }

  TEST_CASE("sensitivity sweep structure and propagation of evaluator errors") {
    int calls = 0;
    const auto evaluate = [&calls](const GridAssignment& a) {
      ++calls;
      EvalMetrics m;
      m.mean_cost = a[0] * a[0] + a[1];
      m.std_cost = a[0] + 2.0 * a[1];
      return m;
    };

    const std::vector<SensitivityRow> rows =
        sensitivity_sweep({"p", "q"}, {2.0, 4.0}, 0.25, evaluate);
    REQUIRE(rows.size() == 2);
    CHECK(calls == 5);  // one base evaluation plus two per parameter
    CHECK(rows[0].name == "p");
    CHECK(rows[0].value_minus == 1.5);
    CHECK(rows[0].value_base == 2.0);
    CHECK(rows[0].value_plus == 2.5);
    CHECK(rows[1].value_minus == 3.0);
    CHECK(rows[1].value_plus == 5.0);

    // Rows recompute exactly from their own stored metrics.
    for (const SensitivityRow& row : rows) {
      CHECK(row.mean_variation_pct ==
            variation_pct(row.plus.mean_cost, row.minus.mean_cost, row.base.mean_cost));
      CHECK(row.std_variation_pct ==
            variation_pct(row.plus.std_cost, row.minus.std_cost, row.base.std_cost));
    }
    // Base point evaluated once and shared.
    CHECK(rows[0].base.mean_cost == rows[1].base.mean_cost);

    CHECK_THROWS_AS(sensitivity_sweep({}, {}, 0.1, evaluate), std::invalid_argument);
    CHECK_THROWS_AS(sensitivity_sweep({"p"}, {1.0, 2.0}, 0.1, evaluate),
                    std::invalid_argument);
    CHECK_THROWS_AS(sensitivity_sweep({"p"}, {1.0}, 0.0, evaluate), std::invalid_argument);
    CHECK_THROWS_AS(sensitivity_sweep({"p"}, {1.0}, 1.0, evaluate), std::invalid_argument);

    const auto throwing = [](const GridAssignment& a) -> EvalMetrics {
      if (a[0] > 1.05) throw std::domain_error("parameter left its validity range");
      return EvalMetrics{};
    };
    CHECK_THROWS_AS(sensitivity_sweep({"p"}, {1.0}, 0.1, throwing), std::domain_error);
  }
}

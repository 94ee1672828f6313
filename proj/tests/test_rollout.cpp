#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "oracles.hpp"
#include "tsmpc/rng.hpp"
#include "tsmpc/rollout.hpp"
#include "tsmpc/systems.hpp"
#include "tsmpc/transforms.hpp"

using namespace tsmpc;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<Eigen::MatrixXd> random_controls(int n, int horizon, int control_dim,
                                             double scale, RngStream& rng) {
  std::vector<Eigen::MatrixXd> controls;
  for (int i = 0; i < n; ++i) controls.push_back(scale * rng.normal_matrix(horizon, control_dim));
  return controls;
}

Eigen::MatrixXd matrix2x2(double a, double b, double c, double d) {
  Eigen::MatrixXd m(2, 2);
  m << a, b, c, d;
  return m;
}

}  // namespace

TEST_SUITE("rollout") {
  TEST_CASE("replicate_state produces an n-major grid") {
    Eigen::VectorXd x0(2);
    x0 << 1.0, -2.0;
    const std::vector<Eigen::VectorXd> grid = replicate_state(x0, 3, 2);
    REQUIRE(grid.size() == 6);
    for (const auto& x : grid) CHECK((x - x0).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(replicate_state(x0, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(replicate_state(x0, 1, 0), std::invalid_argument);
  }

  TEST_CASE("noise-free rollouts replicate the deterministic trajectory cost") {
    const PlanarNavigation planar{std::vector<Obstacle2D>{}};
    RngStream rng(8201);
    const int n = 6;
    const int horizon = 10;
    const std::vector<Eigen::MatrixXd> controls =
        random_controls(n, horizon, 2, 5.0, rng);

    NoiseConfig quiet;
    quiet.sigma_eps = 0.0;
    const Eigen::MatrixXd costs =
        rollout_batch(planar, replicate_state(planar.initial_state(), n, 2), controls,
                      quiet, 99, 0, 0);
    REQUIRE(costs.rows() == n);
    REQUIRE(costs.cols() == 2);

    for (int i = 0; i < n; ++i) {
      // Both state-sample columns see the same noise-free trajectory.
      CHECK(costs(i, 0) == costs(i, 1));
      Eigen::MatrixXd states(horizon + 1, 4);
      Eigen::VectorXd x = planar.initial_state();
      states.row(0) = x.transpose();
      for (int t = 0; t < horizon; ++t) {
        x = planar.step(x, controls[i].row(t).transpose());
        states.row(t + 1) = x.transpose();
      }
      CHECK(costs(i, 0) == planar.trajectory_cost(states, controls[i]));
    }
  }

  TEST_CASE("zero-control rollout reproduces the planar closed form") {
    const PlanarNavigation planar{std::vector<Obstacle2D>{}};
    const int horizon = 25;
    const std::vector<Eigen::MatrixXd> controls(4, Eigen::MatrixXd::Zero(horizon, 2));
    NoiseConfig quiet;
    const Eigen::MatrixXd costs =
        rollout_batch(planar, replicate_state(planar.initial_state(), 4, 1), controls,
                      quiet, 1, 0, 0);
    for (int i = 0; i < 4; ++i)
      CHECK(costs(i, 0) == doctest::Approx(324.0 * horizon + 162.0).epsilon(1e-10));
  }

  TEST_CASE("noise-free batches are invariant to sample order") {
    const PlanarNavigation planar{std::vector<Obstacle2D>{}};
    RngStream rng(8202);
    std::vector<Eigen::MatrixXd> controls = random_controls(5, 8, 2, 3.0, rng);
    NoiseConfig quiet;
    const auto grid = replicate_state(planar.initial_state(), 5, 1);
    const Eigen::MatrixXd costs =
        rollout_batch(planar, grid, controls, quiet, 5, 2, 1);

    std::vector<int> perm = {4, 2, 0, 3, 1};
    std::vector<Eigen::MatrixXd> shuffled;
    for (int p : perm) shuffled.push_back(controls[p]);
    const Eigen::MatrixXd shuffled_costs =
        rollout_batch(planar, grid, shuffled, quiet, 5, 2, 1);
    for (int i = 0; i < 5; ++i) CHECK(shuffled_costs(i, 0) == costs(perm[i], 0));
  }

  TEST_CASE("rollout_batch is deterministic and honors a custom seed scheme") {
    const PlanarNavigation planar{std::vector<Obstacle2D>{}};
    RngStream rng(8203);
    const std::vector<Eigen::MatrixXd> controls = random_controls(4, 6, 2, 2.0, rng);
    const auto grid = replicate_state(planar.initial_state(), 4, 3);

    NoiseConfig noisy;
    noisy.sigma_eps = 1.0;
    const Eigen::MatrixXd first =
        rollout_batch(planar, grid, controls, noisy, 17, 3, 1, 2);
    const Eigen::MatrixXd second =
        rollout_batch(planar, grid, controls, noisy, 17, 3, 1, 1);
    CHECK((first - second).cwiseAbs().maxCoeff() == 0.0);  // thread-count independent

    const Eigen::MatrixXd other =
        rollout_batch(planar, grid, controls, noisy, 18, 3, 1, 1);
    CHECK((first - other).cwiseAbs().maxCoeff() > 0.0);

    // A seed scheme that ignores the state-sample index duplicates columns.
    NoiseConfig shared = noisy;
    shared.seed_scheme = [](std::uint64_t trial_seed, int step, int iter, int n, int) {
      return default_rollout_seed(trial_seed, step, iter, n, 0);
    };
    const Eigen::MatrixXd tied =
        rollout_batch(planar, grid, controls, shared, 17, 3, 1);
    for (int m = 1; m < 3; ++m)
      CHECK((tied.col(m) - tied.col(0)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((tied.col(0) - first.col(0)).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("default_rollout_seed separates every index") {
    std::vector<std::uint64_t> seeds;
    for (int step : {0, 1})
      for (int iter : {0, 1})
        for (int n : {0, 1, 2})
          for (int m : {0, 1}) seeds.push_back(default_rollout_seed(11, step, iter, n, m));
    seeds.push_back(default_rollout_seed(12, 0, 0, 0, 0));
    std::sort(seeds.begin(), seeds.end());
    CHECK(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end());
  }

  TEST_CASE("diverged rollouts get infinite cost and normalize to 1") {
    const PlanarNavigation planar{std::vector<Obstacle2D>{}};
    RngStream rng(8204);
    std::vector<Eigen::MatrixXd> controls = random_controls(3, 12, 2, 1.0, rng);
    controls.push_back(Eigen::MatrixXd::Constant(12, 2, 1e200));  // overflows to non-finite
    NoiseConfig quiet;
    const Eigen::MatrixXd costs = rollout_batch(
        planar, replicate_state(planar.initial_state(), 4, 1), controls, quiet, 3, 0, 0);
    CHECK(std::isinf(costs(3, 0)));
    for (int i = 0; i < 3; ++i) CHECK(std::isfinite(costs(i, 0)));

    bool degenerate = true;
    const Eigen::MatrixXd normalized = normalize_costs(costs, &degenerate);
    CHECK_FALSE(degenerate);
    CHECK(normalized(3, 0) == 1.0);
    CHECK(normalized.minCoeff() == 0.0);
    CHECK(normalized.maxCoeff() == 1.0);
  }

  TEST_CASE("normalize_costs worked examples") {
    bool degenerate = false;

    Eigen::MatrixXd two(2, 1);
    two << 1.0, 3.0;
    const Eigen::MatrixXd two_out = normalize_costs(two, &degenerate);
    CHECK(two_out(0, 0) == 0.0);
    CHECK(two_out(1, 0) == 1.0);
    CHECK_FALSE(degenerate);

    Eigen::MatrixXd three(3, 1);
    three << 2.0, 4.0, 6.0;
    const Eigen::MatrixXd three_out = normalize_costs(three, &degenerate);
    CHECK(three_out(0, 0) == 0.0);
    CHECK(three_out(1, 0) == 0.5);
    CHECK(three_out(2, 0) == 1.0);

    const Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(4, 2, 7.5);
    const Eigen::MatrixXd flat_out = normalize_costs(flat, &degenerate);
    CHECK(degenerate);
    CHECK(flat_out.cwiseAbs().maxCoeff() == 0.0);

    Eigen::MatrixXd with_inf(3, 1);
    with_inf << 5.0, kInf, 9.0;
    const Eigen::MatrixXd inf_out = normalize_costs(with_inf, &degenerate);
    CHECK_FALSE(degenerate);
    CHECK(inf_out(0, 0) == 0.0);
    CHECK(inf_out(1, 0) == 1.0);
    CHECK(inf_out(2, 0) == 1.0);

    const Eigen::MatrixXd all_inf = Eigen::MatrixXd::Constant(2, 2, kInf);
    CHECK_THROWS_AS(normalize_costs(all_inf), std::runtime_error);
    CHECK_THROWS_AS(normalize_costs(Eigen::MatrixXd()), std::invalid_argument);
    Eigen::MatrixXd with_nan(2, 1);
    with_nan << 1.0, std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(normalize_costs(with_nan), std::invalid_argument);
  }

  TEST_CASE("average_likelihoods averages the per-column shapes") {
    const Eigen::MatrixXd costs = matrix2x2(0.0, 1.0, 0.5, 0.5);
    const CostTransform mppi = MppiTransform{2.0};
    const Eigen::VectorXd like =
        average_likelihoods(costs, mppi, std::numeric_limits<double>::quiet_NaN());
    REQUIRE(like.size() == 2);
    CHECK(like(0) == doctest::Approx(0.5 * (1.0 + std::exp(-2.0))).epsilon(1e-15));
    CHECK(like(1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));

    // Duplicated columns leave the average exactly equal to one column.
    const Eigen::MatrixXd duplicated = matrix2x2(0.3, 0.3, 0.9, 0.9);
    const CostTransform tsallis = TsallisTransform{3.0, EliteThreshold{0.95}};
    const Eigen::VectorXd avg = average_likelihoods(duplicated, tsallis, 0.95);
    CHECK(avg(0) == likelihood(tsallis, 0.3, 0.95));
    CHECK(avg(1) == likelihood(tsallis, 0.9, 0.95));
  }

  TEST_CASE("evaluate_controls resolves the threshold on the flattened batch") {
    const PlanarNavigation planar{std::vector<Obstacle2D>{}};
    RngStream rng(8205);
    ControlBatch batch;
    batch.labels = Eigen::VectorXi::Zero(4);
    for (auto& u : random_controls(4, 8, 2, 4.0, rng)) batch.controls.push_back(u);

    NoiseConfig noisy;
    noisy.sigma_eps = 0.5;
    const CostTransform cem = CemTransform{EliteFraction{0.25}};
    const RolloutEvaluation eval = evaluate_controls(
        planar, replicate_state(planar.initial_state(), 4, 2), batch, cem, noisy, 21, 0, 0);

    REQUIRE(eval.costs.rows() == 4);
    REQUIRE(eval.costs.cols() == 2);
    // Elite fraction 0.25 of the 8 flattened entries keeps k = 2 of them.
    std::vector<double> flattened(eval.normalized_costs.data(),
                                  eval.normalized_costs.data() + 8);
    std::sort(flattened.begin(), flattened.end());
    CHECK(eval.gamma_resolved > flattened[1]);
    CHECK(eval.gamma_resolved <= flattened[2]);

    int elite_entries = 0;
    for (double c : flattened)
      if (c < eval.gamma_resolved) ++elite_entries;
    CHECK(elite_entries == 2);

    CHECK(eval.weights.value.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(eval.weights.value.minCoeff() >= 0.0);
    CHECK_FALSE(eval.degenerate);

    // Likelihoods reproduce the shape applied to the stored normalized costs.
    const Eigen::VectorXd expected =
        average_likelihoods(eval.normalized_costs, cem, eval.gamma_resolved);
    CHECK((eval.likelihoods - expected).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("huge-r Tsallis weights agree with CEM weights at the same threshold") {
    RngStream rng(8206);
    for (int rep = 0; rep < 10; ++rep) {
      Eigen::MatrixXd costs(16, 1);
      for (int i = 0; i < 16; ++i) costs(i, 0) = rng.uniform(0.0, 1.0);
      const Eigen::MatrixXd normalized = normalize_costs(costs);

      // Shared explicit threshold midway between the 4th and 5th order stats.
      std::vector<double> sorted(normalized.data(), normalized.data() + 16);
      std::sort(sorted.begin(), sorted.end());
      const double gamma = 0.5 * (sorted[3] + sorted[4]);

      const CostTransform tsallis = TsallisTransform{1e6, EliteThreshold{gamma}};
      const CostTransform cem = CemTransform{EliteThreshold{gamma}};
      const Eigen::VectorXd like_ts = average_likelihoods(normalized, tsallis, gamma);
      const Eigen::VectorXd like_cem = average_likelihoods(normalized, cem, gamma);
      const EmpiricalWeights w_ts = normalize_weights(like_ts);
      const EmpiricalWeights w_cem = normalize_weights(like_cem);
      CHECK((w_ts.value - w_cem.value).cwiseAbs().maxCoeff() < 1e-6);
    }
  }

  TEST_CASE("near-1 r reproduces the MPPI weight ranking") {
    RngStream rng(8207);
    Eigen::MatrixXd costs(12, 1);
    for (int i = 0; i < 12; ++i) costs(i, 0) = rng.uniform(0.0, 1.0);
    const Eigen::MatrixXd normalized = normalize_costs(costs);

    // r -> 1 with gamma = lambda / (r - 1) approaches the exponential shape
    // with inverse temperature 1 / lambda; ranking must already agree.
    const CostTransform tsallis = TsallisTransform{1.0 + 1e-6, EliteThreshold{1e6}};
    const CostTransform mppi = MppiTransform{1.0};
    const Eigen::VectorXd like_ts = average_likelihoods(normalized, tsallis, 1e6);
    const Eigen::VectorXd like_mp =
        average_likelihoods(normalized, mppi, std::numeric_limits<double>::quiet_NaN());

    std::vector<int> order_ts(12), order_mp(12);
    std::iota(order_ts.begin(), order_ts.end(), 0);
    order_mp = order_ts;
    std::sort(order_ts.begin(), order_ts.end(),
              [&](int a, int b) { return like_ts(a) > like_ts(b); });
    std::sort(order_mp.begin(), order_mp.end(),
              [&](int a, int b) { return like_mp(a) > like_mp(b); });
    CHECK(order_ts == order_mp);
  }

  TEST_CASE("state-sample duplication keeps weights when noise streams are shared") {
    const PlanarNavigation planar{std::uint64_t{42}};
    RngStream rng(8208);
    ControlBatch batch;
    batch.labels = Eigen::VectorXi::Zero(6);
    for (auto& u : random_controls(6, 10, 2, 6.0, rng)) batch.controls.push_back(u);

    NoiseConfig shared;
    shared.sigma_eps = 1.0;
    shared.seed_scheme = [](std::uint64_t trial_seed, int step, int iter, int n, int) {
      return default_rollout_seed(trial_seed, step, iter, n, 0);
    };
    const CostTransform tsallis = TsallisTransform{2.0, EliteFraction{0.5}};

    const RolloutEvaluation single = evaluate_controls(
        planar, replicate_state(planar.initial_state(), 6, 1), batch, tsallis, shared,
        77, 4, 1);
    const RolloutEvaluation duplicated = evaluate_controls(
        planar, replicate_state(planar.initial_state(), 6, 4), batch, tsallis, shared,
        77, 4, 1);
    CHECK((single.weights.value - duplicated.weights.value).cwiseAbs().maxCoeff() <
          1e-12);
  }
}

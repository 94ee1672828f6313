#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Core>

namespace tsmpc {

// Axis-aligned square obstacle in the plane.
struct Obstacle2D {
  Eigen::Vector2d center;
  double half_extent;
};

// Infinite vertical cylinder obstacle.
struct Cylinder {
  Eigen::Vector2d center;
  double radius;
};

// Discrete-time stochastic-control benchmark task. Dynamics advance by
// explicit Euler; crashed states are absorbing (frozen with zeroed rates).
// Trajectory costs are evaluated on the commanded (noise-free) controls.
class SystemModel {
 public:
  virtual ~SystemModel() = default;

  virtual int state_dim() const = 0;
  virtual int control_dim() const = 0;
  virtual double dt() const = 0;
  virtual Eigen::VectorXd initial_state() const = 0;
  virtual Eigen::VectorXd step(const Eigen::VectorXd& state,
                               const Eigen::VectorXd& control) const = 0;
  virtual double running_cost(const Eigen::VectorXd& state, const Eigen::VectorXd& control,
                              int t) const = 0;
  virtual double terminal_cost(const Eigen::VectorXd& state) const = 0;
  virtual bool is_crashed(const Eigen::VectorXd& state) const = 0;

  // Penalty charged once per trajectory if any visited state is crashed
  // (on top of per-step costs). Zero for tasks that penalize inside
  // running_cost instead.
  virtual double one_time_crash_cost() const { return 0.0; }

  // Goal position for bookkeeping (steps-to-goal); empty when the task has no
  // positional goal.
  virtual Eigen::VectorXd goal_position() const { return Eigen::VectorXd(); }
  virtual double goal_radius() const { return 1.0; }

  // Sum of running costs over `states.rows() - 1` steps, terminal cost at the
  // last state, plus the one-time crash penalty if any state is crashed.
  // states: (T+1) x n_x, controls: T x n_u.
  virtual double trajectory_cost(const Eigen::MatrixXd& states,
                                 const Eigen::MatrixXd& controls) const;
};

// ---------------------------------------------------------------------------
// Planar double-integrator navigation through a field of square obstacles.
//
// State (px, py, vx, vy), control (ax, ay), dt = 0.01. Quadratic tracking
// costs toward the goal at (9, 9) with zero velocity; entering an obstacle
// freezes the state (velocity zeroed) and charges a one-time penalty of 1e4.
// ---------------------------------------------------------------------------
class PlanarNavigation : public SystemModel {
 public:
  explicit PlanarNavigation(std::vector<Obstacle2D> obstacles);
  explicit PlanarNavigation(std::uint64_t field_seed);

  int state_dim() const override { return 4; }
  int control_dim() const override { return 2; }
  double dt() const override { return 0.01; }
  Eigen::VectorXd initial_state() const override;
  Eigen::VectorXd step(const Eigen::VectorXd& state,
                       const Eigen::VectorXd& control) const override;
  double running_cost(const Eigen::VectorXd& state, const Eigen::VectorXd& control,
                      int t) const override;
  double terminal_cost(const Eigen::VectorXd& state) const override;
  bool is_crashed(const Eigen::VectorXd& state) const override;
  double one_time_crash_cost() const override { return 1e4; }
  Eigen::VectorXd goal_position() const override;

  const std::vector<Obstacle2D>& obstacles() const { return obstacles_; }

 private:
  std::vector<Obstacle2D> obstacles_;
};

// ---------------------------------------------------------------------------
// Quadcopter navigation through a cylinder forest.
//
// State: position (3), attitude quaternion (w, x, y, z), world velocity (3),
// body rates (3). Controls: commanded body rates (3) tracked through a
// first-order lag (tau = 0.05) and collective thrust. dt = 0.015. Crash =
// leaving z in [0, 10] or coming within 0.75 of a cylinder surface; crashed
// states freeze and every crashed step costs 1e7.
// ---------------------------------------------------------------------------
class Quadcopter : public SystemModel {
 public:
  explicit Quadcopter(std::vector<Cylinder> obstacles);
  explicit Quadcopter(std::uint64_t field_seed);

  int state_dim() const override { return 13; }
  int control_dim() const override { return 4; }
  double dt() const override { return 0.015; }
  Eigen::VectorXd initial_state() const override;
  Eigen::VectorXd step(const Eigen::VectorXd& state,
                       const Eigen::VectorXd& control) const override;
  double running_cost(const Eigen::VectorXd& state, const Eigen::VectorXd& control,
                      int t) const override;
  double terminal_cost(const Eigen::VectorXd& state) const override { return 0.0; }
  bool is_crashed(const Eigen::VectorXd& state) const override;
  Eigen::VectorXd goal_position() const override;

  const std::vector<Cylinder>& obstacles() const { return obstacles_; }

  static constexpr double kMass = 1.0;
  static constexpr double kGravity = 9.81;
  static constexpr double kRateTimeConstant = 0.05;
  static constexpr double kCrashRadius = 0.75;

 private:
  std::vector<Cylinder> obstacles_;
};

// Deterministic obstacle-field generation with start/goal clearance of at
// least 1.5; rejection sampling throws std::runtime_error after 1e4 attempts.
std::vector<Obstacle2D> generate_planar_field(std::uint64_t seed);
std::vector<Cylinder> generate_quad_field(std::uint64_t seed);

// ---------------------------------------------------------------------------
// Single-stage stochastic objective on u in [-5, 5].
//
// raw(u)  = -(lambda/2) exp((lambda/2)(lambda sigma^2 - 2u)) erf((lambda sigma^2 - u)/(sqrt(2) sigma))
// The noiseless objective rescales raw() to [0, 1] over the domain via the
// frozen grid extrema below; observed costs add noise_scale * xi.
// ---------------------------------------------------------------------------

// Extrema of raw() on a 1e6-point uniform grid over [-5, 5], and the grid
// argmin of the rescaled objective (its flat interior minimum).
inline constexpr double kSingleStageOffset = 0.037286677781311194;   // grid max of raw
inline constexpr double kSingleStageScale = -0.34148293952059477;    // grid min - max
inline constexpr double kSingleStageOptimum = 4.2630492630492629;

struct SingleStageObjective {
  double lambda = 0.2;
  double sigma = 2.5;
  double noise_scale = 0.1;

  static constexpr double kDomainLo = -5.0;
  static constexpr double kDomainHi = 5.0;

  double raw(double u) const;
  // (raw(u) - offset) / scale, in [0, 1] over the domain with minimum 0 at
  // the interior optimum and maximum 1 at the left edge.
  double noiseless(double u) const;
  double cost(double u, double xi) const { return noiseless(u) + noise_scale * xi; }
};

}  // namespace tsmpc

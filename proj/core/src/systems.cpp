#include "tsmpc/systems.hpp"

#include <cmath>
#include <stdexcept>

#include "tsmpc/rng.hpp"

namespace tsmpc {

double SystemModel::trajectory_cost(const Eigen::MatrixXd& states,
                                    const Eigen::MatrixXd& controls) const {
  const auto horizon = controls.rows();
  if (states.rows() != horizon + 1)
    throw std::invalid_argument("trajectory_cost: need one more state than controls");
  double cost = 0.0;
  bool crashed = false;
  for (Eigen::Index t = 0; t < horizon; ++t) {
    cost += running_cost(states.row(t).transpose(), controls.row(t).transpose(),
                         static_cast<int>(t));
    crashed = crashed || is_crashed(states.row(t).transpose());
  }
  cost += terminal_cost(states.row(horizon).transpose());
  crashed = crashed || is_crashed(states.row(horizon).transpose());
  if (crashed) cost += one_time_crash_cost();
  return cost;
}

// ---------------------------------------------------------------------------
// Planar navigation
// ---------------------------------------------------------------------------

namespace {

const Eigen::Vector4d kPlanarGoal(9.0, 9.0, 0.0, 0.0);
const Eigen::Vector4d kPlanarRunningQ(0.5, 0.5, 0.2, 0.2);
const Eigen::Vector4d kPlanarTerminalQ(0.25, 0.25, 1.0, 1.0);
const Eigen::Vector2d kPlanarControlR(0.01, 0.01);

// Distance from a point to an axis-aligned square's boundary (0 inside).
double square_distance(const Eigen::Vector2d& point, const Obstacle2D& obstacle) {
  const double dx = std::max(std::abs(point.x() - obstacle.center.x()) - obstacle.half_extent, 0.0);
  const double dy = std::max(std::abs(point.y() - obstacle.center.y()) - obstacle.half_extent, 0.0);
  return std::hypot(dx, dy);
}

}  // namespace

PlanarNavigation::PlanarNavigation(std::vector<Obstacle2D> obstacles)
    : obstacles_(std::move(obstacles)) {}

PlanarNavigation::PlanarNavigation(std::uint64_t field_seed)
    : obstacles_(generate_planar_field(field_seed)) {}

Eigen::VectorXd PlanarNavigation::initial_state() const {
  return Eigen::Vector4d(-9.0, -9.0, 0.0, 0.0);
}

Eigen::VectorXd PlanarNavigation::step(const Eigen::VectorXd& state,
                                       const Eigen::VectorXd& control) const {
  if (state.size() != 4 || control.size() != 2)
    throw std::invalid_argument("PlanarNavigation::step: dimension mismatch");
  if (is_crashed(state)) {
    Eigen::Vector4d frozen = state;
    frozen.tail<2>().setZero();
    return frozen;
  }
  Eigen::Vector4d next;
  next.head<2>() = state.head<2>() + dt() * state.tail<2>();
  next.tail<2>() = state.tail<2>() + dt() * control;
  return next;
}

double PlanarNavigation::running_cost(const Eigen::VectorXd& state,
                                      const Eigen::VectorXd& control, int) const {
  const Eigen::Vector4d err = state - kPlanarGoal;
  return err.dot(kPlanarRunningQ.asDiagonal() * err) +
         control.dot(kPlanarControlR.asDiagonal() * control);
}

double PlanarNavigation::terminal_cost(const Eigen::VectorXd& state) const {
  const Eigen::Vector4d err = state - kPlanarGoal;
  return err.dot(kPlanarTerminalQ.asDiagonal() * err);
}

bool PlanarNavigation::is_crashed(const Eigen::VectorXd& state) const {
  const Eigen::Vector2d pos = state.head<2>();
  for (const auto& obstacle : obstacles_) {
    if (std::abs(pos.x() - obstacle.center.x()) <= obstacle.half_extent &&
        std::abs(pos.y() - obstacle.center.y()) <= obstacle.half_extent)
      return true;
  }
  return false;
}

Eigen::VectorXd PlanarNavigation::goal_position() const {
  return Eigen::Vector2d(9.0, 9.0);
}

// ---------------------------------------------------------------------------
// Quadcopter
// ---------------------------------------------------------------------------

namespace {

const Eigen::Vector3d kQuadGoal(25.0, 25.0, 5.0);
constexpr double kQuadZLo = 0.0;
constexpr double kQuadZHi = 10.0;
constexpr double kQuadCrashCost = 1e7;
constexpr double kQuadPositionWeight = 40.0;
constexpr double kQuadVelocityWeight = 10.0;
constexpr double kQuadRateWeight = 2.0;

// Hamilton product of quaternions stored (w, x, y, z).
Eigen::Vector4d quat_multiply(const Eigen::Vector4d& a, const Eigen::Vector4d& b) {
  return Eigen::Vector4d(
      a(0) * b(0) - a(1) * b(1) - a(2) * b(2) - a(3) * b(3),
      a(0) * b(1) + a(1) * b(0) + a(2) * b(3) - a(3) * b(2),
      a(0) * b(2) - a(1) * b(3) + a(2) * b(0) + a(3) * b(1),
      a(0) * b(3) + a(1) * b(2) - a(2) * b(1) + a(3) * b(0));
}

// Body z-axis expressed in the world frame.
Eigen::Vector3d body_z_axis(const Eigen::Vector4d& q) {
  return Eigen::Vector3d(2.0 * (q(1) * q(3) + q(0) * q(2)),
                         2.0 * (q(2) * q(3) - q(0) * q(1)),
                         1.0 - 2.0 * (q(1) * q(1) + q(2) * q(2)));
}

}  // namespace

Quadcopter::Quadcopter(std::vector<Cylinder> obstacles) : obstacles_(std::move(obstacles)) {}

Quadcopter::Quadcopter(std::uint64_t field_seed)
    : obstacles_(generate_quad_field(field_seed)) {}

Eigen::VectorXd Quadcopter::initial_state() const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(13);
  x(2) = 5.0;  // start hovering at (0, 0, 5)
  x(3) = 1.0;  // identity attitude
  return x;
}

Eigen::VectorXd Quadcopter::step(const Eigen::VectorXd& state,
                                 const Eigen::VectorXd& control) const {
  if (state.size() != 13 || control.size() != 4)
    throw std::invalid_argument("Quadcopter::step: dimension mismatch");
  if (is_crashed(state)) {
    Eigen::VectorXd frozen = state;
    frozen.segment<3>(7).setZero();
    frozen.tail<3>().setZero();
    return frozen;
  }

  const Eigen::Vector3d pos = state.head<3>();
  const Eigen::Vector4d quat = state.segment<4>(3);
  const Eigen::Vector3d vel = state.segment<3>(7);
  const Eigen::Vector3d omega = state.tail<3>();
  const Eigen::Vector3d rates_cmd = control.head<3>();
  const double thrust = control(3);

  const Eigen::Vector3d accel =
      (thrust / kMass) * body_z_axis(quat) - Eigen::Vector3d(0.0, 0.0, kGravity);

  Eigen::VectorXd next(13);
  next.head<3>() = pos + dt() * vel;
  next.segment<3>(7) = vel + dt() * accel;

  const Eigen::Vector4d omega_quat(0.0, omega(0), omega(1), omega(2));
  Eigen::Vector4d q_next = quat + dt() * 0.5 * quat_multiply(quat, omega_quat);
  const double norm = q_next.norm();
  if (norm < 1e-12) throw std::runtime_error("Quadcopter::step: degenerate quaternion");
  next.segment<4>(3) = q_next / norm;

  next.tail<3>() = omega + (dt() / kRateTimeConstant) * (rates_cmd - omega);
  return next;
}

double Quadcopter::running_cost(const Eigen::VectorXd& state, const Eigen::VectorXd&,
                                int) const {
  double cost = kQuadPositionWeight * (state.head<3>() - kQuadGoal).norm() +
                kQuadVelocityWeight * state.segment<3>(7).norm() +
                kQuadRateWeight * state.tail<3>().norm();
  if (is_crashed(state)) cost += kQuadCrashCost;
  return cost;
}

bool Quadcopter::is_crashed(const Eigen::VectorXd& state) const {
  const double z = state(2);
  if (z < kQuadZLo || z > kQuadZHi) return true;
  const Eigen::Vector2d pos = state.head<2>();
  for (const auto& cylinder : obstacles_) {
    if ((pos - cylinder.center).norm() < cylinder.radius + kCrashRadius) return true;
  }
  return false;
}

Eigen::VectorXd Quadcopter::goal_position() const { return kQuadGoal; }

// ---------------------------------------------------------------------------
// Obstacle-field generation
// ---------------------------------------------------------------------------

namespace {

constexpr int kMaxPlacementAttempts = 10000;
constexpr double kFieldClearance = 1.5;

}  // namespace

std::vector<Obstacle2D> generate_planar_field(std::uint64_t seed) {
  RngStream rng(mix_seed({seed, 0x0b57ac1eull}));
  const Eigen::Vector2d start(-9.0, -9.0);
  const Eigen::Vector2d goal(9.0, 9.0);

  std::vector<Obstacle2D> field;
  field.reserve(12);
  int attempts = 0;
  while (field.size() < 12) {
    if (++attempts > kMaxPlacementAttempts)
      throw std::runtime_error("generate_planar_field: no feasible placement found");
    Obstacle2D candidate;
    candidate.center = Eigen::Vector2d(3.0 * rng.normal(), 3.0 * rng.normal());
    candidate.half_extent = rng.uniform(0.5, 1.25);
    if (square_distance(start, candidate) < kFieldClearance) continue;
    if (square_distance(goal, candidate) < kFieldClearance) continue;
    field.push_back(candidate);
  }
  return field;
}

std::vector<Cylinder> generate_quad_field(std::uint64_t seed) {
  RngStream rng(mix_seed({seed, 0xc9117d3full}));
  const Eigen::Vector2d start(0.0, 0.0);
  const Eigen::Vector2d goal(25.0, 25.0);

  std::vector<Cylinder> field;
  field.reserve(35);
  int attempts = 0;
  while (field.size() < 35) {
    if (++attempts > kMaxPlacementAttempts)
      throw std::runtime_error("generate_quad_field: no feasible placement found");
    Cylinder candidate;
    candidate.center = Eigen::Vector2d(rng.uniform(2.0, 23.0), rng.uniform(2.0, 23.0));
    candidate.radius = rng.uniform(0.3, 0.6);
    if ((start - candidate.center).norm() - candidate.radius < kFieldClearance) continue;
    if ((goal - candidate.center).norm() - candidate.radius < kFieldClearance) continue;
    field.push_back(candidate);
  }
  return field;
}

// ---------------------------------------------------------------------------
// Single-stage objective
// ---------------------------------------------------------------------------

double SingleStageObjective::raw(double u) const {
  const double shift = lambda * sigma * sigma;
  return -(lambda / 2.0) * std::exp((lambda / 2.0) * (shift - 2.0 * u)) *
         std::erf((shift - u) / (std::sqrt(2.0) * sigma));
}

double SingleStageObjective::noiseless(double u) const {
  return (raw(u) - kSingleStageOffset) / kSingleStageScale;
}

}  // namespace tsmpc

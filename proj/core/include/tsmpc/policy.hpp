#pragma once

#include <span>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "tsmpc/rng.hpp"

namespace tsmpc {

enum class VarianceMode { kFixed, kAdaptive };

// Time-indexed unimodal Gaussian policy: one mean row and one covariance per
// horizon step.
struct GaussianPolicy {
  Eigen::MatrixXd mean;               // horizon x control_dim
  std::vector<Eigen::MatrixXd> cov;   // horizon matrices, control_dim^2, SPD
  VarianceMode variance_mode = VarianceMode::kAdaptive;
  // Lower bound on covariance eigenvalues. Zero is allowed and turns an
  // all-zero covariance into an exact point mass when sampling.
  double variance_floor = 1e-6;

  int horizon() const { return static_cast<int>(mean.rows()); }
  int control_dim() const { return static_cast<int>(mean.cols()); }
  void validate() const;

  // Zero-mean policy with std_dev^2 * I covariance at every step (clamped to
  // the floor from below).
  static GaussianPolicy isotropic(int horizon, int control_dim, double std_dev,
                                  VarianceMode mode, double variance_floor = 1e-6);
};

// Mixture of L time-indexed Gaussians. Each sampled trajectory is drawn
// entirely from one component.
struct GmmPolicy {
  Eigen::VectorXd weights;                         // L, on the simplex
  std::vector<Eigen::MatrixXd> means;              // L of horizon x control_dim
  std::vector<std::vector<Eigen::MatrixXd>> covs;  // [L][horizon] control_dim^2
  double variance_floor = 1e-6;
  int em_iters = 5;  // EM rounds per policy update

  int components() const { return static_cast<int>(weights.size()); }
  int horizon() const { return means.empty() ? 0 : static_cast<int>(means[0].rows()); }
  int control_dim() const { return means.empty() ? 0 : static_cast<int>(means[0].cols()); }
  void validate() const;

  static GmmPolicy isotropic(int components, int horizon, int control_dim, double std_dev,
                             double variance_floor = 1e-6, int em_iters = 5);
};

// Non-parametric policy: L particles, each the mean of a fixed-variance
// Gaussian over control trajectories. The batch is split evenly into L
// contiguous blocks of S = N / L samples; block l is drawn around particle l
// (sample-major grouping; the flat-index bookkeeping in the source update-law
// statement is self-overlapping as written, so the consistent contiguous
// reading is adopted).
struct SteinPolicy {
  std::vector<Eigen::MatrixXd> particles;  // L of horizon x control_dim
  double sampling_std = 1.0;               // fixed per-dimension sampling std
  double step_size = 0.5;                  // epsilon in the particle update
  double bandwidth_multiplier = 1.0;       // scales the median-heuristic bandwidth
  // Per-particle weight mass accumulated by the most recent update; empty
  // until the first update has run. Used for control selection.
  Eigen::VectorXd group_weights;

  int num_particles() const { return static_cast<int>(particles.size()); }
  int horizon() const { return particles.empty() ? 0 : static_cast<int>(particles[0].rows()); }
  int control_dim() const {
    return particles.empty() ? 0 : static_cast<int>(particles[0].cols());
  }
  void validate() const;
};

using Policy = std::variant<GaussianPolicy, GmmPolicy, SteinPolicy>;

int policy_horizon(const Policy& policy);
int policy_control_dim(const Policy& policy);

// A batch of sampled control trajectories plus the component/particle each
// sample came from (all zeros for the unimodal Gaussian).
struct ControlBatch {
  std::vector<Eigen::MatrixXd> controls;  // N of horizon x control_dim
  Eigen::VectorXi labels;                 // N

  int size() const { return static_cast<int>(controls.size()); }
};

// Normalized importance weights over a sample batch.
struct EmpiricalWeights {
  Eigen::VectorXd value;    // N, nonnegative, sums to 1
  bool degenerate = false;  // all likelihoods were zero; fell back to uniform
};

// Draws num_samples control trajectories from the policy. Consumes the stream
// in sample order, so identical (policy, num_samples, seed) triples give
// identical batches. Stein policies require num_samples divisible by L.
ControlBatch sample_controls(const Policy& policy, int num_samples, RngStream& rng);

// Maps nonnegative likelihoods to simplex weights. All-zero input falls back
// to uniform weights with the degenerate flag set; negative or non-finite
// entries throw std::invalid_argument.
EmpiricalWeights normalize_weights(const Eigen::VectorXd& likelihoods);

// Weighted-moment update of the unimodal Gaussian:
//   mu_t    = sum_n w_n u_t^n
//   Sigma_t = sum_n w_n (u_t^n - mu_t)(u_t^n - mu_t)^T   (adaptive mode only)
// followed by trace-scaled jitter (1e-8), an eigenvalue floor, and convex
// smoothing toward the previous parameters with weight smoothing_alpha.
GaussianPolicy gaussian_update(const ControlBatch& batch, const EmpiricalWeights& weights,
                               const GaussianPolicy& prev, double smoothing_alpha);

// Weighted EM for the Gaussian mixture. Each of em_iters rounds computes
// per-sample-per-timestep responsibilities
//   eta_l(u_t^n) ∝ phi_l N(u_t^n | mu_{l,t}, Sigma_{l,t})
// and re-estimates
//   N_{l,t}      = sum_n eta_l(u_t^n) w_n
//   mu_{l,t}     = sum_n eta_l(u_t^n) w_n u_t^n / N_{l,t}
//   Sigma_{l,t}  = sum_n eta_l(u_t^n) w_n (u - mu)(u - mu)^T / N_{l,t}
//   phi_l        = sum_t N_{l,t} / sum_{l',t} N_{l',t}
// Components whose total mass sum_t N_{l,t} falls below 1e-6 are re-seeded at
// the highest-weight sample. Means and covariances (not mixture weights) are
// smoothed toward the previous parameters.
GmmPolicy gmm_update(const ControlBatch& batch, const EmpiricalWeights& weights,
                     const GmmPolicy& prev, int em_iters, double smoothing_alpha);

// Stein variational particle update. With per-particle score estimates
//   G_l = sum_s w^{(l,s)} (u^{(l,s)} - theta_l) / sigma^2 / sum_s w^{(l,s)}
// each particle moves along the kernelized Stein direction
//   theta_l += eps * sum_m [ k(theta_m, theta_l) G_m + grad_{theta_m} k(theta_m, theta_l) ]
// Groups with zero weight mass contribute a zero score (repulsion only).
// Stores the per-group weight mass on the returned policy for selection.
SteinPolicy stein_update(const ControlBatch& batch, const EmpiricalWeights& weights,
                         const SteinPolicy& prev);

// Dispatches to the policy-class update law above. smoothing_alpha affects
// only the Gaussian and mixture classes.
Policy update_policy(const Policy& prev, const ControlBatch& batch,
                     const EmpiricalWeights& weights, double smoothing_alpha);

// Control executed at the current step: Gaussian mean, highest-weight mixture
// component's mean, or highest-weight Stein particle, all at t = 0. Ties pick
// the lowest index. A Stein policy that has never been updated has no group
// weights and throws std::logic_error.
Eigen::VectorXd select_control(const Policy& policy);

// Receding-horizon shift: parameters move one step earlier and the final step
// is duplicated. Mixture weights and Stein group weights are preserved.
GaussianPolicy recede(const GaussianPolicy& policy);
GmmPolicy recede(const GmmPolicy& policy);
SteinPolicy recede(const SteinPolicy& policy);
Policy recede(const Policy& policy);

// Per-timestep median-heuristic bandwidths over particle rows:
//   h_t = multiplier * median(||theta_{l,t} - theta_{m,t}||)^2 / log(L + 1)
// with a fallback of 1.0 when particles coincide (or L == 1).
std::vector<double> stein_bandwidths(const std::vector<Eigen::MatrixXd>& particles,
                                     double multiplier);

// Sum-of-local-kernels over horizon steps:
//   k(a, b) = (1/T) sum_t exp(-||a_t - b_t||^2 / h_t)
// Optionally writes the gradient with respect to `a` into grad_a.
double stein_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                    std::span<const double> bandwidths, Eigen::MatrixXd* grad_a = nullptr);

}  // namespace tsmpc

#include "tsmpc/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace tsmpc {

namespace {

constexpr double kEmptyComponentMass = 1e-6;
constexpr double kJitterScale = 1e-8;
constexpr double kLog2Pi = 1.8378770664093454836;

// Symmetrizes and clamps eigenvalues from below so the result admits a
// Cholesky factorization even for rank-deficient scatter matrices.
Eigen::MatrixXd spd_floor(const Eigen::MatrixXd& m, double floor) {
  if (m.rows() == 1) return Eigen::MatrixXd::Constant(1, 1, std::max(m(0, 0), floor));
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("spd_floor: eigendecomposition failed");
  Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(floor);
  return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

// Scatter -> covariance post-processing shared by the Gaussian and mixture
// updates: trace-scaled jitter first, then the eigenvalue floor.
Eigen::MatrixXd finalize_covariance(Eigen::MatrixXd scatter, double floor) {
  const auto dim = scatter.rows();
  const double jitter = kJitterScale * std::max(scatter.trace(), 0.0) / static_cast<double>(dim);
  scatter.diagonal().array() += jitter;
  return spd_floor(scatter, floor);
}

void check_batch_weights(const ControlBatch& batch, const EmpiricalWeights& weights,
                         int horizon, int control_dim) {
  if (batch.size() == 0) throw std::invalid_argument("policy update: empty sample batch");
  if (weights.value.size() != batch.size())
    throw std::invalid_argument("policy update: weight/sample count mismatch");
  for (const auto& u : batch.controls)
    if (u.rows() != horizon || u.cols() != control_dim)
      throw std::invalid_argument("policy update: sample dimensions do not match the policy");
}

void check_smoothing(double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0))
    throw std::invalid_argument("smoothing_alpha must lie in [0, 1)");
}

std::vector<Eigen::LLT<Eigen::MatrixXd>> cholesky_per_step(
    const std::vector<Eigen::MatrixXd>& covs) {
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llts;
  llts.reserve(covs.size());
  for (const auto& c : covs) {
    llts.emplace_back(c);
    if (llts.back().info() != Eigen::Success)
      throw std::runtime_error("policy covariance is not positive definite");
  }
  return llts;
}

// Per-step sampling scale factors: lower-triangular Cholesky factors, with an
// exactly-zero covariance treated as a point mass (L = 0). Draws are still
// consumed for zero steps so the stream position never depends on the
// covariance values.
std::vector<Eigen::MatrixXd> scale_factors_per_step(const std::vector<Eigen::MatrixXd>& covs) {
  std::vector<Eigen::MatrixXd> factors;
  factors.reserve(covs.size());
  for (const auto& c : covs) {
    if (c.isZero(0.0)) {
      factors.push_back(Eigen::MatrixXd::Zero(c.rows(), c.cols()));
      continue;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("policy covariance is not positive definite");
    factors.push_back(llt.matrixL());
  }
  return factors;
}

double gaussian_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                            const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const auto dim = x.size();
  const Eigen::VectorXd diff = x - mean;
  const Eigen::VectorXd half = llt.matrixL().solve(diff);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < dim; ++i) log_det += std::log(llt.matrixL()(i, i));
  return -0.5 * half.squaredNorm() - log_det - 0.5 * static_cast<double>(dim) * kLog2Pi;
}

}  // namespace

// ---------------------------------------------------------------------------
// Policy structs
// ---------------------------------------------------------------------------

void GaussianPolicy::validate() const {
  if (mean.rows() < 1 || mean.cols() < 1)
    throw std::invalid_argument("GaussianPolicy: horizon and control_dim must be >= 1");
  if (!(variance_floor >= 0.0))
    throw std::invalid_argument("GaussianPolicy: variance_floor must be >= 0");
  if (static_cast<int>(cov.size()) != horizon())
    throw std::invalid_argument("GaussianPolicy: one covariance per horizon step required");
  for (const auto& c : cov)
    if (c.rows() != control_dim() || c.cols() != control_dim())
      throw std::invalid_argument("GaussianPolicy: covariance dimension mismatch");
}

GaussianPolicy GaussianPolicy::isotropic(int horizon, int control_dim, double std_dev,
                                         VarianceMode mode, double variance_floor) {
  if (std_dev < 0.0) throw std::invalid_argument("GaussianPolicy: std_dev must be >= 0");
  GaussianPolicy p;
  p.mean = Eigen::MatrixXd::Zero(horizon, control_dim);
  const double var = std::max(std_dev * std_dev, variance_floor);
  p.cov.assign(horizon, var * Eigen::MatrixXd::Identity(control_dim, control_dim));
  p.variance_mode = mode;
  p.variance_floor = variance_floor;
  p.validate();
  return p;
}

void GmmPolicy::validate() const {
  const int L = components();
  if (L < 1) throw std::invalid_argument("GmmPolicy: at least one component required");
  if (!(variance_floor > 0.0))
    throw std::invalid_argument("GmmPolicy: variance_floor must be > 0");
  if (em_iters < 1) throw std::invalid_argument("GmmPolicy: em_iters must be >= 1");
  if (static_cast<int>(means.size()) != L || static_cast<int>(covs.size()) != L)
    throw std::invalid_argument("GmmPolicy: weights/means/covs size mismatch");
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("GmmPolicy: mixture weights must form a simplex");
  for (int l = 0; l < L; ++l) {
    if (means[l].rows() != horizon() || means[l].cols() != control_dim())
      throw std::invalid_argument("GmmPolicy: component mean dimension mismatch");
    if (static_cast<int>(covs[l].size()) != horizon())
      throw std::invalid_argument("GmmPolicy: one covariance per horizon step required");
    for (const auto& c : covs[l])
      if (c.rows() != control_dim() || c.cols() != control_dim())
        throw std::invalid_argument("GmmPolicy: covariance dimension mismatch");
  }
}

GmmPolicy GmmPolicy::isotropic(int components, int horizon, int control_dim, double std_dev,
                               double variance_floor, int em_iters) {
  if (std_dev < 0.0) throw std::invalid_argument("GmmPolicy: std_dev must be >= 0");
  GmmPolicy p;
  p.weights = Eigen::VectorXd::Constant(components, 1.0 / components);
  p.means.assign(components, Eigen::MatrixXd::Zero(horizon, control_dim));
  const double var = std::max(std_dev * std_dev, variance_floor);
  p.covs.assign(components, std::vector<Eigen::MatrixXd>(
                                horizon, var * Eigen::MatrixXd::Identity(control_dim, control_dim)));
  p.variance_floor = variance_floor;
  p.em_iters = em_iters;
  p.validate();
  return p;
}

void SteinPolicy::validate() const {
  if (particles.empty()) throw std::invalid_argument("SteinPolicy: at least one particle required");
  if (!(sampling_std > 0.0)) throw std::invalid_argument("SteinPolicy: sampling_std must be > 0");
  if (!(step_size > 0.0)) throw std::invalid_argument("SteinPolicy: step_size must be > 0");
  if (!(bandwidth_multiplier > 0.0))
    throw std::invalid_argument("SteinPolicy: bandwidth_multiplier must be > 0");
  for (const auto& theta : particles)
    if (theta.rows() != horizon() || theta.cols() != control_dim())
      throw std::invalid_argument("SteinPolicy: particle dimension mismatch");
  if (group_weights.size() != 0 && group_weights.size() != num_particles())
    throw std::invalid_argument("SteinPolicy: group_weights size mismatch");
}

int policy_horizon(const Policy& policy) {
  return std::visit([](const auto& p) { return p.horizon(); }, policy);
}

int policy_control_dim(const Policy& policy) {
  return std::visit([](const auto& p) { return p.control_dim(); }, policy);
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

namespace {

ControlBatch sample_gaussian(const GaussianPolicy& policy, int num_samples, RngStream& rng) {
  policy.validate();
  const int T = policy.horizon();
  const int nu = policy.control_dim();
  const auto scales = scale_factors_per_step(policy.cov);

  ControlBatch batch;
  batch.controls.reserve(num_samples);
  batch.labels = Eigen::VectorXi::Zero(num_samples);
  for (int n = 0; n < num_samples; ++n) {
    Eigen::MatrixXd u(T, nu);
    for (int t = 0; t < T; ++t)
      u.row(t) = policy.mean.row(t) + (scales[t] * rng.normal_vector(nu)).transpose();
    batch.controls.push_back(std::move(u));
  }
  return batch;
}

ControlBatch sample_gmm(const GmmPolicy& policy, int num_samples, RngStream& rng) {
  policy.validate();
  const int T = policy.horizon();
  const int nu = policy.control_dim();
  std::vector<std::vector<Eigen::MatrixXd>> scales;
  scales.reserve(policy.components());
  for (const auto& component : policy.covs) scales.push_back(scale_factors_per_step(component));

  ControlBatch batch;
  batch.controls.reserve(num_samples);
  batch.labels.resize(num_samples);
  for (int n = 0; n < num_samples; ++n) {
    const int l = rng.categorical(policy.weights);
    batch.labels(n) = l;
    Eigen::MatrixXd u(T, nu);
    for (int t = 0; t < T; ++t)
      u.row(t) = policy.means[l].row(t) + (scales[l][t] * rng.normal_vector(nu)).transpose();
    batch.controls.push_back(std::move(u));
  }
  return batch;
}

ControlBatch sample_stein(const SteinPolicy& policy, int num_samples, RngStream& rng) {
  policy.validate();
  const int L = policy.num_particles();
  if (num_samples % L != 0)
    throw std::invalid_argument("sample_controls: sample count must be divisible by particle count");
  const int per_particle = num_samples / L;

  ControlBatch batch;
  batch.controls.reserve(num_samples);
  batch.labels.resize(num_samples);
  for (int l = 0; l < L; ++l) {
    for (int s = 0; s < per_particle; ++s) {
      const int n = l * per_particle + s;
      batch.labels(n) = l;
      batch.controls.push_back(policy.particles[l] +
                               policy.sampling_std *
                                   rng.normal_matrix(policy.horizon(), policy.control_dim()));
    }
  }
  return batch;
}

}  // namespace

ControlBatch sample_controls(const Policy& policy, int num_samples, RngStream& rng) {
  if (num_samples < 1) throw std::invalid_argument("sample_controls: num_samples must be >= 1");
  return std::visit(
      [&](const auto& p) -> ControlBatch {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, GaussianPolicy>) return sample_gaussian(p, num_samples, rng);
        else if constexpr (std::is_same_v<P, GmmPolicy>) return sample_gmm(p, num_samples, rng);
        else return sample_stein(p, num_samples, rng);
      },
      policy);
}

EmpiricalWeights normalize_weights(const Eigen::VectorXd& likelihoods) {
  if (likelihoods.size() == 0) throw std::invalid_argument("normalize_weights: empty input");
  for (Eigen::Index i = 0; i < likelihoods.size(); ++i) {
    if (!std::isfinite(likelihoods(i)) || likelihoods(i) < 0.0)
      throw std::invalid_argument("normalize_weights: likelihoods must be finite and >= 0");
  }
  EmpiricalWeights w;
  const double total = likelihoods.sum();
  if (total > 0.0) {
    w.value = likelihoods / total;
  } else {
    w.value = Eigen::VectorXd::Constant(likelihoods.size(),
                                        1.0 / static_cast<double>(likelihoods.size()));
    w.degenerate = true;
  }
  return w;
}

// ---------------------------------------------------------------------------
// Update laws
// ---------------------------------------------------------------------------

GaussianPolicy gaussian_update(const ControlBatch& batch, const EmpiricalWeights& weights,
                               const GaussianPolicy& prev, double smoothing_alpha) {
  prev.validate();
  check_smoothing(smoothing_alpha);
  const int T = prev.horizon();
  const int nu = prev.control_dim();
  check_batch_weights(batch, weights, T, nu);
  const int N = batch.size();

  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(T, nu);
  for (int n = 0; n < N; ++n) mean += weights.value(n) * batch.controls[n];

  GaussianPolicy next = prev;
  if (prev.variance_mode == VarianceMode::kAdaptive) {
    for (int t = 0; t < T; ++t) {
      Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(nu, nu);
      for (int n = 0; n < N; ++n) {
        const Eigen::VectorXd diff = batch.controls[n].row(t).transpose() - mean.row(t).transpose();
        scatter.noalias() += weights.value(n) * diff * diff.transpose();
      }
      next.cov[t] = finalize_covariance(std::move(scatter), prev.variance_floor);
    }
  }
  next.mean = smoothing_alpha * prev.mean + (1.0 - smoothing_alpha) * mean;
  if (smoothing_alpha > 0.0 && prev.variance_mode == VarianceMode::kAdaptive) {
    for (int t = 0; t < T; ++t)
      next.cov[t] = smoothing_alpha * prev.cov[t] + (1.0 - smoothing_alpha) * next.cov[t];
  }
  return next;
}

GmmPolicy gmm_update(const ControlBatch& batch, const EmpiricalWeights& weights,
                     const GmmPolicy& prev, int em_iters, double smoothing_alpha) {
  prev.validate();
  check_smoothing(smoothing_alpha);
  if (em_iters < 1) throw std::invalid_argument("gmm_update: em_iters must be >= 1");
  const int L = prev.components();
  const int T = prev.horizon();
  const int nu = prev.control_dim();
  check_batch_weights(batch, weights, T, nu);
  const int N = batch.size();

  Eigen::VectorXd phi = prev.weights;
  std::vector<Eigen::MatrixXd> means = prev.means;
  std::vector<std::vector<Eigen::MatrixXd>> covs = prev.covs;

  int best_sample = 0;
  weights.value.maxCoeff(&best_sample);

  // Responsibilities eta[l](n, t) for the current parameter iterate.
  std::vector<Eigen::MatrixXd> eta(L, Eigen::MatrixXd(N, T));
  Eigen::VectorXd log_terms(L);

  for (int iter = 0; iter < em_iters; ++iter) {
    // E-step: per-sample-per-timestep soft assignments under theta^k.
    std::vector<std::vector<Eigen::LLT<Eigen::MatrixXd>>> llts;
    llts.reserve(L);
    for (int l = 0; l < L; ++l) llts.push_back(cholesky_per_step(covs[l]));
    Eigen::VectorXd log_phi = phi.array().max(1e-300).log().matrix();

    for (int n = 0; n < N; ++n) {
      for (int t = 0; t < T; ++t) {
        const Eigen::VectorXd u = batch.controls[n].row(t).transpose();
        for (int l = 0; l < L; ++l)
          log_terms(l) =
              log_phi(l) + gaussian_log_density(u, means[l].row(t).transpose(), llts[l][t]);
        const double top = log_terms.maxCoeff();
        double denom = 0.0;
        for (int l = 0; l < L; ++l) denom += std::exp(log_terms(l) - top);
        for (int l = 0; l < L; ++l) eta[l](n, t) = std::exp(log_terms(l) - top) / denom;
      }
    }

    // M-step with per-timestep mass N_{l,t}.
    double total_mass = 0.0;
    Eigen::VectorXd component_mass = Eigen::VectorXd::Zero(L);
    for (int l = 0; l < L; ++l) {
      Eigen::VectorXd mass_t = Eigen::VectorXd::Zero(T);
      Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(T, nu);
      for (int n = 0; n < N; ++n) {
        const double wn = weights.value(n);
        if (wn == 0.0) continue;
        for (int t = 0; t < T; ++t) {
          const double c = eta[l](n, t) * wn;
          mass_t(t) += c;
          mu.row(t) += c * batch.controls[n].row(t);
        }
      }
      component_mass(l) = mass_t.sum();
      total_mass += component_mass(l);

      if (component_mass(l) < kEmptyComponentMass) {
        // Re-seed a starved component at the highest-weight sample; keep its
        // covariance so the next E-step can reassign mass to it.
        means[l] = batch.controls[best_sample];
        continue;
      }

      for (int t = 0; t < T; ++t) {
        if (mass_t(t) > 0.0) means[l].row(t) = mu.row(t) / mass_t(t);
        Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(nu, nu);
        for (int n = 0; n < N; ++n) {
          const double c = eta[l](n, t) * weights.value(n);
          if (c == 0.0) continue;
          const Eigen::VectorXd diff =
              batch.controls[n].row(t).transpose() - means[l].row(t).transpose();
          scatter.noalias() += c * diff * diff.transpose();
        }
        if (mass_t(t) > 0.0)
          covs[l][t] = finalize_covariance(scatter / mass_t(t), prev.variance_floor);
      }
    }

    // Mixture weights from total per-component mass; re-seeded components get
    // a small share so they stay live.
    if (total_mass <= 0.0) throw std::runtime_error("gmm_update: zero responsibility mass");
    for (int l = 0; l < L; ++l)
      phi(l) = std::max(component_mass(l) / total_mass, kEmptyComponentMass / L);
    phi /= phi.sum();
  }

  GmmPolicy next = prev;
  next.weights = phi;
  next.means = std::move(means);
  next.covs = std::move(covs);
  if (smoothing_alpha > 0.0) {
    for (int l = 0; l < L; ++l) {
      next.means[l] = smoothing_alpha * prev.means[l] + (1.0 - smoothing_alpha) * next.means[l];
      for (int t = 0; t < T; ++t)
        next.covs[l][t] =
            smoothing_alpha * prev.covs[l][t] + (1.0 - smoothing_alpha) * next.covs[l][t];
    }
  }
  return next;
}

SteinPolicy stein_update(const ControlBatch& batch, const EmpiricalWeights& weights,
                         const SteinPolicy& prev) {
  prev.validate();
  const int L = prev.num_particles();
  const int T = prev.horizon();
  const int nu = prev.control_dim();
  check_batch_weights(batch, weights, T, nu);
  const int N = batch.size();
  if (N % L != 0)
    throw std::invalid_argument("stein_update: sample count must be divisible by particle count");
  const int S = N / L;
  const double inv_var = 1.0 / (prev.sampling_std * prev.sampling_std);

  // Per-particle score estimates from each particle's own sample block.
  Eigen::VectorXd group_mass(L);
  std::vector<Eigen::MatrixXd> score(L);
  for (int l = 0; l < L; ++l) {
    double mass = 0.0;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(T, nu);
    for (int s = 0; s < S; ++s) {
      const int n = l * S + s;
      const double wn = weights.value(n);
      mass += wn;
      if (wn > 0.0) acc += wn * (batch.controls[n] - prev.particles[l]);
    }
    group_mass(l) = mass;
    score[l] = mass > 0.0 ? Eigen::MatrixXd((acc * inv_var) / mass)
                          : Eigen::MatrixXd::Zero(T, nu);
  }

  const std::vector<double> bandwidths = stein_bandwidths(prev.particles, prev.bandwidth_multiplier);

  SteinPolicy next = prev;
  Eigen::MatrixXd grad(T, nu);
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd direction = Eigen::MatrixXd::Zero(T, nu);
    for (int m = 0; m < L; ++m) {
      const double k = stein_kernel(prev.particles[m], prev.particles[l], bandwidths, &grad);
      direction += k * score[m] + grad;
    }
    next.particles[l] = prev.particles[l] + prev.step_size * direction;
  }
  next.group_weights = group_mass;
  return next;
}

Policy update_policy(const Policy& prev, const ControlBatch& batch,
                     const EmpiricalWeights& weights, double smoothing_alpha) {
  return std::visit(
      [&](const auto& p) -> Policy {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, GaussianPolicy>)
          return gaussian_update(batch, weights, p, smoothing_alpha);
        else if constexpr (std::is_same_v<P, GmmPolicy>)
          return gmm_update(batch, weights, p, p.em_iters, smoothing_alpha);
        else
          return stein_update(batch, weights, p);
      },
      prev);
}

// ---------------------------------------------------------------------------
// Selection and receding horizon
// ---------------------------------------------------------------------------

namespace {

// Lowest index attaining the maximum (strict > keeps earlier winners).
int argmax_lowest(const Eigen::VectorXd& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = static_cast<int>(i);
  return best;
}

}  // namespace

Eigen::VectorXd select_control(const Policy& policy) {
  return std::visit(
      [](const auto& p) -> Eigen::VectorXd {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, GaussianPolicy>) {
          return p.mean.row(0).transpose();
        } else if constexpr (std::is_same_v<P, GmmPolicy>) {
          return p.means[argmax_lowest(p.weights)].row(0).transpose();
        } else {
          if (p.group_weights.size() == 0)
            throw std::logic_error(
                "select_control: Stein policy carries no group weights before an update");
          return p.particles[argmax_lowest(p.group_weights)].row(0).transpose();
        }
      },
      policy);
}

namespace {

Eigen::MatrixXd shift_rows(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  if (m.rows() == 1) return m;
  out.topRows(m.rows() - 1) = m.bottomRows(m.rows() - 1);
  out.row(m.rows() - 1) = m.row(m.rows() - 1);
  return out;
}

std::vector<Eigen::MatrixXd> shift_covs(const std::vector<Eigen::MatrixXd>& covs) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(covs.size());
  for (std::size_t t = 1; t < covs.size(); ++t) out.push_back(covs[t]);
  out.push_back(covs.back());
  return out;
}

}  // namespace

GaussianPolicy recede(const GaussianPolicy& policy) {
  GaussianPolicy next = policy;
  next.mean = shift_rows(policy.mean);
  next.cov = shift_covs(policy.cov);
  return next;
}

GmmPolicy recede(const GmmPolicy& policy) {
  GmmPolicy next = policy;
  for (int l = 0; l < policy.components(); ++l) {
    next.means[l] = shift_rows(policy.means[l]);
    next.covs[l] = shift_covs(policy.covs[l]);
  }
  return next;
}

SteinPolicy recede(const SteinPolicy& policy) {
  SteinPolicy next = policy;
  for (int l = 0; l < policy.num_particles(); ++l)
    next.particles[l] = shift_rows(policy.particles[l]);
  return next;
}

Policy recede(const Policy& policy) {
  return std::visit([](const auto& p) -> Policy { return recede(p); }, policy);
}

// ---------------------------------------------------------------------------
// Stein kernel machinery
// ---------------------------------------------------------------------------

std::vector<double> stein_bandwidths(const std::vector<Eigen::MatrixXd>& particles,
                                     double multiplier) {
  if (particles.empty()) throw std::invalid_argument("stein_bandwidths: no particles");
  if (!(multiplier > 0.0))
    throw std::invalid_argument("stein_bandwidths: multiplier must be > 0");
  const int L = static_cast<int>(particles.size());
  const auto T = particles[0].rows();
  std::vector<double> bandwidths(T, 1.0);
  if (L < 2) return bandwidths;

  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(L) * (L - 1) / 2);
  const double log_term = std::log(static_cast<double>(L) + 1.0);
  for (Eigen::Index t = 0; t < T; ++t) {
    dists.clear();
    for (int i = 0; i < L; ++i)
      for (int j = i + 1; j < L; ++j)
        dists.push_back((particles[i].row(t) - particles[j].row(t)).norm());
    auto mid = dists.begin() + dists.size() / 2;
    std::nth_element(dists.begin(), mid, dists.end());
    double median = *mid;
    if (dists.size() % 2 == 0) {
      // Even count: average the two central order statistics.
      const double lower = *std::max_element(dists.begin(), mid);
      median = 0.5 * (median + lower);
    }
    const double h = multiplier * median * median / log_term;
    bandwidths[t] = h > 1e-12 ? h : 1.0;  // coincident particles: unit fallback
  }
  return bandwidths;
}

double stein_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                    std::span<const double> bandwidths, Eigen::MatrixXd* grad_a) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("stein_kernel: particle dimension mismatch");
  if (static_cast<Eigen::Index>(bandwidths.size()) != a.rows())
    throw std::invalid_argument("stein_kernel: one bandwidth per horizon step required");
  const auto T = a.rows();
  const double inv_T = 1.0 / static_cast<double>(T);
  if (grad_a) grad_a->setZero(a.rows(), a.cols());
  double value = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::RowVectorXd diff = a.row(t) - b.row(t);
    const double local = std::exp(-diff.squaredNorm() / bandwidths[t]);
    value += local;
    if (grad_a) grad_a->row(t) = (-2.0 * inv_T * local / bandwidths[t]) * diff;
  }
  return value * inv_T;
}

}  // namespace tsmpc

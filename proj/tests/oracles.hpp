#pragma once

// Brute-force reference implementations used only by the tests. Everything
// here is coded directly from the defining formulas with plain loops,
// probability-space arithmetic, and dense inverses — deliberately sharing no
// code path with the library (which works in log space with factorizations).

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// ---------------------------------------------------------------------------
// Deformed exponential family, direct powers.
// ---------------------------------------------------------------------------

inline double log_r(double x, double r) {
  if (r == 1.0) return std::log(x);
  return (std::pow(x, r - 1.0) - 1.0) / (r - 1.0);
}

inline double exp_r(double x, double r) {
  if (r == 1.0) return std::exp(x);
  const double base = 1.0 + (r - 1.0) * x;
  if (base <= 0.0) return 0.0;
  return std::pow(base, 1.0 / (r - 1.0));
}

inline double tsallis_shape(double cost, double gamma, double r) {
  if (cost >= gamma) return 0.0;
  return std::pow(1.0 - cost / gamma, 1.0 / (r - 1.0));
}

// ---------------------------------------------------------------------------
// Elementary statistics.
// ---------------------------------------------------------------------------

inline double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) throw std::invalid_argument("median of empty set");
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------
// Weighted moments (Gaussian update reference).
// ---------------------------------------------------------------------------

// mu_t = sum_n w_n u_t^n, one horizon step at a time.
inline Eigen::MatrixXd weighted_mean(const std::vector<Eigen::MatrixXd>& controls,
                                     const Eigen::VectorXd& w) {
  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(controls[0].rows(), controls[0].cols());
  for (std::size_t n = 0; n < controls.size(); ++n) mu += w(static_cast<int>(n)) * controls[n];
  return mu;
}

// Sigma_t = sum_n w_n (u_t^n - mu_t)(u_t^n - mu_t)^T for one step t.
inline Eigen::MatrixXd weighted_scatter(const std::vector<Eigen::MatrixXd>& controls,
                                        const Eigen::VectorXd& w, const Eigen::MatrixXd& mu,
                                        int t) {
  const int nu = static_cast<int>(controls[0].cols());
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(nu, nu);
  for (std::size_t n = 0; n < controls.size(); ++n) {
    const Eigen::VectorXd d = controls[n].row(t).transpose() - mu.row(t).transpose();
    sigma += w(static_cast<int>(n)) * d * d.transpose();
  }
  return sigma;
}

// The library's documented covariance post-processing: trace-scaled jitter
// then an eigenvalue floor.
inline Eigen::MatrixXd jitter_and_floor(Eigen::MatrixXd sigma, double floor) {
  const double jitter = 1e-8 * std::max(sigma.trace(), 0.0) / static_cast<double>(sigma.rows());
  sigma.diagonal().array() += jitter;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// ---------------------------------------------------------------------------
// Gaussian mixture EM, probability space.
// ---------------------------------------------------------------------------

inline double gaussian_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                           const Eigen::MatrixXd& cov) {
  const int d = static_cast<int>(x.size());
  const Eigen::VectorXd diff = x - mu;
  const double quad = diff.transpose() * cov.inverse() * diff;
  const double norm =
      std::sqrt(std::pow(2.0 * std::numbers::pi, d) * cov.determinant());
  return std::exp(-0.5 * quad) / norm;
}

struct GmmParams {
  Eigen::VectorXd phi;
  std::vector<Eigen::MatrixXd> means;              // L of T x nu
  std::vector<std::vector<Eigen::MatrixXd>> covs;  // [L][T]
};

// Per-(n, t) responsibilities eta[n](l, t).
inline std::vector<Eigen::MatrixXd> responsibilities(const GmmParams& p,
                                                     const std::vector<Eigen::MatrixXd>& u) {
  const int L = static_cast<int>(p.phi.size());
  const int T = static_cast<int>(p.means[0].rows());
  std::vector<Eigen::MatrixXd> eta(u.size(), Eigen::MatrixXd::Zero(L, T));
  for (std::size_t n = 0; n < u.size(); ++n) {
    for (int t = 0; t < T; ++t) {
      double total = 0.0;
      for (int l = 0; l < L; ++l) {
        const double val = p.phi(l) * gaussian_pdf(u[n].row(t).transpose(),
                                                   p.means[l].row(t).transpose(), p.covs[l][t]);
        eta[n](l, t) = val;
        total += val;
      }
      for (int l = 0; l < L; ++l) eta[n](l, t) /= total;
    }
  }
  return eta;
}

// One full EM round (E-step + M-step) with the documented mass normalization
// N_{l,t} and per-timestep scatter; no re-seed handling (callers must pick
// batches where every component keeps enough mass).
inline GmmParams em_round(const GmmParams& p, const std::vector<Eigen::MatrixXd>& u,
                          const Eigen::VectorXd& w, double floor) {
  const int L = static_cast<int>(p.phi.size());
  const int T = static_cast<int>(p.means[0].rows());
  const int nu = static_cast<int>(p.means[0].cols());
  const auto eta = responsibilities(p, u);

  GmmParams next = p;
  Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(L, T);  // N_{l,t}
  for (std::size_t n = 0; n < u.size(); ++n)
    for (int l = 0; l < L; ++l)
      for (int t = 0; t < T; ++t) mass(l, t) += eta[n](l, t) * w(static_cast<int>(n));

  for (int l = 0; l < L; ++l) {
    for (int t = 0; t < T; ++t) {
      Eigen::VectorXd mu = Eigen::VectorXd::Zero(nu);
      for (std::size_t n = 0; n < u.size(); ++n)
        mu += eta[n](l, t) * w(static_cast<int>(n)) * u[n].row(t).transpose();
      mu /= mass(l, t);
      next.means[l].row(t) = mu.transpose();

      Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(nu, nu);
      for (std::size_t n = 0; n < u.size(); ++n) {
        const Eigen::VectorXd d = u[n].row(t).transpose() - mu;
        scatter += eta[n](l, t) * w(static_cast<int>(n)) * d * d.transpose();
      }
      next.covs[l][t] = jitter_and_floor(scatter / mass(l, t), floor);
    }
  }
  const double total = mass.sum();
  for (int l = 0; l < L; ++l) next.phi(l) = mass.row(l).sum() / total;
  return next;
}

// EM surrogate Q(params | ref): responsibilities from `ref`, expected
// complete-data weighted log-likelihood under `params`.
inline double em_objective(const GmmParams& params, const GmmParams& ref,
                           const std::vector<Eigen::MatrixXd>& u, const Eigen::VectorXd& w) {
  const int L = static_cast<int>(params.phi.size());
  const int T = static_cast<int>(params.means[0].rows());
  const auto eta = responsibilities(ref, u);
  double q = 0.0;
  for (std::size_t n = 0; n < u.size(); ++n)
    for (int l = 0; l < L; ++l)
      for (int t = 0; t < T; ++t)
        q += eta[n](l, t) * w(static_cast<int>(n)) *
             (std::log(params.phi(l)) +
              std::log(gaussian_pdf(u[n].row(t).transpose(),
                                    params.means[l].row(t).transpose(), params.covs[l][t])));
  return q;
}

// Weighted incomplete-data log-likelihood sum_n w_n sum_t log sum_l phi_l N(...).
inline double incomplete_log_likelihood(const GmmParams& p,
                                        const std::vector<Eigen::MatrixXd>& u,
                                        const Eigen::VectorXd& w) {
  const int L = static_cast<int>(p.phi.size());
  const int T = static_cast<int>(p.means[0].rows());
  double ll = 0.0;
  for (std::size_t n = 0; n < u.size(); ++n) {
    for (int t = 0; t < T; ++t) {
      double mix = 0.0;
      for (int l = 0; l < L; ++l)
        mix += p.phi(l) * gaussian_pdf(u[n].row(t).transpose(), p.means[l].row(t).transpose(),
                                       p.covs[l][t]);
      ll += w(static_cast<int>(n)) * std::log(mix);
    }
  }
  return ll;
}

// ---------------------------------------------------------------------------
// Stein update, dense formulas.
// ---------------------------------------------------------------------------

// Per-timestep median-heuristic bandwidths over all unordered particle pairs.
inline std::vector<double> stein_bandwidths(const std::vector<Eigen::MatrixXd>& particles,
                                            double multiplier) {
  const int L = static_cast<int>(particles.size());
  const int T = static_cast<int>(particles[0].rows());
  std::vector<double> h(T, 1.0);
  if (L < 2) return h;
  for (int t = 0; t < T; ++t) {
    std::vector<double> dists;
    for (int l = 0; l < L; ++l)
      for (int m = l + 1; m < L; ++m)
        dists.push_back((particles[l].row(t) - particles[m].row(t)).norm());
    const double med = median_of(dists);
    const double bw = multiplier * med * med / std::log(static_cast<double>(L) + 1.0);
    h[t] = bw > 1e-12 ? bw : 1.0;
  }
  return h;
}

inline double stein_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                           const std::vector<double>& h) {
  const int T = static_cast<int>(a.rows());
  double k = 0.0;
  for (int t = 0; t < T; ++t)
    k += std::exp(-(a.row(t) - b.row(t)).squaredNorm() / h[static_cast<std::size_t>(t)]);
  return k / static_cast<double>(T);
}

// Gradient of stein_kernel with respect to its first argument.
inline Eigen::MatrixXd stein_kernel_grad_a(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                           const std::vector<double>& h) {
  const int T = static_cast<int>(a.rows());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(a.rows(), a.cols());
  for (int t = 0; t < T; ++t) {
    const Eigen::RowVectorXd delta = a.row(t) - b.row(t);
    const double ht = h[static_cast<std::size_t>(t)];
    g.row(t) = -(2.0 / (static_cast<double>(T) * ht)) *
               std::exp(-delta.squaredNorm() / ht) * delta;
  }
  return g;
}

// Full particle update: sample-major grouping (particle l owns samples
// l*S .. (l+1)*S-1), weighted score G_l, kernel transport plus repulsion.
inline std::vector<Eigen::MatrixXd> stein_update(const std::vector<Eigen::MatrixXd>& particles,
                                                 const std::vector<Eigen::MatrixXd>& controls,
                                                 const Eigen::VectorXd& w, double sampling_std,
                                                 double step_size, double multiplier) {
  const int L = static_cast<int>(particles.size());
  const int S = static_cast<int>(controls.size()) / L;
  const auto h = stein_bandwidths(particles, multiplier);

  std::vector<Eigen::MatrixXd> scores(L);
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(particles[0].rows(), particles[0].cols());
    double mass = 0.0;
    for (int s = 0; s < S; ++s) {
      const int n = l * S + s;
      acc += w(n) * (controls[static_cast<std::size_t>(n)] - particles[l]) /
             (sampling_std * sampling_std);
      mass += w(n);
    }
    scores[l] = mass > 0.0 ? Eigen::MatrixXd(acc / mass)
                           : Eigen::MatrixXd::Zero(particles[0].rows(), particles[0].cols());
  }

  std::vector<Eigen::MatrixXd> next(L);
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd dir = Eigen::MatrixXd::Zero(particles[0].rows(), particles[0].cols());
    for (int m = 0; m < L; ++m)
      dir += stein_kernel(particles[m], particles[l], h) * scores[m] +
             stein_kernel_grad_a(particles[m], particles[l], h);
    next[l] = particles[l] + step_size * dir;
  }
  return next;
}

// ---------------------------------------------------------------------------
// Single-stage objective grid scan (the c/d normalization oracle).
// ---------------------------------------------------------------------------

struct SingleStageScan {
  double max_value;  // c
  double min_value;
  double argmax;     // u*
};

inline double single_stage_raw(double u, double lambda, double sigma) {
  const double a = lambda * sigma * sigma;
  return -(lambda / 2.0) * std::exp((lambda / 2.0) * (a - 2.0 * u)) *
         std::erf((a - u) / (std::sqrt(2.0) * sigma));
}

inline SingleStageScan scan_single_stage(int points, double lambda, double sigma) {
  SingleStageScan scan{-1e300, 1e300, 0.0};
  for (int i = 0; i < points; ++i) {
    const double u = -5.0 + 10.0 * static_cast<double>(i) / static_cast<double>(points - 1);
    const double value = single_stage_raw(u, lambda, sigma);
    if (value > scan.max_value) {
      scan.max_value = value;
      scan.argmax = u;
    }
    scan.min_value = std::min(scan.min_value, value);
  }
  return scan;
}

}  // namespace oracle

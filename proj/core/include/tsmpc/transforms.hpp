#pragma once

#include <functional>
#include <span>
#include <variant>

#include <Eigen/Core>

namespace tsmpc {

// ---------------------------------------------------------------------------
// Deformed logarithm / exponential.
//
// log_r(x) = (x^(r-1) - 1) / (r - 1)      for x > 0, r > 0, r != 1
// exp_r(x) = max(0, 1 + (r-1) x)^(1/(r-1)) for r > 0, r != 1
//
// Both reduce to the natural log/exp at r = 1, which is dispatched explicitly
// (the generic formulas divide by r - 1 and must never see r == 1).
// ---------------------------------------------------------------------------

double log_r(double x, double r);
double exp_r(double x, double r);

// Power-law likelihood shape with elite threshold gamma > 0:
//
//   S_r(J) = (1 - J/gamma)^(1/(r-1))  for J < gamma,  0 otherwise
//
// i.e. the deformed exponential after re-absorbing the temperature into the
// threshold. Requires r > 1. Monotone non-increasing in J; S_r(0) = 1 for
// J >= 0. Computed in log space so r close to 1 neither overflows nor loses
// the tail ordering.
double tsallis_likelihood(double cost, double gamma, double r);

// ---------------------------------------------------------------------------
// Elite threshold specification and resolution.
// ---------------------------------------------------------------------------

// Keep the best ceil(fraction * N) samples. fraction in (0, 1].
struct EliteFraction {
  double fraction;
};

// Fixed absolute threshold gamma > 0.
struct EliteThreshold {
  double gamma;
};

using EliteSpec = std::variant<EliteFraction, EliteThreshold>;

// Resolves an EliteSpec against a batch of costs. For a fraction f, returns
// nextafter(k-th smallest cost, +inf) with k = ceil(f * N), so that exactly
// the k best samples satisfy J < gamma when costs are distinct, and the elite
// set is identical under J < gamma and J <= gamma. A batch of all-equal costs
// makes every sample elite. Throws std::invalid_argument on an empty batch or
// a fraction outside (0, 1].
double resolve_gamma(std::span<const double> costs, const EliteSpec& spec);

// ---------------------------------------------------------------------------
// Cost transforms: the three likelihood families as a closed variant.
// ---------------------------------------------------------------------------

struct TsallisTransform {
  double r;  // deformation, > 1
  EliteSpec elite;
};

struct MppiTransform {
  double inv_lambda;  // inverse temperature, > 0
};

struct CemTransform {
  EliteSpec elite;
  double smoothing_alpha = 0.0;  // in [0, 1), blended into the policy update
};

using CostTransform = std::variant<TsallisTransform, MppiTransform, CemTransform>;

// True when the transform needs a resolved elite threshold (Tsallis, CEM).
bool needs_gamma(const CostTransform& transform);

// Resolves the transform's elite spec against a cost batch; returns NaN for
// MPPI, which has no threshold.
double resolve_gamma(const CostTransform& transform, std::span<const double> costs);

// Evaluates the likelihood shape at one cost value:
//   Tsallis: S_r(J) above
//   MPPI:    exp(-inv_lambda * J)
//   CEM:     1{J <= gamma}
// gamma_resolved is the value from resolve_gamma; transforms that need it
// throw std::invalid_argument when handed NaN.
double likelihood(const CostTransform& transform, double cost, double gamma_resolved);

// ---------------------------------------------------------------------------
// Absolute risk aversion of the likelihood shape, A(J) = -S''(J)/S'(J).
// ---------------------------------------------------------------------------

// Closed forms:
//   Tsallis: A(J) = -(r-2) / ((r-1)(gamma - J))   for J < gamma
//   MPPI:    A(J) = inv_lambda                      (constant)
//   CEM:     -inf for J < gamma, +inf for J > gamma, 0 at J == gamma
// Tsallis at J >= gamma is outside the shape's support: std::domain_error.
// The sign law follows directly from the closed form on J < gamma: A > 0
// (risk-seeking under cost minimization) for r < 2, A < 0 (risk-averse) for
// r > 2, and risk-neutral exactly at r = 2.
double ara_coefficient(const CostTransform& transform, double cost, double gamma_resolved);

// Central finite-difference estimate of -S''(J)/S'(J) with step h, using
// 3-point stencils on S for both derivatives. Throws std::domain_error when
// |S'(J)| is numerically zero (flat shape, e.g. a constant function).
double ara_finite_difference(const std::function<double(double)>& shape, double cost,
                             double step);

// Second-order risk premium implied by an ARA value: pi ~= 0.5 * A * var.
// pi estimates (mean cost) - (certainty-equivalent cost): positive means the
// shape tolerates cost variance (risk-seeking), negative penalizes it
// (risk-averse), matching the sign of A under cost minimization.
double absolute_risk_premium(double ara, double cost_variance);

}  // namespace tsmpc

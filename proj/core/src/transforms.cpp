#include "tsmpc/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace tsmpc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_deformation(double r) {
  if (!(r > 0.0)) throw std::invalid_argument("deformation parameter r must be > 0");
}

}  // namespace

double log_r(double x, double r) {
  check_deformation(r);
  if (!(x > 0.0)) throw std::domain_error("log_r requires x > 0");
  if (r == 1.0) return std::log(x);
  return std::expm1((r - 1.0) * std::log(x)) / (r - 1.0);
}

double exp_r(double x, double r) {
  check_deformation(r);
  if (r == 1.0) return std::exp(x);
  const double arg = (r - 1.0) * x;
  if (arg <= -1.0) return 0.0;
  return std::exp(std::log1p(arg) / (r - 1.0));
}

double tsallis_likelihood(double cost, double gamma, double r) {
  if (!(r > 1.0)) throw std::invalid_argument("tsallis_likelihood requires r > 1");
  if (!(gamma > 0.0)) throw std::invalid_argument("tsallis_likelihood requires gamma > 0");
  if (cost >= gamma) return 0.0;
  return std::exp(std::log1p(-cost / gamma) / (r - 1.0));
}

double resolve_gamma(std::span<const double> costs, const EliteSpec& spec) {
  if (const auto* absolute = std::get_if<EliteThreshold>(&spec)) {
    if (!(absolute->gamma > 0.0))
      throw std::invalid_argument("elite threshold gamma must be > 0");
    return absolute->gamma;
  }
  const double fraction = std::get<EliteFraction>(spec).fraction;
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("elite fraction must lie in (0, 1]");
  if (costs.empty()) throw std::invalid_argument("resolve_gamma: empty cost batch");

  const auto n = static_cast<std::ptrdiff_t>(costs.size());
  auto k = static_cast<std::ptrdiff_t>(std::ceil(fraction * static_cast<double>(n)));
  k = std::clamp<std::ptrdiff_t>(k, 1, n);

  std::vector<double> work(costs.begin(), costs.end());
  std::nth_element(work.begin(), work.begin() + (k - 1), work.end());
  return std::nextafter(work[k - 1], kInf);
}

bool needs_gamma(const CostTransform& transform) {
  return !std::holds_alternative<MppiTransform>(transform);
}

double resolve_gamma(const CostTransform& transform, std::span<const double> costs) {
  if (const auto* tsallis = std::get_if<TsallisTransform>(&transform))
    return resolve_gamma(costs, tsallis->elite);
  if (const auto* cem = std::get_if<CemTransform>(&transform))
    return resolve_gamma(costs, cem->elite);
  return kNaN;
}

double likelihood(const CostTransform& transform, double cost, double gamma_resolved) {
  if (const auto* mppi = std::get_if<MppiTransform>(&transform)) {
    if (!(mppi->inv_lambda > 0.0))
      throw std::invalid_argument("MPPI inverse temperature must be > 0");
    return std::exp(-mppi->inv_lambda * cost);
  }
  if (std::isnan(gamma_resolved))
    throw std::invalid_argument("likelihood: transform requires a resolved elite threshold");
  if (const auto* tsallis = std::get_if<TsallisTransform>(&transform))
    return tsallis_likelihood(cost, gamma_resolved, tsallis->r);
  return cost <= gamma_resolved ? 1.0 : 0.0;
}

double ara_coefficient(const CostTransform& transform, double cost, double gamma_resolved) {
  if (const auto* mppi = std::get_if<MppiTransform>(&transform)) return mppi->inv_lambda;
  if (std::isnan(gamma_resolved))
    throw std::invalid_argument("ara_coefficient: transform requires a resolved elite threshold");
  if (const auto* tsallis = std::get_if<TsallisTransform>(&transform)) {
    if (cost >= gamma_resolved)
      throw std::domain_error("ara_coefficient: Tsallis shape is flat at costs >= gamma");
    return -(tsallis->r - 2.0) / ((tsallis->r - 1.0) * (gamma_resolved - cost));
  }
  if (cost < gamma_resolved) return -kInf;
  if (cost > gamma_resolved) return kInf;
  return 0.0;
}

double ara_finite_difference(const std::function<double(double)>& shape, double cost,
                             double step) {
  if (!(step > 0.0)) throw std::invalid_argument("ara_finite_difference: step must be > 0");
  const double first =
      (shape(cost + step) - shape(cost - step)) / (2.0 * step);
  const double second =
      (shape(cost + step) - 2.0 * shape(cost) + shape(cost - step)) / (step * step);
  if (std::abs(first) < std::numeric_limits<double>::min() * 1e4 ||
      !std::isfinite(first))
    throw std::domain_error("ara_finite_difference: shape derivative vanishes at this cost");
  return -second / first;
}

double absolute_risk_premium(double ara, double cost_variance) {
  if (!(cost_variance >= 0.0))
    throw std::invalid_argument("absolute_risk_premium: variance must be >= 0");
  return 0.5 * ara * cost_variance;
}

}  // namespace tsmpc

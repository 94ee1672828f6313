#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Core>

namespace tsmpc {

// One finalizer round of SplitMix64. Used to derive well-mixed child seeds from
// structured inputs (trial seed, timestep, sample index, ...).
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministically combines a list of 64-bit words into a single seed.
// Pure integer arithmetic, so results are identical across platforms.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x9e3779b97f4a7c15ull;
  for (std::uint64_t w : words) {
    std::uint64_t s = w;
    h ^= splitmix64_next(s) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  }
  std::uint64_t s = h;
  return splitmix64_next(s);
}

// Deterministic random stream. Wraps std::mt19937_64 (whose output sequence is
// fully specified by the standard) with explicit uniform/normal conversions so
// draws are bit-reproducible across platforms and library versions; the
// distributions in <random> do not guarantee that.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; caches the second variate of each pair.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // 1 - u in (0, 1] keeps the log argument away from zero.
    const double radius = std::sqrt(-2.0 * std::log(1.0 - uniform()));
    const double angle = 2.0 * EIGEN_PI * uniform();
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal();
    return m;
  }

  // Samples an index from a probability vector (entries >= 0, summing to ~1).
  int categorical(const Eigen::VectorXd& probs) {
    const double u = uniform();
    double cumulative = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      cumulative += probs(i);
      if (u < cumulative) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size() - 1);  // guards rounding drift
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace tsmpc

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "innodpc/types.hpp"

namespace innodpc {

// Deterministic Gaussian stream: mt19937_64 + Box-Muller. We avoid
// std::normal_distribution because its output is not pinned by the standard
// and differs across library implementations; Monte Carlo results must be
// reproducible from the seed alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform on (0, 1]; never returns 0, so log() below is safe.
  double uniform() {
    return (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
  }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(phi);
    have_spare_ = true;
    return r * std::cos(phi);
  }

  double gaussian(double mean, double stddev) {
    return mean + stddev * gaussian();
  }

  // Column vector of i.i.d. N(0, 1) draws.
  Vector gaussian_vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = gaussian();
    return v;
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Per-run substreams: decorrelate Monte Carlo runs by striding the base seed
// with a large prime. Component offsets (+0 offline input, +1 offline noise,
// +2 test input, +3 test noise, +4 loop noise, +5 warmup input) are added on
// top of the run seed by the harness.
inline constexpr std::uint64_t kSeedStride = 1000000007ULL;

inline std::uint64_t run_seed(std::uint64_t base_seed, std::uint64_t run_index) {
  return base_seed + run_index * kSeedStride;
}

}  // namespace innodpc

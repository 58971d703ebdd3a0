#pragma once

// Random streams and the handful of variates the engine needs.  Everything
// takes an explicit engine; there is no global generator.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>

namespace hpyts {

using Rng = std::mt19937_64;

// splitmix64 finalizer, used to derive independent sub-stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a) noexcept {
  return mix_seed(mix_seed(base) ^ (a * 0xd1b54a32d192ed03ULL + 1));
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) noexcept {
  return derive_seed(derive_seed(base, a), b);
}

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform on the open interval (0, 1).
inline double uniform_open(Rng& rng) {
  double u;
  do { u = uniform01(rng); } while (u == 0.0);
  return u;
}

inline std::size_t uniform_index(std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  return d(rng);
}

// log of a Gamma(shape, 1) variate.  Small shapes use the shape-boosting identity
// G(a) = G(a+1) U^{1/a} so the result stays finite when G(a) underflows.
inline double log_gamma_variate(double shape, Rng& rng) {
  if (!(shape > 0.0) || !std::isfinite(shape))
    throw std::invalid_argument("log_gamma_variate: shape must be positive and finite");
  if (shape >= 1.0) {
    std::gamma_distribution<double> g(shape, 1.0);
    double x;
    do { x = g(rng); } while (x <= 0.0);
    return std::log(x);
  }
  std::gamma_distribution<double> g(shape + 1.0, 1.0);
  double x;
  do { x = g(rng); } while (x <= 0.0);
  return std::log(x) + std::log(uniform_open(rng)) / shape;
}

// Beta(a, b) variate via two gamma variates combined in log space.
inline double sample_beta(double a, double b, Rng& rng) {
  const double lx = log_gamma_variate(a, rng);
  const double ly = log_gamma_variate(b, rng);
  const double hi = std::max(lx, ly);
  const double lse = hi + std::log(std::exp(lx - hi) + std::exp(ly - hi));
  return std::exp(lx - lse);
}

// Index drawn with probability proportional to weights (non-negative).
inline std::size_t sample_categorical(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw std::invalid_argument("sample_categorical: weights must be finite and non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("sample_categorical: all weights are zero");
  double u = uniform01(rng) * total;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last_positive = i;
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return last_positive;
}

}  // namespace hpyts

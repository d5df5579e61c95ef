// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace topics {

inline std::mt19937_64 seeded_rng(std::uint64_t seed) {
  return std::mt19937_64{seed};
}

// Uniform double in [0, 1) built from the top 53 bits of one draw.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform index in [0, n) by rejection, so the result does not depend on
// how the standard library implements its distributions.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t draw;
  do {
    draw = rng();
  } while (draw >= limit);
  return static_cast<std::size_t>(draw % n);
}

// Draw one index from unnormalized nonnegative weights summing to `total`.
inline std::size_t draw_categorical(std::span<const double> weights,
                                    double total, std::mt19937_64& rng) {
  double u = uniform01(rng) * total;
  for (std::size_t k = 0; k + 1 < weights.size(); ++k) {
    u -= weights[k];
    if (u < 0.0) return k;
  }
  return weights.size() - 1;
}

inline std::size_t draw_categorical(std::span<const double> weights,
                                    std::mt19937_64& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  return draw_categorical(weights, total, rng);
}

// Normalized vector of i.i.d. unit exponentials: a flat-Dirichlet draw.
inline void random_simplex(std::mt19937_64& rng, std::span<double> out) {
  double total = 0.0;
  for (double& x : out) {
    x = -std::log(1.0 - uniform01(rng));
    total += x;
  }
  for (double& x : out) x /= total;
}

// Histogram (counts / r) of r draws from the distribution p, sampled as a
// multinomial via a chain of conditional binomials. Distributionally
// identical to aggregating r categorical draws, but O(K) in r.
inline void multinomial_histogram(std::span<const double> p, std::uint64_t r,
                                  std::mt19937_64& rng,
                                  std::span<double> out) {
  if (r == 0)
    throw std::invalid_argument("multinomial_histogram: r must be positive");
  double mass_left = 0.0;
  for (double x : p) mass_left += x;
  std::uint64_t draws_left = r;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (draws_left == 0) {
      out[k] = 0.0;
      continue;
    }
    if (k + 1 == p.size()) {
      out[k] = static_cast<double>(draws_left) / static_cast<double>(r);
      break;
    }
    double q = p[k] / mass_left;
    if (q > 1.0) q = 1.0;
    std::binomial_distribution<std::uint64_t> binom(draws_left, q);
    const std::uint64_t c = binom(rng);
    out[k] = static_cast<double>(c) / static_cast<double>(r);
    draws_left -= c;
    mass_left -= p[k];
    if (mass_left <= 0.0) mass_left = 0.0;
  }
}

// Histogram (counts / |samples|) of explicit 0-based category draws.
inline std::vector<double> histogram_from_samples(
    std::span<const std::uint32_t> samples, std::size_t k) {
  std::vector<double> hist(k, 0.0);
  for (std::uint32_t s : samples) hist[s] += 1.0;
  for (double& x : hist) x /= static_cast<double>(samples.size());
  return hist;
}

// Total variation distance: half the L1 distance between two discrete
// distributions over the same support.
inline double total_variation(std::span<const double> a,
                              std::span<const double> b) {
  double l1 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) l1 += std::abs(a[i] - b[i]);
  return 0.5 * l1;
}

}  // namespace topics

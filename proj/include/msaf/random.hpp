#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace msaf {

using Rng = std::mt19937_64;

/// Child seed for a parallel branch; results never depend on scheduling because
/// every branch derives its stream from (master seed, branch index) alone.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t branch);

/// Uniform double in [0, 1) with a fixed bit recipe (53 random bits), so the value
/// sequence is identical across standard library implementations.
double uniform01(Rng& rng);

/// Uniform integer in [0, n).
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Standard normal deviate (Marsaglia polar method on top of uniform01).
double standard_normal(Rng& rng);

/// Fisher-Yates shuffle driven by uniform_index.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

/// k distinct indices drawn from [0, n), in draw order.
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

}  // namespace msaf

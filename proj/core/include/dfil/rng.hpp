#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

#include "dfil/errors.hpp"

namespace dfil {

// Deterministic random source. The engine (mt19937_64) is bit-exact across
// platforms per the standard; the distributions are implemented here because
// the std:: distribution algorithms are implementation-defined and would
// break byte-identical reproducibility between toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. Uses 1 - u so the log argument is (0, 1].
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ParameterError("Rng::below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r = engine_();
    while (r >= limit) r = engine_();
    return r % n;
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices from [0, n), in selection order.
  std::vector<std::size_t> pick_without_replacement(std::size_t n,
                                                    std::size_t k) {
    if (k > n) {
      throw ParameterError("Rng::pick_without_replacement: k exceeds n");
    }
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(below(n - i));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

// Derives an independent stream seed from a base seed and a tag path,
// e.g. derive_seed(cfg.seed, {kShuffleStream, task, epoch}). Every consumer
// of randomness in the library draws from a stream derived this way, which
// is what makes whole runs reproducible from a single config seed.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = detail::splitmix64(base);
  for (std::uint64_t t : tags) h = detail::splitmix64(h ^ t);
  return h;
}

// Stream tags (first element of the derive_seed tag path).
inline constexpr std::uint64_t kInitStream = 0x01;
inline constexpr std::uint64_t kShuffleStream = 0x02;
inline constexpr std::uint64_t kReplayStream = 0x03;
inline constexpr std::uint64_t kDataStream = 0x04;

}  // namespace dfil

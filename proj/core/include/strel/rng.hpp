#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace strel {

// Deterministic random source. All randomness in a run flows from one root
// seed; components derive independent substreams by name so that adding a
// consumer in one place does not shift the draws seen elsewhere.
//
// Distributions are implemented by hand on top of mt19937_64 because the
// standard library leaves distribution algorithms implementation-defined and
// datasets / training runs must be reproducible bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  static Rng substream(std::uint64_t root_seed, std::string_view name);

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive. Rejection sampling, no modulo bias.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // Standard normal via Box-Muller; two fresh uniform draws per call.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string serialize() const;
  void deserialize(const std::string& state);

 private:
  std::mt19937_64 gen_;
};

// 64-bit FNV-1a over a string; stable across platforms (std::hash is not).
std::uint64_t fnv1a64(std::string_view s);

// splitmix64 finalizer, used to decorrelate derived seeds.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace strel

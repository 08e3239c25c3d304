#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace panelfactor {

// Documented default seed used everywhere a seed is optional.
inline constexpr std::uint64_t kDefaultSeed = 12345;

namespace detail {

// SplitMix64 finalizer; stateless mix used for seeding and token absorption.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  return mix64(state += 0x9E3779B97F4A7C15ULL);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

// xoshiro256++ generator with counter-style substreams: the state is derived
// from (seed, token...) through a SplitMix64 chain, so a substream's output
// depends only on the seed and its tokens, never on execution order. Normal
// draws use Box-Muller on the raw uniforms; std::normal_distribution is
// implementation-defined and is deliberately not used anywhere.
class Rng {
 public:
  static Rng from_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {}) {
    std::uint64_t chain = detail::mix64(seed + 0x9E3779B97F4A7C15ULL);
    for (std::uint64_t token : stream) {
      chain = detail::mix64(chain ^ detail::mix64(token + 0xD1B54A32D192ED03ULL));
    }
    Rng r;
    std::uint64_t sm = chain;
    for (auto& word : r.state_) word = detail::splitmix64(sm);
    if ((r.state_[0] | r.state_[1] | r.state_[2] | r.state_[3]) == 0) r.state_[0] = 1;
    return r;
  }

  // Single mixed word for deriving child seeds from (seed, token...).
  static std::uint64_t derive_token(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
    std::uint64_t chain = detail::mix64(seed + 0x9E3779B97F4A7C15ULL);
    for (std::uint64_t token : stream) {
      chain = detail::mix64(chain ^ detail::mix64(token + 0xD1B54A32D192ED03ULL));
    }
    return chain;
  }

  std::uint64_t next_u64() {
    std::uint64_t result = detail::rotl64(state_[0] + state_[3], 23) + state_[0];
    std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl64(state_[3], 45);
    return result;
  }

  // Uniform on (0, 1]: 53-bit mantissa, never exactly zero so log() is safe.
  double next_unit() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // N(0,1) via Box-Muller, cosine branch. Consumes exactly two words.
  double next_normal() {
    double u1 = next_unit();
    double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::array<std::uint64_t, 4> state_{};
};

}  // namespace panelfactor

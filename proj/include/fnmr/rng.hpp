/*
 * Copyright 2026 The fnmr-audit Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Counter-derived random streams.
//
// Every stochastic step in the library draws from a stream that is a pure
// function of (seed, counters...), so replicates and simulation runs can be
// executed in any order, on any number of threads, with identical output.

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace fnmr {

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a. Used to key streams by group label and to hash configs.
inline constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Combines a key into a running stream key. Order-sensitive.
inline constexpr std::uint64_t derive_key(std::uint64_t key,
                                          std::uint64_t counter) noexcept {
  return splitmix64_mix(key ^ splitmix64_mix(counter + 0x9e3779b97f4a7c15ULL));
}

template <typename... Counters>
inline constexpr std::uint64_t derive_key(std::uint64_t key, std::uint64_t first,
                                          Counters... rest) noexcept {
  return derive_key(derive_key(key, first), static_cast<std::uint64_t>(rest)...);
}

/// xoshiro256** seeded through splitmix64. Satisfies
/// UniformRandomBitGenerator so it can drive boost::random distributions.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t key) noexcept {
    std::uint64_t s = key;
    for (auto& word : state_) {
      s += 0x9e3779b97f4a7c15ULL;
      word = splitmix64_mix(s);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform integer in [0, bound). Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t bound) noexcept {
    __uint128_t product = static_cast<__uint128_t>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(product);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        product = static_cast<__uint128_t>((*this)()) * bound;
        low = static_cast<std::uint64_t>(product);
      }
    }
    return static_cast<std::uint64_t>(product >> 64);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
};

}  // namespace fnmr

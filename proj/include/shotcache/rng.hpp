/*
 * Copyright 2026 The shotcache Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <limits>

namespace shotcache {

/// Stream tags: one independent substream per purpose.
enum class StreamTag : std::uint64_t {
  catalog = 1,
  requests = 2,
  routing = 3,
  features = 4,
  oracle = 5,
};

/// SplitMix64 generator whose starting state is derived from (seed, id, tag),
/// so every shot gets its own reproducible stream for each purpose.
/// Satisfies UniformRandomBitGenerator.
class KeyedStream {
 public:
  using result_type = std::uint64_t;

  KeyedStream(std::uint64_t seed, std::uint64_t id, StreamTag tag)
      : state_(mix(mix(seed ^ 0x6a09e667f3bcc909ULL) ^ (id * 0x9e3779b97f4a7c15ULL) ^
                   (static_cast<std::uint64_t>(tag) << 56))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  /// Uniform double in (0, 1]; never exactly 0.
  double open_unit() { return ((*this)() >> 11) * 0x1.0p-53 + 0x1.0p-53; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace shotcache

/* Copyright 2026 The SRT Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstdint>
#include <initializer_list>

namespace srt {

// Counter-based uniform draws.
//
// A draw is a pure function of (seed, sequence_id, position):
//
//   key     = seed XOR mix64(sequence_id)
//   state   = key + (position + 1) * 0x9E3779B97F4A7C15   (mod 2^64)
//   bits    = mix64(state)
//   value   = (bits >> 11) * 2^-53                          in [0, 1)
//
// mix64 is the SplitMix64 finalizer, so for a fixed key the draws are exactly
// the SplitMix64 output stream starting at `key`. Nothing about earlier draws
// influences a later one, which is what lets a speculative decoder and a plain
// decoder consume identical randomness at identical output positions.

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr double bits_to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

struct RngDraw {
  double value = 0.0;
};

constexpr RngDraw rng_draw(std::uint64_t seed, std::uint64_t sequence_id,
                           std::uint64_t position) {
  const std::uint64_t key = seed ^ mix64(sequence_id);
  return RngDraw{bits_to_unit(mix64(key + (position + 1) * kGoldenGamma))};
}

// Order-sensitive hash of several words; used to key procedural tables.
constexpr std::uint64_t hash_words(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x243F6A8885A308D3ULL;
  for (std::uint64_t w : words) h = mix64(h ^ (w + kGoldenGamma));
  return h;
}

}  // namespace srt

// Copyright 2026 The crosscam Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace crosscam {

/// splitmix64 finalizer; a good 64-bit mixer for deriving independent seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Order-sensitive hash of a seed and a key path, e.g. (seed, identity, camera, index).
inline std::uint64_t hash_keys(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = mix64(seed);
    for (auto k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
    return h;
}

/// FNV-1a over bytes; stable across platforms, used for config hashes.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Engine seeded from a key path, so each stream is independent of the order
/// in which streams are created.
inline std::mt19937_64 keyed_engine(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    return std::mt19937_64(hash_keys(seed, keys));
}

/// Uniform double in [0, 1) from an engine, independent of the standard
/// library's distribution implementation.
inline double uniform01(std::mt19937_64& eng) { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }

/// Standard normal via Box-Muller on uniform01 (implementation-independent).
inline double standard_normal(std::mt19937_64& eng) {
    double u1 = uniform01(eng);
    while (u1 <= 0.0) u1 = uniform01(eng);
    const double u2 = uniform01(eng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Uniform integer in [0, n) without modulo bias.
inline std::size_t uniform_index(std::mt19937_64& eng, std::size_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r = eng();
    while (r >= limit) r = eng();
    return static_cast<std::size_t>(r % n);
}

/// Fisher-Yates shuffle on uniform_index, so the permutation only depends on
/// the engine state.
template <typename RandomIt>
void shuffle_with(RandomIt first, RandomIt last, std::mt19937_64& eng) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) std::swap(first[i - 1], first[uniform_index(eng, i)]);
}

}  // namespace crosscam

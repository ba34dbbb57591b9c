// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace dfpo {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent generator for sub-stream (a, b) of a run seed. Used so that
/// per-start sampling does not depend on evaluation order or thread count.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0)
{
    return std::mt19937_64(splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b));
}

}  // namespace dfpo

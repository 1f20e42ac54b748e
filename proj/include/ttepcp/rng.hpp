// Copyright 2026 The ttepcp Authors
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

#include <cstdint>
#include <random>

namespace ttepcp {

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for stream `index` under `root`, further keyed by a purpose tag so
/// that e.g. patient streams and bootstrap streams never coincide.
constexpr std::uint64_t stream_seed(std::uint64_t root, std::uint64_t index, std::uint64_t tag = 0)
{
    return mix64(mix64(root ^ mix64(tag)) + index);
}

using Rng = std::mt19937_64;

inline Rng make_stream(std::uint64_t root, std::uint64_t index, std::uint64_t tag = 0)
{
    return Rng{stream_seed(root, index, tag)};
}

/// Uniform draw on [0, 1) from 53 random bits; platform-independent.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace ttepcp

// Copyright 2026 The promptseg Authors
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

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace promptseg
{

/// Caller supplied something that violates a documented precondition.
class InvalidArgument : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

/// The operation is valid in general but not in the current state (e.g. undo at round 0).
class StateError : public std::logic_error
{
public:
  using std::logic_error::logic_error;
};

/// File or stream failure, including malformed on-disk formats.
class IoError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Voxel index in (z, y, x) order.
struct Voxel
{
  int z = 0;
  int y = 0;
  int x = 0;
  friend bool operator==(const Voxel &, const Voxel &) = default;
};

/// In-plane (axial) pixel index in (y, x) order.
struct Pixel
{
  int y = 0;
  int x = 0;
  friend bool operator==(const Pixel &, const Pixel &) = default;
};

using Shape3 = std::array<int, 3>;
using Vec3 = std::array<double, 3>;

inline std::size_t voxel_count(const Shape3 & s)
{
  return static_cast<std::size_t>(s[0]) * static_cast<std::size_t>(s[1]) *
         static_cast<std::size_t>(s[2]);
}

/// Seeded generator with portable distributions. All randomness in the library
/// flows through this type so results are reproducible across standard libraries.
class Rng
{
public:
  explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

  void reseed(std::uint64_t seed)
  {
    // splitmix64 expansion of the seed into xoshiro256** state
    for (auto & s : state_) {
      seed += 0x9E3779B97F4A7C15ULL;
      std::uint64_t z = seed;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
      s = z ^ (z >> 31);
    }
    has_spare_ = false;
  }

  std::uint64_t next_u64()
  {
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

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi)
  {
    if (hi <= lo) {
      return lo;
    }
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t r = 0;
    do {
      r = next_u64();
    } while (r >= limit);
    return lo + static_cast<std::int64_t>(r % span);
  }

  /// Index in [0, n).
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(n) - 1)); }

  bool bernoulli(double p) { return uniform() < p; }

  double normal(double mean = 0.0, double sigma = 1.0)
  {
    if (has_spare_) {
      has_spare_ = false;
      return mean + sigma * spare_;
    }
    double u = 0.0;
    do {
      u = uniform();
    } while (u <= 0.0);
    const double v = uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    spare_ = r * std::sin(2.0 * std::numbers::pi * v);
    has_spare_ = true;
    return mean + sigma * r * std::cos(2.0 * std::numbers::pi * v);
  }

  /// Independent child stream, used to give each case or worker its own generator.
  Rng fork(std::uint64_t salt) { return Rng(next_u64() ^ (salt * 0xD1B54A32D192ED03ULL)); }

private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Stable 64-bit FNV-1a hash, used for config fingerprints and per-case seeds.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xCBF29CE484222325ULL)
{
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace promptseg

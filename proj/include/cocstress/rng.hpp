// Copyright 2026 The cocstress Authors
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

// Counter-based random numbers (Philox4x32-10) and stable seed derivation.
//
// Every random draw in the harness is a pure function of (key, counter), so
// results do not depend on thread count or on the order clips are processed.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace cocstress
{

namespace detail
{

inline void mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t & hi, std::uint32_t & lo)
{
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a(std::uint64_t h, std::string_view bytes)
{
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a_u64(std::uint64_t h, std::uint64_t v)
{
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xFF;
    h *= kFnvPrime;
  }
  return h;
}

}  // namespace detail

inline std::uint64_t splitmix64(std::uint64_t z)
{
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
struct Philox4x32
{
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key)
  {
    constexpr std::uint32_t kM0 = 0xD2511F53;
    constexpr std::uint32_t kM1 = 0xCD9E8D57;
    constexpr std::uint32_t kW0 = 0x9E3779B9;
    constexpr std::uint32_t kW1 = 0xBB67AE85;
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      std::uint32_t hi0, lo0, hi1, lo1;
      detail::mulhilo32(kM0, ctr[0], hi0, lo0);
      detail::mulhilo32(kM1, ctr[2], hi1, lo1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

  static Key key_from(std::uint64_t k)
  {
    return {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  }

  static Counter counter_from(std::uint64_t block, std::uint64_t stream = 0)
  {
    return {
      static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  }
};

// 53-bit uniform strictly inside (0, 1).
inline double uniform_open(std::uint32_t hi, std::uint32_t lo)
{
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 21) ^ (lo >> 11);
  return (static_cast<double>(bits & ((1ULL << 53) - 1)) + 0.5) * 0x1.0p-53;
}

/// Two independent standard normals for one Philox block (Box-Muller).
inline std::array<double, 2> normal_pair(std::uint64_t key, std::uint64_t block)
{
  const auto r = Philox4x32::generate(Philox4x32::counter_from(block), Philox4x32::key_from(key));
  const double u1 = uniform_open(r[0], r[1]);
  const double u2 = uniform_open(r[2], r[3]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  constexpr double two_pi = 6.283185307179586476925286766559;
  return {radius * std::cos(two_pi * u2), radius * std::sin(two_pi * u2)};
}

/// Sequential view over a Philox stream, for code that wants next()-style draws.
class CounterRng
{
public:
  explicit CounterRng(std::uint64_t key, std::uint64_t stream = 0) : key_(key), stream_(stream) {}

  std::uint32_t next_u32()
  {
    if (lane_ == 4) {
      buf_ = Philox4x32::generate(
        Philox4x32::counter_from(block_++, stream_), Philox4x32::key_from(key_));
      lane_ = 0;
    }
    return buf_[lane_++];
  }

  std::uint64_t next_u64()
  {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  double uniform()
  {
    const std::uint32_t hi = next_u32();
    return uniform_open(hi, next_u32());
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) by rejection on the multiply-high method.
  std::uint64_t below(std::uint64_t n)
  {
    if (n <= 1) {
      return 0;
    }
    const std::uint64_t threshold = (0 - n) % n;
    while (true) {
      const std::uint64_t x = next_u64();
      const unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
      if (static_cast<std::uint64_t>(m) >= threshold) {
        return static_cast<std::uint64_t>(m >> 64);
      }
    }
  }

  double normal()
  {
    const double u1 = uniform();
    const double u2 = uniform();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

private:
  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  Philox4x32::Counter buf_{};
  int lane_ = 4;
};

/// Builder for stable 64-bit keys from heterogeneous fields. The encoding is
/// length-prefixed so ("ab","c") and ("a","bc") hash differently.
class KeyBuilder
{
public:
  KeyBuilder & add(std::uint64_t v)
  {
    h_ = detail::fnv1a_u64(h_, v);
    return *this;
  }
  KeyBuilder & add(std::int64_t v) { return add(static_cast<std::uint64_t>(v)); }
  KeyBuilder & add(int v) { return add(static_cast<std::uint64_t>(static_cast<std::int64_t>(v))); }
  KeyBuilder & add(std::string_view s)
  {
    h_ = detail::fnv1a_u64(h_, s.size());
    h_ = detail::fnv1a(h_, s);
    return *this;
  }
  KeyBuilder & add(const char * s) { return add(std::string_view(s)); }
  KeyBuilder & add(const std::string & s) { return add(std::string_view(s)); }

  std::uint64_t finish() const { return splitmix64(h_); }

private:
  std::uint64_t h_ = detail::kFnvOffset;
};

/// Identity of one perturbation draw. The derived key depends only on these
/// four fields, never on scheduling.
struct SeedDerivation
{
  std::uint64_t campaign_seed = 42;
  std::string clip_id;
  std::int64_t frame_index = 0;
  std::string perturbation_kind;

  std::uint64_t stream_key() const
  {
    return KeyBuilder{}
      .add(campaign_seed)
      .add(clip_id)
      .add(frame_index)
      .add(perturbation_kind)
      .finish();
  }
};

}  // namespace cocstress

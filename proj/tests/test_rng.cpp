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

#include <gtest/gtest.h>

#include <set>
#include <thread>

#include "test_support.hpp"

using namespace cocstress;

// Known-answer vectors published with the Random123 library.
TEST(Philox, KnownAnswerZero)
{
  const auto r = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(r, (Philox4x32::Counter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
}

TEST(Philox, KnownAnswerAllOnes)
{
  const auto r = Philox4x32::generate({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff});
  EXPECT_EQ(r, (Philox4x32::Counter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
}

TEST(Philox, KnownAnswerPi)
{
  const auto r = Philox4x32::generate({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0});
  EXPECT_EQ(r, (Philox4x32::Counter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(SeedDerivation, PureFunctionOfFields)
{
  SeedDerivation a{42, "clip_7", 3, "noise_30"};
  SeedDerivation b = a;
  EXPECT_EQ(a.stream_key(), b.stream_key());
  std::set<std::uint64_t> keys{a.stream_key()};
  b.campaign_seed = 43;
  keys.insert(b.stream_key());
  b = a;
  b.clip_id = "clip_8";
  keys.insert(b.stream_key());
  b = a;
  b.frame_index = 4;
  keys.insert(b.stream_key());
  b = a;
  b.perturbation_kind = "noise_50";
  keys.insert(b.stream_key());
  EXPECT_EQ(keys.size(), 5u);
}

TEST(SeedDerivation, LengthPrefixSeparatesFieldBoundaries)
{
  EXPECT_NE(KeyBuilder{}.add("ab").add("c").finish(), KeyBuilder{}.add("a").add("bc").finish());
}

TEST(SeedDerivation, NoCollisionsAcrossManyTuples)
{
  std::set<std::uint64_t> keys;
  std::size_t n = 0;
  for (int c = 0; c < 50; ++c)
    for (int f = 0; f < 20; ++f)
      for (const char * k : {"noise_10", "noise_30", "dark", "fog_heavy"}) {
        keys.insert(SeedDerivation{42, "clip_" + std::to_string(c), f, k}.stream_key());
        ++n;
      }
  EXPECT_EQ(keys.size(), n);
}

TEST(CounterRng, UniformMomentsAndRange)
{
  CounterRng rng(123);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sq += u * u;
  }
  const double m = sum / n;
  EXPECT_NEAR(m, 0.5, 0.005);
  EXPECT_NEAR(sq / n - m * m, 1.0 / 12.0, 0.002);
}

TEST(CounterRng, BelowIsInRangeAndCoversAll)
{
  CounterRng rng(9);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    ++hits[v];
  }
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(NormalPair, MomentsMatchStandardNormal)
{
  double sum = 0.0, sq = 0.0;
  const int blocks = 100000;
  for (int b = 0; b < blocks; ++b) {
    const auto z = normal_pair(77, static_cast<std::uint64_t>(b));
    for (double v : z) {
      sum += v;
      sq += v * v;
    }
  }
  const double n = 2.0 * blocks;
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.01);
}

TEST(NormalPair, IndependentOfEvaluationOrderAndThread)
{
  std::vector<double> forward, reverse(1000), threaded(1000);
  for (int b = 0; b < 500; ++b) {
    const auto z = normal_pair(5, b);
    forward.push_back(z[0]);
    forward.push_back(z[1]);
  }
  for (int b = 499; b >= 0; --b) {
    const auto z = normal_pair(5, b);
    reverse[2 * b] = z[0];
    reverse[2 * b + 1] = z[1];
  }
  std::thread t([&] {
    for (int b = 0; b < 500; ++b) {
      const auto z = normal_pair(5, b);
      threaded[2 * b] = z[0];
      threaded[2 * b + 1] = z[1];
    }
  });
  t.join();
  EXPECT_EQ(forward, reverse);
  EXPECT_EQ(forward, threaded);
}

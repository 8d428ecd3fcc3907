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

#include <random>

#include "test_support.hpp"

using namespace cocstress;

namespace
{

EvalRecord rec(const std::string & clip, const PerturbationSpec & cond, double l2, bool changed, double sim = 1.0)
{
  EvalRecord r;
  r.clip_id = clip;
  r.condition = cond;
  r.l2_deviation_m = l2;
  r.coc_clean = "keep lane";
  r.coc_perturbed = changed ? "stop now" : "keep lane";
  r.coc_changed = changed;
  r.word_similarity = changed ? sim : 1.0;
  return r;
}

double brute_auroc(const std::vector<double> & s, const std::vector<bool> & y)
{
  double num = 0, den = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] && !y[j]) {
        den += 1;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return num / den;
}

}  // namespace

TEST(Monitor, ConfusionWorkedExample)
{
  std::vector<MonitorOutcome> o;
  for (int i = 0; i < 3; ++i) o.push_back({true, true, 1.0});
  o.push_back({true, false, 1.0});
  for (int i = 0; i < 2; ++i) o.push_back({false, true, 0.0});
  for (int i = 0; i < 4; ++i) o.push_back({false, false, 0.0});
  const auto r = evaluate_monitor(o);
  EXPECT_EQ(r.tp, 3u);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_EQ(r.fn, 2u);
  EXPECT_EQ(r.tn, 4u);
  EXPECT_DOUBLE_EQ(*r.precision, 0.75);
  EXPECT_DOUBLE_EQ(*r.recall, 0.6);
  EXPECT_DOUBLE_EQ(*r.fpr, 0.2);
  EXPECT_EQ(r.n(), 10u);
}

TEST(Monitor, UndefinedRatiosAreAbsent)
{
  std::vector<MonitorOutcome> o = {{false, false, 0.0}, {false, false, 0.0}};
  const auto r = evaluate_monitor(o);
  EXPECT_FALSE(r.precision.has_value());
  EXPECT_FALSE(r.recall.has_value());
  EXPECT_DOUBLE_EQ(*r.fpr, 0.0);
  EXPECT_FALSE(r.auroc.has_value());
}

TEST(Monitor, UnsafeIsStrictlyAboveThreshold)
{
  EXPECT_FALSE(label_outcome(rec("a", PerturbationSpec::dark(), 5.0, false)).unsafe);
  EXPECT_TRUE(label_outcome(rec("a", PerturbationSpec::dark(), 5.0001, false)).unsafe);
  EXPECT_TRUE(label_outcome(rec("a", PerturbationSpec::dark(), 3.0, false), 2.0).unsafe);
  EXPECT_NEAR(label_outcome(rec("a", PerturbationSpec::dark(), 1.0, true, 0.25)).score, 0.75, 1e-15);
}

TEST(Auroc, WorkedExamples)
{
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{0.9, 0.3, 0.6, 0.2}, {true, false, false, true}), 0.5);
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{1, 1, 1, 1}, {true, false, true, false}), 0.5);
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{0.9, 0.8, 0.1}, {true, true, false}), 1.0);
  EXPECT_THROW(auroc(std::vector<double>{0.1, 0.2}, {true, true}), StatsError);
}

TEST(Auroc, MatchesPairwiseCountOnRandomInstances)
{
  std::mt19937 gen(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 5 + trial % 40;
    std::uniform_int_distribution<int> level(0, trial % 3 == 0 ? 3 : 1000);
    std::bernoulli_distribution pos(0.3);
    std::vector<double> s(n);
    std::vector<bool> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = level(gen) / 10.0;
      y[i] = pos(gen);
    }
    y[0] = true;
    y[1] = false;
    EXPECT_NEAR(auroc(s, y), brute_auroc(s, y), 1e-12) << trial;
  }
}

TEST(Auroc, InvariantUnderMonotoneTransform)
{
  std::mt19937 gen(2);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> s(50), t(50);
  std::vector<bool> y(50);
  for (int i = 0; i < 50; ++i) {
    s[i] = u(gen);
    t[i] = std::exp(3 * s[i]);
    y[i] = u(gen) < s[i];
  }
  EXPECT_DOUBLE_EQ(auroc(s, y), auroc(t, y));
}

TEST(MonitorReport, PerAttackAndAggregate)
{
  std::vector<EvalRecord> rs;
  const auto dark = PerturbationSpec::dark(), fog = PerturbationSpec::fog_heavy();
  rs.push_back(rec("c2", fog, 9.0, true, 0.1));
  rs.push_back(rec("c1", dark, 9.0, true, 0.2));
  rs.push_back(rec("c1", fog, 1.0, false));
  rs.push_back(rec("c2", dark, 1.0, true, 0.5));
  rs.push_back(rec("c3", dark, 6.0, false));
  const auto t = monitor_report(rs, kUnsafeThresholdM, {dark.label(), fog.label()});
  ASSERT_EQ(t.per_attack.size(), 2u);
  EXPECT_EQ(t.per_attack[0].first, dark.label());
  const auto & d = t.per_attack[0].second;
  EXPECT_EQ(d.tp, 1u);
  EXPECT_EQ(d.fp, 1u);
  EXPECT_EQ(d.fn, 1u);
  EXPECT_EQ(d.tn, 0u);
  EXPECT_EQ(t.aggregate.n(), 5u);
  EXPECT_EQ(t.aggregate.tp, 2u);

  std::reverse(rs.begin(), rs.end());
  const auto t2 = monitor_report(rs, kUnsafeThresholdM, {dark.label(), fog.label()});
  EXPECT_EQ(*t2.aggregate.auroc, *t.aggregate.auroc);
}

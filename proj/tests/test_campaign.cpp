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

#include <fstream>
#include <random>

#include "test_support.hpp"

using namespace cocstress;
using testing_support::slurp;
using testing_support::TempDir;

namespace
{

FixtureOptions small_frames()
{
  FixtureOptions o;
  o.width = 32;
  o.height = 24;
  return o;
}

struct Fixture
{
  TempDir dir;
  CampaignConfig cfg;

  explicit Fixture(std::size_t clips = 10)
  {
    generate_fixture_clips(clips, 1, dir / "data", small_frames());
    cfg.manifest = dir / "data" / "manifest.json";
    cfg.output_dir = dir / "out";
  }
};

std::vector<std::string> lines_of(const std::filesystem::path & p)
{
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Fails chosen trials, otherwise behaves like the mock.
class SelectiveFailBackend : public Backend
{
public:
  std::string fail_clip;
  bool fail_clean = false;

  InferenceResponse infer(const InferenceJob & job) override
  {
    const bool is_clean = job.frames.data() == job.clean_frames.data() ||
      std::equal(job.frames.begin(), job.frames.end(), job.clean_frames.begin());
    if (job.request.clip_id == fail_clip && (fail_clean || !is_clean)) {
      throw BackendError(BackendErrorCode::timeout, "injected");
    }
    return mock_.infer(job);
  }
  std::string name() const override { return "selective"; }

private:
  MockBackend mock_;
};

}  // namespace

TEST(CampaignConfigTest, ParsesAndResolvesPaths)
{
  nlohmann::json j = {
    {"manifest", "data/manifest.json"},
    {"output_dir", "out"},
    {"seed", 7},
    {"parallelism", 3},
    {"perturbations", {"noise_30", {{"kind", "dark"}, {"brightness_factor", 0.5}}}},
    {"defenses", {"median3", "jpeg75"}},
    {"arms", {"with_coc", "without_coc"}},
    {"severity", {{"mild_below_m", 5}, {"severe_above_m", 20}}},
    {"backend", {{"kind", "mock"}, {"mock", {{"deviation_gain", 0.01}}}}}};
  const auto c = campaign_config_from_json(j, "/base");
  EXPECT_EQ(c.manifest, std::filesystem::path("/base/data/manifest.json"));
  EXPECT_EQ(c.output_dir, std::filesystem::path("/base/out"));
  EXPECT_EQ(c.perturbations.size(), 2u);
  EXPECT_EQ(c.perturbations[1].label(), PerturbationSpec::dark(0.5).label());
  EXPECT_EQ(c.defenses.size(), 2u);
  EXPECT_EQ(c.arms, (std::vector<bool>{true, false}));
  EXPECT_DOUBLE_EQ(c.mild_below_m, 5);
  EXPECT_DOUBLE_EQ(c.backend.mock.deviation_gain, 0.01);

  const auto back = campaign_config_from_json(to_json(c), "/elsewhere");
  EXPECT_EQ(back.manifest, c.manifest);
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(CampaignConfigTest, RejectsInvalidConfigs)
{
  const nlohmann::json base = {{"manifest", "m.json"}};
  EXPECT_NO_THROW(campaign_config_from_json(base));
  auto bad = [&](auto mutate) {
    nlohmann::json j = base;
    mutate(j);
    EXPECT_THROW(campaign_config_from_json(j), ConfigError) << j.dump();
  };
  bad([](auto & j) { j["perturbations"] = nlohmann::json::array(); });
  bad([](auto & j) { j["perturbations"] = {"noise_30", "noise_30"}; });
  bad([](auto & j) { j["perturbations"] = {"clean"}; });
  bad([](auto & j) { j["perturbations"] = {"haze"}; });
  bad([](auto & j) { j["defenses"] = {"none"}; });
  bad([](auto & j) { j["arms"] = {"sometimes"}; });
  bad([](auto & j) { j["arms"] = {"with_coc", "with_coc"}; });
  bad([](auto & j) { j["parallelism"] = 0; });
  bad([](auto & j) { j["bootstrap_resamples"] = 100; });
  bad([](auto & j) { j["typo_key"] = 1; });
  bad([](auto & j) { j["backend"] = {{"kind", "stdio"}}; });
  bad([](auto & j) { j["backend"] = {{"kind", "grpc"}}; });
  bad([](auto & j) { j["backend"] = {{"mock", {{"gain", 1}}}}; });
  bad([](auto & j) { j["severity"] = {{"mild_below_m", 40}, {"severe_above_m", 30}}; });
  bad([](auto & j) { j.erase("manifest"); });
  EXPECT_THROW(load_campaign_config("/nonexistent/config.json"), ConfigError);
}

TEST(Campaign, RecordCountIncludesCleanReference)
{
  Fixture s;
  const auto res = run_campaign(s.cfg, *make_backend(s.cfg.backend));
  EXPECT_EQ(res.stats.records, 90u);
  EXPECT_EQ(res.stats.inferences, 90u);
  EXPECT_EQ(res.stats.failures, 0u);
  EXPECT_EQ(read_records(s.cfg.records_path()), res.records);
  std::size_t clean = 0;
  for (const auto & r : res.records) {
    if (!r.condition.is_clean()) continue;
    ++clean;
    EXPECT_EQ(r.l2_deviation_m, 0.0);
    EXPECT_EQ(r.delta_ade_m, 0.0);
    EXPECT_EQ(r.energy, 0.0);
    EXPECT_FALSE(r.coc_changed);
  }
  EXPECT_EQ(clean, 10u);
  EXPECT_TRUE(std::filesystem::exists(s.cfg.failures_path()));
  EXPECT_TRUE(slurp(s.cfg.failures_path()).empty());
}

TEST(Campaign, RecordsAreInCanonicalOrder)
{
  Fixture s(3);
  s.cfg.arms = {false, true};
  s.cfg.defenses = {DefenseSpec::of(DefenseKind::median3)};
  const auto res = run_campaign(s.cfg, *make_backend(s.cfg.backend));
  ASSERT_EQ(res.records.size(), 3u * 2u * (1 + 8 * 2));
  const auto & first = res.records.front();
  EXPECT_EQ(first.clip_id, "clip_0000");
  EXPECT_FALSE(first.with_coc);
  EXPECT_TRUE(first.condition.is_clean());
  EXPECT_EQ(res.records[1].condition.label(), "noise_10");
  EXPECT_TRUE(res.records[1].defense.is_none());
  EXPECT_EQ(res.records[2].defense.label(), "median3");
  for (const auto & r : res.records) {
    if (r.condition.is_clean()) EXPECT_TRUE(r.defense.is_none());
  }
}

TEST(Campaign, ResumeRunsOnlyMissingTrials)
{
  Fixture s;
  run_campaign(s.cfg, *make_backend(s.cfg.backend));
  const auto full = slurp(s.cfg.records_path());
  auto lines = lines_of(s.cfg.records_path());
  std::mt19937 gen(3);
  std::shuffle(lines.begin(), lines.end(), gen);
  lines.resize(lines.size() - 3);
  {
    std::ofstream out(s.cfg.records_path(), std::ios::trunc);
    for (const auto & l : lines) out << l << '\n';
  }
  const auto res = run_campaign(s.cfg, *make_backend(s.cfg.backend));
  EXPECT_EQ(res.stats.inferences, 3u);
  EXPECT_EQ(res.stats.resumed, 87u);
  EXPECT_EQ(slurp(s.cfg.records_path()), full);
}

TEST(Campaign, ResumeToleratesTruncatedTail)
{
  Fixture s(2);
  run_campaign(s.cfg, *make_backend(s.cfg.backend));
  const auto full = slurp(s.cfg.records_path());
  auto text = full.substr(0, full.size() - 40);
  std::ofstream(s.cfg.records_path(), std::ios::trunc) << text;
  const auto res = run_campaign(s.cfg, *make_backend(s.cfg.backend));
  EXPECT_EQ(res.stats.inferences, 1u);
  EXPECT_EQ(slurp(s.cfg.records_path()), full);
}

TEST(Campaign, NoResumeStartsOver)
{
  Fixture s(2);
  run_campaign(s.cfg, *make_backend(s.cfg.backend));
  RunOptions o;
  o.resume = false;
  EXPECT_EQ(run_campaign(s.cfg, *make_backend(s.cfg.backend), o).stats.inferences, 18u);
}

TEST(Campaign, ParallelismDoesNotChangeOutput)
{
  Fixture a(6), b(6);
  a.cfg.arms = b.cfg.arms = {true, false};
  a.cfg.defenses = b.cfg.defenses = {DefenseSpec::of(DefenseKind::gaussian3)};
  b.cfg.parallelism = 5;
  run_campaign(a.cfg, *make_backend(a.cfg.backend));
  run_campaign(b.cfg, *make_backend(b.cfg.backend));
  EXPECT_EQ(slurp(a.cfg.records_path()), slurp(b.cfg.records_path()));
}

TEST(Campaign, SeedChangesNoiseButNotPhotometric)
{
  Fixture a(2), b(2);
  b.cfg.seed = 43;
  const auto ra = run_campaign(a.cfg, *make_backend(a.cfg.backend)).records;
  const auto rb = run_campaign(b.cfg, *make_backend(b.cfg.backend)).records;
  ASSERT_EQ(ra.size(), rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(rb[i].seed, 43u);
    if (ra[i].condition.kind == PerturbationKind::noise) {
      EXPECT_NE(ra[i].energy, rb[i].energy);
    } else {
      EXPECT_EQ(ra[i].energy, rb[i].energy);
    }
  }
}

TEST(Campaign, FailuresAreIsolatedAndLogged)
{
  Fixture s(3);
  SelectiveFailBackend be;
  be.fail_clip = "clip_0001";
  const auto res = run_campaign(s.cfg, be);
  EXPECT_EQ(res.stats.records, 2u * 9u + 1u);
  EXPECT_EQ(res.stats.failures, 8u);
  for (std::size_t i = 1; i < res.failures.size(); ++i) EXPECT_TRUE(res.failures[i - 1].key < res.failures[i].key);
  const auto lines = lines_of(s.cfg.failures_path());
  ASSERT_EQ(lines.size(), 8u);
  const auto j = nlohmann::json::parse(lines[0]);
  EXPECT_EQ(j["clip_id"], "clip_0001");
  EXPECT_EQ(j["error"], "timeout");

  // A later run against a healthy backend fills the gaps.
  const auto again = run_campaign(s.cfg, *make_backend(s.cfg.backend));
  EXPECT_EQ(again.stats.inferences, 8u);
  EXPECT_EQ(again.stats.records, 27u);
  EXPECT_TRUE(slurp(s.cfg.failures_path()).empty());
}

TEST(Campaign, CleanFailureFailsWholeUnit)
{
  Fixture s(2);
  SelectiveFailBackend be;
  be.fail_clip = "clip_0000";
  be.fail_clean = true;
  const auto res = run_campaign(s.cfg, be);
  EXPECT_EQ(res.stats.records, 9u);
  EXPECT_EQ(res.stats.failures, 9u);
  EXPECT_TRUE(std::any_of(res.failures.begin(), res.failures.end(), [](const auto & f) {
    return f.key.condition == "clean";
  }));
}

TEST(Campaign, MissingFrameIsConfigurationError)
{
  Fixture s(2);
  std::filesystem::remove(s.dir / "data" / "frames" / "clip_0001_t0_front.ppm");
  EXPECT_THROW(run_campaign(s.cfg, *make_backend(s.cfg.backend)), ValidationError);
}

TEST(Campaign, StdioBackendReceivesWrittenFrames)
{
  Fixture s(2);
  s.cfg.backend.kind = "stdio";
  s.cfg.backend.command = {FAKE_ADAPTER};
  s.cfg.perturbations = {PerturbationSpec::noise(30), PerturbationSpec::dark()};
  s.cfg.defenses = {DefenseSpec::of(DefenseKind::median3)};
  auto be = make_backend(s.cfg.backend);
  const auto res = run_campaign(s.cfg, *be);
  EXPECT_EQ(res.stats.records, 2u * 5u);
  EXPECT_EQ(res.stats.failures, 0u);
  for (const auto & r : res.records) {
    EXPECT_EQ(r.coc_clean, "Keep lane since the road ahead is clear");
    EXPECT_FALSE(r.coc_changed);
    EXPECT_EQ(r.l2_deviation_m, 0.0);
  }
  EXPECT_TRUE(std::filesystem::exists(s.cfg.output_dir / "frames" / "clip_0000" / "noise_30__median3__coc_t1_left.ppm"));
}

TEST(Campaign, StdioShapeViolationsBecomeFailures)
{
  Fixture s(1);
  s.cfg.backend.kind = "stdio";
  s.cfg.backend.command = {FAKE_ADAPTER, "--mode", "short"};
  s.cfg.backend.inline_frames = true;
  auto be = make_backend(s.cfg.backend);
  const auto res = run_campaign(s.cfg, *be);
  EXPECT_EQ(res.stats.records, 0u);
  EXPECT_EQ(res.stats.failures, 9u);
  EXPECT_EQ(res.failures[0].error, "shape_violation");
  EXPECT_FALSE(std::filesystem::exists(s.cfg.output_dir / "frames"));
}

TEST(MakeRecord, DerivedFieldsMatchMetrics)
{
  Clip c;
  c.id = "c";
  c.gt_trajectory = testing_support::line_trajectory(5, 0);
  InferenceResponse clean{c.gt_trajectory.shifted({0, 1}), std::string("Keep lane"), 9.0};
  InferenceResponse pert{c.gt_trajectory.shifted({3, 5}), std::string("Stop at the light"), 11.0};
  const auto r = make_record(c, PerturbationSpec::dark(), DefenseSpec{}, true, clean, pert, 12.0, 42, false);
  EXPECT_NEAR(r.ade_m, std::hypot(3, 5), 1e-12);
  EXPECT_NEAR(r.delta_ade_m, std::hypot(3, 5) - 1.0, 1e-12);
  EXPECT_NEAR(r.l2_deviation_m, 8.0 * 5.0, 1e-9);
  EXPECT_TRUE(r.coc_changed);
  EXPECT_EQ(r.word_similarity, 0.0);
  EXPECT_EQ(r.latency_ms, 11.0);
  EXPECT_FALSE(r.trajectory.has_value());
}

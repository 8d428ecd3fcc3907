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

#include "test_support.hpp"

using namespace cocstress;
using testing_support::TempDir;

namespace
{

EvalRecord sample_record()
{
  EvalRecord r;
  r.clip_id = "clip_0001";
  r.condition = PerturbationSpec::noise(30);
  r.defense = DefenseSpec::of(DefenseKind::median3);
  r.with_coc = false;
  r.ade_m = 1.25;
  r.fde_m = 2.5;
  r.delta_ade_m = -0.125;
  r.l2_deviation_m = 7.75;
  r.coc_clean = "Keep lane";
  r.coc_perturbed = "Stop now";
  r.coc_changed = true;
  r.word_similarity = 0.0;
  r.energy = 23.5;
  r.latency_ms = 3000;
  r.seed = 99;
  r.trajectory = testing_support::line_trajectory(3, 0.5);
  return r;
}

Json minimal_clip(const std::string & id)
{
  Json traj = Json::array();
  for (int i = 1; i <= 64; ++i) traj.push_back(Json::array({0.1 * i, 0.0}));
  return Json{{"id", id},
              {"frames", Json::array({"a.ppm"})},
              {"ego_history", Json::array({Json{{"t", -0.1}, {"x", 0}, {"y", 0}, {"vx", 1}, {"vy", 0}}})},
              {"gt_trajectory", traj},
              {"clean_coc", "Keep lane"}};
}

}  // namespace

TEST(Labels, PerturbationLabelsRoundTrip)
{
  for (const auto & p : standard_perturbations()) {
    EXPECT_EQ(PerturbationSpec::from_label(p.label()), p) << p.label();
    EXPECT_EQ(perturbation_from_json(to_json(p)), p) << p.label();
  }
  EXPECT_EQ(PerturbationSpec::noise(30).label(), "noise_30");
  EXPECT_EQ(PerturbationSpec::clean().label(), "clean");
  EXPECT_THROW(PerturbationSpec::from_label("smoke"), ValidationError);
  EXPECT_THROW(perturbation_from_json(Json{{"kind", "noise"}}), ValidationError);
  EXPECT_THROW(perturbation_from_json(Json{{"kind", "noise"}, {"sigma", -1}}), ValidationError);
}

TEST(Labels, DefenseJsonRoundTrip)
{
  for (const auto & d : standard_defenses()) EXPECT_EQ(defense_from_json(to_json(d)), d);
  EXPECT_EQ(defense_from_json(Json("gaussian3")), DefenseSpec::of(DefenseKind::gaussian3));
  EXPECT_THROW(defense_from_json(Json{{"kind", "median3"}, {"kernel", 4}}), ValidationError);
  EXPECT_THROW(defense_from_json(Json("sharpen")), ValidationError);
}

TEST(Records, JsonRoundTripIsExact)
{
  const auto r = sample_record();
  EXPECT_EQ(record_from_json(Json::parse(record_line(r))), r);
  auto no_traj = r;
  no_traj.trajectory.reset();
  EXPECT_EQ(record_from_json(to_json(no_traj)), no_traj);
}

TEST(Records, InconsistentOrInvalidRecordsRejected)
{
  auto j = to_json(sample_record());
  j["coc_changed"] = false;
  EXPECT_THROW(record_from_json(j), ValidationError);
  j = to_json(sample_record());
  j["ade_m"] = -1.0;
  EXPECT_THROW(record_from_json(j), ValidationError);
  j = to_json(sample_record());
  j.erase("clip_id");
  EXPECT_THROW(record_from_json(j), ValidationError);
  EXPECT_THROW(record_from_json(Json::array()), ValidationError);
}

TEST(Records, FileStrictAndLenientReading)
{
  TempDir dir;
  const auto path = dir / "records.jsonl";
  std::vector<EvalRecord> rs(3, sample_record());
  rs[1].clip_id = "clip_0002";
  rs[2].clip_id = "clip_0003";
  EXPECT_EQ(write_records(rs, path), 3u);
  EXPECT_EQ(read_records(path), rs);

  {
    std::ofstream out(path, std::ios::app);
    out << "\n{\"clip_id\": truncated\n" << record_line(rs[0]) << "\n";
  }
  try {
    read_records(path);
    FAIL() << "expected RecordError";
  } catch (const RecordError & e) {
    EXPECT_EQ(e.line(), 5u);
  }
  const auto lenient = read_records_detailed(path, false);
  EXPECT_EQ(lenient.records.size(), 4u);
  EXPECT_EQ(lenient.skipped_lines, std::vector<std::size_t>{5});
  EXPECT_THROW(read_records(dir / "absent.jsonl"), IoError);
}

TEST(Records, WriterAppendsAndCounts)
{
  TempDir dir;
  const auto path = dir / "r.jsonl";
  {
    RecordWriter w(path);
    w.write(sample_record());
  }
  {
    RecordWriter w(path);
    w.write(sample_record());
    EXPECT_EQ(w.count(), 1u);
  }
  EXPECT_EQ(read_records(path).size(), 2u);
}

TEST(Manifest, FixtureManifestRoundTrip)
{
  TempDir dir;
  const auto m = generate_fixture_clips(6, 3, dir.path());
  const auto loaded = load_manifest(dir / "manifest.json");
  ASSERT_EQ(loaded.clips.size(), 6u);
  EXPECT_EQ(loaded.clips, m.clips);
  for (const auto & c : loaded.clips) {
    for (const auto & f : c.frames) EXPECT_TRUE(std::filesystem::exists(loaded.frame_path(f)));
  }
  write_manifest(loaded.clips, dir / "copy.json");
  EXPECT_EQ(load_manifest(dir / "copy.json").clips, m.clips);
}

TEST(Manifest, PlainStringFramesGetSequentialTimesteps)
{
  Json doc{{"clips", Json::array({minimal_clip("x")})}};
  doc["clips"][0]["frames"] = Json::array({"a.ppm", "b.ppm"});
  const auto m = parse_manifest(doc, "/nowhere", false);
  EXPECT_EQ(m.clips[0].frames[1].timestep, 1);
  EXPECT_EQ(m.clips[0].frames[1].view, "");
  EXPECT_FALSE(m.clips[0].category.has_value());
}

TEST(Manifest, ErrorsNameClipAndField)
{
  auto expect_error = [](Json clip, const std::string & needle) {
    Json doc{{"clips", Json::array({minimal_clip("ok"), clip})}};
    try {
      parse_manifest(doc, "/nowhere", false);
      ADD_FAILURE() << "no error for " << needle;
    } catch (const ValidationError & e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  auto c = minimal_clip("bad");
  c["gt_trajectory"].erase(c["gt_trajectory"].size() - 1);
  expect_error(c, "clip 'bad': field 'gt_trajectory'");
  c = minimal_clip("bad");
  c.erase("clean_coc");
  expect_error(c, "field 'clean_coc'");
  c = minimal_clip("bad");
  c["frames"] = Json::array();
  expect_error(c, "field 'frames'");
  c = minimal_clip("bad");
  c["ego_history"].push_back(Json{{"t", -0.5}, {"x", 0}, {"y", 0}, {"vx", 1}, {"vy", 0}});
  expect_error(c, "field 'ego_history'");
  expect_error(minimal_clip("ok"), "duplicate id");
  c = minimal_clip("bad");
  c.erase("id");
  expect_error(c, "field 'id'");
}

TEST(Manifest, MissingFramesAndFiles)
{
  TempDir dir;
  Json doc{{"clips", Json::array({minimal_clip("x")})}};
  EXPECT_THROW(parse_manifest(doc, dir.path(), true), ValidationError);
  EXPECT_THROW(load_manifest(dir / "nope.json"), IoError);
  std::ofstream(dir / "broken.json") << "{\"clips\": [";
  EXPECT_THROW(load_manifest(dir / "broken.json"), ValidationError);
}

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

// Clip-manifest ingestion and the append-only evaluation record store.
//
// Manifest (JSON):
//   {"clips": [{"id", "frames": [path | {"path","timestep","view"}],
//               "ego_history": [{"t","x","y","vx","vy"}],
//               "gt_trajectory": [[x,y] x 64], "clean_coc", "category"?}]}
//
// Record file: one JSON object per line, fields in EvalRecord order
// (see docs/record_format.md).

#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cocstress/errors.hpp"
#include "cocstress/metrics.hpp"
#include "cocstress/types.hpp"

namespace cocstress
{

using Json = nlohmann::ordered_json;

// ------------------------------------------------------------ JSON codecs

inline Json to_json(const Trajectory & t)
{
  Json arr = Json::array();
  for (const auto & p : t.points()) {
    arr.push_back(Json::array({p.x, p.y}));
  }
  return arr;
}

inline Trajectory trajectory_from_json(const Json & j)
{
  if (!j.is_array()) {
    throw ValidationError("trajectory must be an array of [x, y] pairs");
  }
  std::vector<Vec2> pts;
  pts.reserve(j.size());
  for (const auto & p : j) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      throw ValidationError("trajectory waypoint must be [x, y]");
    }
    pts.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return Trajectory::from_points(pts);
}

inline Json to_json(const PerturbationSpec & s)
{
  Json j;
  j["kind"] = to_string(s.kind);
  switch (s.kind) {
    case PerturbationKind::noise: j["sigma"] = s.sigma; break;
    case PerturbationKind::dark:
    case PerturbationKind::bright: j["brightness_factor"] = s.brightness_factor; break;
    case PerturbationKind::fog_light:
    case PerturbationKind::fog_heavy: j["alpha"] = s.alpha; break;
    case PerturbationKind::clean: break;
  }
  return j;
}

/// Accepts either a label string ("noise_30") or an object with "kind".
inline PerturbationSpec perturbation_from_json(const Json & j)
{
  if (j.is_string()) {
    return PerturbationSpec::from_label(j.get<std::string>());
  }
  if (!j.is_object() || !j.contains("kind")) {
    throw ValidationError("perturbation must be a label or an object with 'kind'");
  }
  const auto kind = perturbation_kind_from_string(j.at("kind").get<std::string>());
  PerturbationSpec s;
  switch (kind) {
    case PerturbationKind::clean: s = PerturbationSpec::clean(); break;
    case PerturbationKind::noise:
      if (!j.contains("sigma")) {
        throw ValidationError("noise perturbation requires 'sigma'");
      }
      s = PerturbationSpec::noise(j.at("sigma").get<double>());
      break;
    case PerturbationKind::dark: s = PerturbationSpec::dark(j.value("brightness_factor", 0.4)); break;
    case PerturbationKind::bright: s = PerturbationSpec::bright(j.value("brightness_factor", 1.6)); break;
    case PerturbationKind::fog_light: s = PerturbationSpec::fog_light(j.value("alpha", 0.3)); break;
    case PerturbationKind::fog_heavy: s = PerturbationSpec::fog_heavy(j.value("alpha", 0.7)); break;
  }
  s.validate();
  return s;
}

inline Json to_json(const DefenseSpec & s)
{
  Json j;
  j["kind"] = to_string(s.kind);
  switch (s.kind) {
    case DefenseKind::gaussian3:
    case DefenseKind::gaussian5:
    case DefenseKind::median3:
    case DefenseKind::median5: j["kernel"] = s.kernel; break;
    case DefenseKind::bilateral:
      j["diameter"] = s.diameter;
      j["sigma_color"] = s.sigma_color;
      j["sigma_space"] = s.sigma_space;
      break;
    case DefenseKind::jpeg75: j["quality"] = s.quality; break;
    case DefenseKind::none: break;
  }
  return j;
}

inline DefenseSpec defense_from_json(const Json & j)
{
  if (j.is_string()) {
    return DefenseSpec::from_label(j.get<std::string>());
  }
  if (!j.is_object() || !j.contains("kind")) {
    throw ValidationError("defense must be a label or an object with 'kind'");
  }
  DefenseSpec s = DefenseSpec::from_label(j.at("kind").get<std::string>());
  s.kernel = j.value("kernel", s.kernel);
  s.diameter = j.value("diameter", s.diameter);
  s.sigma_color = j.value("sigma_color", s.sigma_color);
  s.sigma_space = j.value("sigma_space", s.sigma_space);
  s.quality = j.value("quality", s.quality);
  s.validate();
  return s;
}

inline Json to_json(const EvalRecord & r)
{
  Json j;
  j["clip_id"] = r.clip_id;
  j["condition"] = to_json(r.condition);
  j["defense"] = to_json(r.defense);
  j["with_coc"] = r.with_coc;
  j["ade_m"] = r.ade_m;
  j["fde_m"] = r.fde_m;
  j["delta_ade_m"] = r.delta_ade_m;
  j["l2_deviation_m"] = r.l2_deviation_m;
  j["coc_clean"] = r.coc_clean;
  j["coc_perturbed"] = r.coc_perturbed;
  j["coc_changed"] = r.coc_changed;
  j["word_similarity"] = r.word_similarity;
  j["energy"] = r.energy;
  j["latency_ms"] = r.latency_ms;
  j["seed"] = r.seed;
  if (r.trajectory) {
    j["trajectory"] = to_json(*r.trajectory);
  }
  return j;
}

inline EvalRecord record_from_json(const Json & j)
{
  if (!j.is_object()) {
    throw ValidationError("record must be a JSON object");
  }
  EvalRecord r;
  try {
    r.clip_id = j.at("clip_id").get<std::string>();
    r.condition = perturbation_from_json(j.at("condition"));
    r.defense = j.contains("defense") ? defense_from_json(j.at("defense")) : DefenseSpec{};
    r.with_coc = j.at("with_coc").get<bool>();
    r.ade_m = j.at("ade_m").get<double>();
    r.fde_m = j.at("fde_m").get<double>();
    r.delta_ade_m = j.at("delta_ade_m").get<double>();
    r.l2_deviation_m = j.at("l2_deviation_m").get<double>();
    r.coc_clean = j.at("coc_clean").get<std::string>();
    r.coc_perturbed = j.at("coc_perturbed").get<std::string>();
    r.coc_changed = j.at("coc_changed").get<bool>();
    r.word_similarity = j.at("word_similarity").get<double>();
    r.energy = j.value("energy", 0.0);
    r.latency_ms = j.value("latency_ms", 0.0);
    r.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("trajectory")) {
      r.trajectory = trajectory_from_json(j.at("trajectory"));
    }
  } catch (const nlohmann::json::exception & e) {
    throw ValidationError(std::string("record field error: ") + e.what());
  }
  if (!(r.ade_m >= 0.0) || !(r.l2_deviation_m >= 0.0) || !(r.fde_m >= 0.0)) {
    throw ValidationError("record distances must be non-negative");
  }
  if (r.coc_changed != coc_changed(CoCText(r.coc_clean), CoCText(r.coc_perturbed))) {
    throw ValidationError("coc_changed inconsistent with the CoC texts");
  }
  return r;
}

// ------------------------------------------------------------ manifest

struct Manifest
{
  std::filesystem::path directory;  // frame paths resolve against this
  std::vector<Clip> clips;

  std::filesystem::path frame_path(const FrameRef & f) const { return directory / f.path; }
};

namespace detail
{

inline Json clip_to_json(const Clip & c)
{
  Json j;
  j["id"] = c.id;
  Json frames = Json::array();
  for (std::size_t i = 0; i < c.frames.size(); ++i) {
    const auto & f = c.frames[i];
    if (f.view.empty() && f.timestep == static_cast<std::int64_t>(i)) {
      frames.push_back(f.path);
    } else {
      Json fj;
      fj["path"] = f.path;
      fj["timestep"] = f.timestep;
      fj["view"] = f.view;
      frames.push_back(fj);
    }
  }
  j["frames"] = frames;
  Json ego = Json::array();
  for (const auto & e : c.ego_history) {
    Json ej;
    ej["t"] = e.t;
    ej["x"] = e.position.x;
    ej["y"] = e.position.y;
    ej["vx"] = e.velocity.x;
    ej["vy"] = e.velocity.y;
    ego.push_back(ej);
  }
  j["ego_history"] = ego;
  j["gt_trajectory"] = to_json(c.gt_trajectory);
  j["clean_coc"] = c.clean_coc;
  if (c.category) {
    j["category"] = *c.category;
  }
  return j;
}

inline Clip clip_from_json(const Json & j, std::size_t index)
{
  std::string id = "#" + std::to_string(index);
  auto fail = [&](const std::string & field, const std::string & why) -> ValidationError {
    return ValidationError("clip '" + id + "': field '" + field + "': " + why);
  };
  if (!j.is_object()) {
    throw fail("<record>", "not an object");
  }
  if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty()) {
    throw fail("id", "missing or not a non-empty string");
  }
  Clip c;
  c.id = id = j["id"].get<std::string>();

  if (!j.contains("frames") || !j["frames"].is_array() || j["frames"].empty()) {
    throw fail("frames", "at least one frame is required");
  }
  std::int64_t idx = 0;
  for (const auto & f : j["frames"]) {
    FrameRef ref;
    if (f.is_string()) {
      ref.path = f.get<std::string>();
      ref.timestep = idx;
    } else if (f.is_object() && f.contains("path") && f["path"].is_string()) {
      ref.path = f["path"].get<std::string>();
      ref.timestep = f.value("timestep", idx);
      ref.view = f.value("view", std::string{});
    } else {
      throw fail("frames", "entry " + std::to_string(idx) + " must be a path or {path,...}");
    }
    c.frames.push_back(std::move(ref));
    ++idx;
  }

  if (!j.contains("ego_history") || !j["ego_history"].is_array()) {
    throw fail("ego_history", "missing or not an array");
  }
  for (const auto & e : j["ego_history"]) {
    try {
      EgoState s;
      s.t = e.at("t").get<double>();
      s.position = {e.at("x").get<double>(), e.at("y").get<double>()};
      s.velocity = {e.at("vx").get<double>(), e.at("vy").get<double>()};
      if (!std::isfinite(s.t) || !s.position.finite() || !s.velocity.finite()) {
        throw fail("ego_history", "non-finite value");
      }
      if (!c.ego_history.empty() && s.t < c.ego_history.back().t) {
        throw fail("ego_history", "timestamps must be non-decreasing");
      }
      c.ego_history.push_back(s);
    } catch (const nlohmann::json::exception & ex) {
      throw fail("ego_history", ex.what());
    }
  }

  if (!j.contains("gt_trajectory")) {
    throw fail("gt_trajectory", "missing");
  }
  try {
    c.gt_trajectory = trajectory_from_json(j["gt_trajectory"]);
  } catch (const ValidationError & e) {
    throw fail("gt_trajectory", e.what());
  }

  if (!j.contains("clean_coc") || !j["clean_coc"].is_string()) {
    throw fail("clean_coc", "missing or not a string");
  }
  c.clean_coc = j["clean_coc"].get<std::string>();
  if (j.contains("category") && j["category"].is_string()) {
    c.category = j["category"].get<std::string>();
  }
  return c;
}

}  // namespace detail

inline Json manifest_to_json(const std::vector<Clip> & clips)
{
  Json arr = Json::array();
  for (const auto & c : clips) {
    arr.push_back(detail::clip_to_json(c));
  }
  Json j;
  j["clips"] = arr;
  return j;
}

/// Parses a manifest document; `directory` is where frame paths resolve.
/// With `check_frames`, every frame file must exist.
inline Manifest parse_manifest(
  const Json & doc, const std::filesystem::path & directory, bool check_frames = true)
{
  if (!doc.is_object() || !doc.contains("clips") || !doc["clips"].is_array()) {
    throw ValidationError("manifest must be an object with a 'clips' array");
  }
  Manifest m;
  m.directory = directory;
  std::set<std::string> seen;
  std::size_t i = 0;
  for (const auto & cj : doc["clips"]) {
    Clip c = detail::clip_from_json(cj, i++);
    if (!seen.insert(c.id).second) {
      throw ValidationError("clip '" + c.id + "': duplicate id");
    }
    if (check_frames) {
      for (const auto & f : c.frames) {
        if (!std::filesystem::exists(m.frame_path(f))) {
          throw ValidationError(
            "clip '" + c.id + "': field 'frames': file not found: " + m.frame_path(f).string());
        }
      }
    }
    m.clips.push_back(std::move(c));
  }
  return m;
}

inline Manifest load_manifest(const std::filesystem::path & path, bool check_frames = true)
{
  if (!std::filesystem::exists(path)) {
    throw IoError("manifest not found: " + path.string());
  }
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read manifest: " + path.string());
  }
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::parse_error & e) {
    throw ValidationError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_manifest(doc, path.parent_path(), check_frames);
}

inline void write_manifest(const std::vector<Clip> & clips, const std::filesystem::path & path)
{
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write manifest: " + path.string());
  }
  out << manifest_to_json(clips).dump(2) << '\n';
}

// ------------------------------------------------------------ records

inline std::string record_line(const EvalRecord & r) { return to_json(r).dump(); }

/// Appends records, one JSON object per line. Thread-safe; every line is
/// flushed so a crash loses at most the record being written.
class RecordWriter
{
public:
  explicit RecordWriter(const std::filesystem::path & path, bool truncate = false)
  : out_(path, truncate ? std::ios::trunc : std::ios::app)
  {
    if (!out_) {
      throw IoError("cannot open record file: " + path.string());
    }
  }

  void write(const EvalRecord & r)
  {
    const std::string line = record_line(r);
    std::lock_guard<std::mutex> lock(mu_);
    out_ << line << '\n';
    out_.flush();
    if (!out_) {
      throw IoError("record write failed");
    }
    ++count_;
  }

  std::size_t count() const { return count_; }

private:
  std::mutex mu_;
  std::ofstream out_;
  std::size_t count_ = 0;
};

inline std::size_t write_records(
  const std::vector<EvalRecord> & records, const std::filesystem::path & path)
{
  RecordWriter w(path, /*truncate=*/true);
  for (const auto & r : records) {
    w.write(r);
  }
  return w.count();
}

struct RecordReadResult
{
  std::vector<EvalRecord> records;
  std::vector<std::size_t> skipped_lines;  // 1-based, lenient mode only
};

/// Reads a record file. Strict mode throws RecordError naming the first
/// corrupt line; lenient mode skips and reports such lines.
inline RecordReadResult read_records_detailed(const std::filesystem::path & path, bool strict = true)
{
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open record file: " + path.string());
  }
  RecordReadResult res;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      res.records.push_back(record_from_json(Json::parse(line)));
    } catch (const std::exception & e) {
      if (strict) {
        throw RecordError(lineno, e.what());
      }
      res.skipped_lines.push_back(lineno);
    }
  }
  return res;
}

inline std::vector<EvalRecord> read_records(const std::filesystem::path & path, bool strict = true)
{
  return read_records_detailed(path, strict).records;
}

}  // namespace cocstress

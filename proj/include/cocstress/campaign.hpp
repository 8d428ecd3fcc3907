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

// Campaign configuration and the evaluation runner. A campaign is the
// cartesian product clips x conditions x (none + defenses) x ablation arms.
// Records stream to records.jsonl as they finish and the file is rewritten
// in canonical order at the end, so its bytes do not depend on scheduling.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "cocstress/data_model.hpp"
#include "cocstress/defend.hpp"
#include "cocstress/errors.hpp"
#include "cocstress/metrics.hpp"
#include "cocstress/modelio.hpp"
#include "cocstress/monitor.hpp"
#include "cocstress/perturb.hpp"
#include "cocstress/remote.hpp"
#include "cocstress/stats.hpp"
#include "cocstress/types.hpp"

namespace cocstress
{

struct BackendConfig
{
  std::string kind = "mock";  // mock | stdio | http
  std::vector<std::string> command;
  std::string endpoint;
  int timeout_ms = 120000;
  int retries = 2;
  bool inline_frames = false;
  MockModelConfig mock;
};

struct CampaignConfig
{
  std::filesystem::path manifest;
  std::filesystem::path output_dir = "cocstress_out";
  std::uint64_t seed = 42;
  int parallelism = 1;
  std::vector<PerturbationSpec> perturbations = standard_perturbations();
  std::vector<DefenseSpec> defenses;
  std::vector<bool> arms{true};  // with_coc per arm, in report order
  double unsafe_threshold_m = kUnsafeThresholdM;
  double mild_below_m = 10.0;
  double severe_above_m = 30.0;
  FogOptions fog;
  BackendConfig backend;
  std::size_t bootstrap_resamples = 10000;
  std::optional<std::filesystem::path> taxonomy;
  bool store_trajectories = true;

  std::filesystem::path records_path() const { return output_dir / "records.jsonl"; }
  std::filesystem::path failures_path() const { return output_dir / "failures.jsonl"; }

  void validate() const
  {
    if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
    if (perturbations.empty()) throw ConfigError("no perturbations configured");
    if (arms.empty()) throw ConfigError("no ablation arms configured");
    if (!(unsafe_threshold_m > 0.0)) throw ConfigError("unsafe_threshold_m must be > 0");
    if (!(mild_below_m <= severe_above_m)) throw ConfigError("severity: mild_below_m must be <= severe_above_m");
    if (bootstrap_resamples < 1000) throw ConfigError("bootstrap_resamples must be >= 1000");
    std::set<std::string> seen;
    for (const auto & p : perturbations) {
      p.validate();
      if (p.is_clean()) throw ConfigError("'clean' is implicit and cannot be listed as a perturbation");
      if (!seen.insert(p.label()).second) throw ConfigError("duplicate perturbation '" + p.label() + "'");
    }
    seen.clear();
    for (const auto & d : defenses) {
      d.validate();
      if (d.is_none()) throw ConfigError("'none' is implicit and cannot be listed as a defense");
      if (!seen.insert(d.label()).second) throw ConfigError("duplicate defense '" + d.label() + "'");
    }
    if (std::set<bool>(arms.begin(), arms.end()).size() != arms.size()) throw ConfigError("duplicate ablation arm");
    if (backend.kind == "stdio" && backend.command.empty()) throw ConfigError("stdio backend needs 'command'");
    if (backend.kind == "http" && backend.endpoint.empty()) throw ConfigError("http backend needs 'endpoint'");
    if (backend.kind != "mock" && backend.kind != "stdio" && backend.kind != "http") {
      throw ConfigError("unknown backend kind '" + backend.kind + "'");
    }
    if (backend.timeout_ms < 1 || backend.retries < 0) throw ConfigError("backend timeout/retries out of range");
    backend.mock.validate();
  }
};

namespace detail
{

inline void reject_unknown(const nlohmann::json & j, std::initializer_list<const char *> known, const char * where)
{
  for (const auto & [key, _] : j.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char * k) { return key == k; }) == known.end()) {
      throw ConfigError(fmt::format("{}: unknown key '{}'", where, key));
    }
  }
}

inline std::filesystem::path resolve(const std::filesystem::path & base, const std::string & p)
{
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline MockModelConfig mock_from_json(const nlohmann::json & j)
{
  reject_unknown(
    j,
    {"deviation_gain", "noise_floor_m", "flip_jump_m", "threshold_min", "threshold_max", "threshold_overrides",
     "ablation_penalty_m", "latency_with_coc_ms", "latency_without_coc_ms"},
    "backend.mock");
  MockModelConfig m;
  m.deviation_gain = j.value("deviation_gain", m.deviation_gain);
  m.noise_floor_m = j.value("noise_floor_m", m.noise_floor_m);
  m.flip_jump_m = j.value("flip_jump_m", m.flip_jump_m);
  m.threshold_min = j.value("threshold_min", m.threshold_min);
  m.threshold_max = j.value("threshold_max", m.threshold_max);
  if (j.contains("threshold_overrides")) {
    m.threshold_overrides = j["threshold_overrides"].get<std::map<std::string, double>>();
  }
  m.ablation_penalty_m = j.value("ablation_penalty_m", m.ablation_penalty_m);
  m.latency_with_coc_ms = j.value("latency_with_coc_ms", m.latency_with_coc_ms);
  m.latency_without_coc_ms = j.value("latency_without_coc_ms", m.latency_without_coc_ms);
  return m;
}

inline nlohmann::ordered_json mock_to_json(const MockModelConfig & m)
{
  nlohmann::ordered_json j;
  j["deviation_gain"] = m.deviation_gain;
  j["noise_floor_m"] = m.noise_floor_m;
  j["flip_jump_m"] = m.flip_jump_m;
  j["threshold_min"] = m.threshold_min;
  j["threshold_max"] = m.threshold_max;
  if (!m.threshold_overrides.empty()) j["threshold_overrides"] = m.threshold_overrides;
  j["ablation_penalty_m"] = m.ablation_penalty_m;
  j["latency_with_coc_ms"] = m.latency_with_coc_ms;
  j["latency_without_coc_ms"] = m.latency_without_coc_ms;
  return j;
}

}  // namespace detail

/// Parses a campaign config. Relative paths resolve against `base_dir`.
inline CampaignConfig campaign_config_from_json(const nlohmann::json & j, const std::filesystem::path & base_dir = ".")
{
  CampaignConfig c;
  try {
    if (!j.is_object()) throw ConfigError("campaign config must be a JSON object");
    detail::reject_unknown(
      j,
      {"manifest", "output_dir", "seed", "parallelism", "perturbations", "defenses", "arms", "unsafe_threshold_m",
       "severity", "fog", "backend", "bootstrap_resamples", "taxonomy", "store_trajectories"},
      "campaign");
    c.manifest = detail::resolve(base_dir, j.at("manifest").get<std::string>());
    if (j.contains("output_dir")) c.output_dir = detail::resolve(base_dir, j["output_dir"].get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.parallelism = j.value("parallelism", c.parallelism);
    if (j.contains("perturbations")) {
      c.perturbations.clear();
      for (const auto & p : j["perturbations"]) c.perturbations.push_back(perturbation_from_json(p));
    }
    if (j.contains("defenses")) {
      for (const auto & d : j["defenses"]) c.defenses.push_back(defense_from_json(d));
    }
    if (j.contains("arms")) {
      c.arms.clear();
      for (const auto & a : j["arms"]) {
        const auto s = a.get<std::string>();
        if (s == "with_coc") {
          c.arms.push_back(true);
        } else if (s == "without_coc") {
          c.arms.push_back(false);
        } else {
          throw ConfigError("arms: expected 'with_coc' or 'without_coc', got '" + s + "'");
        }
      }
    }
    c.unsafe_threshold_m = j.value("unsafe_threshold_m", c.unsafe_threshold_m);
    if (j.contains("severity")) {
      const auto & s = j["severity"];
      detail::reject_unknown(s, {"mild_below_m", "severe_above_m"}, "severity");
      c.mild_below_m = s.value("mild_below_m", c.mild_below_m);
      c.severe_above_m = s.value("severe_above_m", c.severe_above_m);
    }
    if (j.contains("fog")) {
      const auto & f = j["fog"];
      detail::reject_unknown(f, {"airlight", "depth_proxy", "near_fraction"}, "fog");
      if (f.contains("airlight")) c.fog.airlight = f["airlight"].get<Rgb>();
      c.fog.depth_proxy = f.value("depth_proxy", c.fog.depth_proxy);
      c.fog.near_fraction = f.value("near_fraction", c.fog.near_fraction);
    }
    if (j.contains("backend")) {
      const auto & b = j["backend"];
      detail::reject_unknown(b, {"kind", "command", "endpoint", "timeout_ms", "retries", "inline_frames", "mock"}, "backend");
      c.backend.kind = b.value("kind", c.backend.kind);
      if (b.contains("command")) c.backend.command = b["command"].get<std::vector<std::string>>();
      c.backend.endpoint = b.value("endpoint", c.backend.endpoint);
      c.backend.timeout_ms = b.value("timeout_ms", c.backend.timeout_ms);
      c.backend.retries = b.value("retries", c.backend.retries);
      c.backend.inline_frames = b.value("inline_frames", c.backend.inline_frames);
      if (b.contains("mock")) c.backend.mock = detail::mock_from_json(b["mock"]);
    }
    c.bootstrap_resamples = j.value("bootstrap_resamples", c.bootstrap_resamples);
    if (j.contains("taxonomy")) c.taxonomy = detail::resolve(base_dir, j["taxonomy"].get<std::string>());
    c.store_trajectories = j.value("store_trajectories", c.store_trajectories);
  } catch (const nlohmann::json::exception & e) {
    throw ConfigError(std::string("campaign config: ") + e.what());
  } catch (const ValidationError & e) {
    throw ConfigError(std::string("campaign config: ") + e.what());
  }
  c.validate();
  return c;
}

inline CampaignConfig load_campaign_config(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read campaign config: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error & e) {
    throw ConfigError("campaign config " + path.string() + ": " + e.what());
  }
  return campaign_config_from_json(j, path.parent_path().empty() ? "." : path.parent_path());
}

inline nlohmann::ordered_json to_json(const CampaignConfig & c)
{
  nlohmann::ordered_json j;
  j["manifest"] = c.manifest.string();
  j["output_dir"] = c.output_dir.string();
  j["seed"] = c.seed;
  j["parallelism"] = c.parallelism;
  auto ps = nlohmann::ordered_json::array();
  for (const auto & p : c.perturbations) ps.push_back(p.label());
  j["perturbations"] = ps;
  auto ds = nlohmann::ordered_json::array();
  for (const auto & d : c.defenses) ds.push_back(d.label());
  j["defenses"] = ds;
  auto arms = nlohmann::ordered_json::array();
  for (bool a : c.arms) arms.push_back(a ? "with_coc" : "without_coc");
  j["arms"] = arms;
  j["unsafe_threshold_m"] = c.unsafe_threshold_m;
  j["severity"] = {{"mild_below_m", c.mild_below_m}, {"severe_above_m", c.severe_above_m}};
  j["fog"] = {{"airlight", c.fog.airlight}, {"depth_proxy", c.fog.depth_proxy}, {"near_fraction", c.fog.near_fraction}};
  nlohmann::ordered_json b;
  b["kind"] = c.backend.kind;
  if (!c.backend.command.empty()) b["command"] = c.backend.command;
  if (!c.backend.endpoint.empty()) b["endpoint"] = c.backend.endpoint;
  b["timeout_ms"] = c.backend.timeout_ms;
  b["retries"] = c.backend.retries;
  b["inline_frames"] = c.backend.inline_frames;
  if (c.backend.kind == "mock") b["mock"] = detail::mock_to_json(c.backend.mock);
  j["backend"] = b;
  j["bootstrap_resamples"] = c.bootstrap_resamples;
  if (c.taxonomy) j["taxonomy"] = c.taxonomy->string();
  j["store_trajectories"] = c.store_trajectories;
  return j;
}

inline std::unique_ptr<Backend> make_backend(const BackendConfig & b)
{
  if (b.kind == "mock") return std::make_unique<MockBackend>(b.mock);
  if (b.kind == "stdio") return std::make_unique<StdioBackend>(b.command, b.timeout_ms);
  if (b.kind == "http") return std::make_unique<HttpBackend>(b.endpoint, b.timeout_ms, b.retries);
  throw ConfigError("unknown backend kind '" + b.kind + "'");
}

// ------------------------------------------------------------ runner

/// Identity of one trial; the resume key.
struct TrialKey
{
  std::string clip_id;
  std::string condition;
  std::string defense;
  bool with_coc = true;

  auto operator<=>(const TrialKey &) const = default;

  static TrialKey of(const EvalRecord & r)
  {
    return {r.clip_id, r.condition.label(), r.defense.label(), r.with_coc};
  }
};

struct FailureEntry
{
  TrialKey key;
  std::string error;
  std::string message;
};

struct RunStats
{
  std::size_t inferences = 0;  // backend calls that produced a record
  std::size_t resumed = 0;     // trials already present and skipped
  std::size_t failures = 0;    // trials left without a record
  std::size_t records = 0;     // records in the final file
};

struct RunOptions
{
  bool resume = true;
  std::function<void(const std::string &)> log;  // progress lines; may be empty
};

namespace detail
{

/// Canonical order: clip id, arm (config order), clean first, then
/// conditions and defenses in config order.
struct RecordOrder
{
  std::map<std::string, std::size_t> condition_rank;
  std::map<std::string, std::size_t> defense_rank;
  std::map<bool, std::size_t> arm_rank;

  explicit RecordOrder(const CampaignConfig & c)
  {
    condition_rank["clean"] = 0;
    for (std::size_t i = 0; i < c.perturbations.size(); ++i) condition_rank[c.perturbations[i].label()] = i + 1;
    defense_rank["none"] = 0;
    for (std::size_t i = 0; i < c.defenses.size(); ++i) defense_rank[c.defenses[i].label()] = i + 1;
    for (std::size_t i = 0; i < c.arms.size(); ++i) arm_rank[c.arms[i]] = i;
  }

  static std::size_t rank(const std::map<std::string, std::size_t> & m, const std::string & k)
  {
    auto it = m.find(k);
    return it == m.end() ? m.size() : it->second;
  }

  auto tuple_of(const EvalRecord & r) const
  {
    auto arm = arm_rank.find(r.with_coc);
    return std::make_tuple(
      r.clip_id, arm == arm_rank.end() ? arm_rank.size() : arm->second, rank(condition_rank, r.condition.label()),
      r.condition.label(), rank(defense_rank, r.defense.label()), r.defense.label());
  }

  bool operator()(const EvalRecord & a, const EvalRecord & b) const { return tuple_of(a) < tuple_of(b); }
};

inline std::string failure_line(const FailureEntry & f)
{
  nlohmann::ordered_json j;
  j["clip_id"] = f.key.clip_id;
  j["condition"] = f.key.condition;
  j["defense"] = f.key.defense;
  j["with_coc"] = f.key.with_coc;
  j["error"] = f.error;
  j["message"] = f.message;
  return j.dump();
}

inline std::string sanitize(std::string s)
{
  for (auto & ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
  }
  return s;
}

}  // namespace detail

/// Builds an evaluation record from a clean and a perturbed response.
inline EvalRecord make_record(
  const Clip & clip, const PerturbationSpec & condition, const DefenseSpec & defense, bool with_coc,
  const InferenceResponse & clean, const InferenceResponse & perturbed, double energy, std::uint64_t seed,
  bool store_trajectory)
{
  EvalRecord r;
  r.clip_id = clip.id;
  r.condition = condition;
  r.defense = defense;
  r.with_coc = with_coc;
  r.ade_m = ade(perturbed.trajectory, clip.gt_trajectory);
  r.fde_m = fde(perturbed.trajectory, clip.gt_trajectory);
  r.delta_ade_m = r.ade_m - ade(clean.trajectory, clip.gt_trajectory);
  r.l2_deviation_m = l2_deviation(clean.trajectory, perturbed.trajectory);
  r.coc_clean = clean.coc.value_or("");
  r.coc_perturbed = perturbed.coc.value_or("");
  const CoCText a(r.coc_clean);
  const CoCText b(r.coc_perturbed);
  r.coc_changed = coc_changed(a, b);
  r.word_similarity = jaccard_similarity(a, b);
  r.energy = energy;
  r.latency_ms = perturbed.latency_ms;
  r.seed = seed;
  if (store_trajectory) r.trajectory = perturbed.trajectory;
  return r;
}

struct CampaignResult
{
  RunStats stats;
  std::vector<EvalRecord> records;  // canonical order
  std::vector<FailureEntry> failures;
};

/// Runs (or resumes) a campaign against `backend`. Errors on single trials
/// are recorded in failures.jsonl and do not abort the run.
inline CampaignResult run_campaign(const CampaignConfig & cfg, Backend & backend, const RunOptions & opts = {})
{
  cfg.validate();
  const Manifest manifest = load_manifest(cfg.manifest, /*check_frames=*/true);
  std::filesystem::create_directories(cfg.output_dir);
  const auto log = [&](const std::string & s) {
    if (opts.log) opts.log(s);
  };

  std::map<TrialKey, EvalRecord> done;
  if (opts.resume && std::filesystem::exists(cfg.records_path())) {
    auto prev = read_records_detailed(cfg.records_path(), /*strict=*/false);
    for (auto & r : prev.records) done.insert_or_assign(TrialKey::of(r), std::move(r));
    if (!prev.skipped_lines.empty()) {
      log(fmt::format("resume: ignored {} corrupt record line(s)", prev.skipped_lines.size()));
    }
  }
  const std::size_t resumed_before = done.size();
  // Rewrite what was kept so the append stream below starts from valid lines only.
  {
    std::vector<EvalRecord> kept;
    for (const auto & [k, r] : done) kept.push_back(r);
    write_records(kept, cfg.records_path());
  }
  RecordWriter writer(cfg.records_path());

  struct Unit
  {
    std::size_t clip;
    bool with_coc;
  };
  std::vector<Unit> units;
  for (std::size_t i = 0; i < manifest.clips.size(); ++i)
    for (bool arm : cfg.arms) units.push_back({i, arm});

  std::mutex mu;
  std::vector<FailureEntry> failures;
  std::map<TrialKey, EvalRecord> fresh;
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> inferences{0};

  auto frame_dir = cfg.output_dir / "frames";
  auto payloads_for = [&](const Clip & clip, std::span<const Image> frames, const std::string & tag) {
    if (!backend.needs_frame_payloads()) return std::vector<FramePayload>(frames.size());
    if (cfg.backend.inline_frames) return inline_payloads(frames);
    std::vector<FramePayload> out;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      FramePayload p;
      if (tag.empty()) {
        p.path = std::filesystem::absolute(manifest.frame_path(clip.frames[i])).string();
      } else {
        const auto dir = frame_dir / detail::sanitize(clip.id);
        std::filesystem::create_directories(dir);
        const auto file = dir / fmt::format(
          "{}_t{}_{}.ppm", tag, clip.frames[i].timestep, detail::sanitize(clip.frames[i].view));
        write_ppm(frames[i], file.string());
        p.path = std::filesystem::absolute(file).string();
      }
      out.push_back(std::move(p));
    }
    return out;
  };

  auto worker = [&]() {
    while (true) {
      const std::size_t u = next.fetch_add(1);
      if (u >= units.size()) return;
      const Clip & clip = manifest.clips[units[u].clip];
      const bool with_coc = units[u].with_coc;

      std::vector<std::pair<PerturbationSpec, DefenseSpec>> todo;
      for (const auto & p : cfg.perturbations) {
        todo.emplace_back(p, DefenseSpec{});
        for (const auto & d : cfg.defenses) todo.emplace_back(p, d);
      }
      auto fail_all = [&](const std::string & code, const std::string & msg, bool include_clean) {
        std::lock_guard<std::mutex> lk(mu);
        if (include_clean) failures.push_back({{clip.id, "clean", "none", with_coc}, code, msg});
        for (const auto & [p, d] : todo) {
          TrialKey k{clip.id, p.label(), d.label(), with_coc};
          if (!done.count(k)) failures.push_back({k, code, msg});
        }
      };
      auto run = [&](std::span<const Image> frames, std::span<const Image> clean, const std::string & tag) {
        InferenceJob job;
        job.clip = &clip;
        job.request = make_request(clip, payloads_for(clip, frames, tag), with_coc, cfg.seed);
        job.frames = frames;
        job.clean_frames = clean;
        return backend.infer(job);
      };

      std::vector<Image> clean_frames;
      try {
        for (const auto & f : clip.frames) clean_frames.push_back(read_ppm(manifest.frame_path(f).string()));
      } catch (const Error & e) {
        fail_all("io_error", e.what(), !done.count({clip.id, "clean", "none", with_coc}));
        continue;
      }

      // Clean reference: reuse a stored record when resuming.
      const TrialKey clean_key{clip.id, "clean", "none", with_coc};
      InferenceResponse clean_resp;
      if (auto it = done.find(clean_key); it != done.end() && it->second.trajectory) {
        clean_resp.trajectory = *it->second.trajectory;
        if (with_coc) clean_resp.coc = it->second.coc_perturbed;
        clean_resp.latency_ms = it->second.latency_ms;
      } else {
        try {
          clean_resp = run(clean_frames, clean_frames, "");
          ++inferences;
        } catch (const BackendError & e) {
          fail_all(to_string(e.code()), e.what(), true);
          continue;
        } catch (const Error & e) {
          fail_all("error", e.what(), true);
          continue;
        }
        auto rec = make_record(clip, PerturbationSpec::clean(), DefenseSpec{}, with_coc, clean_resp, clean_resp, 0.0, cfg.seed, true);
        writer.write(rec);
        std::lock_guard<std::mutex> lk(mu);
        fresh.insert_or_assign(clean_key, std::move(rec));
      }

      for (const auto & p : cfg.perturbations) {
        std::optional<std::vector<Image>> perturbed;
        for (const DefenseSpec & d : [&] {
               std::vector<DefenseSpec> ds{DefenseSpec{}};
               ds.insert(ds.end(), cfg.defenses.begin(), cfg.defenses.end());
               return ds;
             }()) {
          const TrialKey key{clip.id, p.label(), d.label(), with_coc};
          if (done.count(key)) continue;
          try {
            if (!perturbed) perturbed = perturb_frames(clean_frames, clip.frames, p, cfg.seed, clip.id, cfg.fog);
            std::vector<Image> input;
            if (d.is_none()) {
              input = *perturbed;
            } else {
              for (const auto & img : *perturbed) input.push_back(apply_defense(img, d));
            }
            const double energy = mean_perturbation_energy(clean_frames, input);
            const auto tag = fmt::format("{}__{}__{}", p.label(), d.label(), with_coc ? "coc" : "nococ");
            const auto resp = run(input, clean_frames, tag);
            ++inferences;
            auto rec = make_record(clip, p, d, with_coc, clean_resp, resp, energy, cfg.seed, cfg.store_trajectories);
            writer.write(rec);
            std::lock_guard<std::mutex> lk(mu);
            fresh.insert_or_assign(key, std::move(rec));
          } catch (const BackendError & e) {
            std::lock_guard<std::mutex> lk(mu);
            failures.push_back({key, to_string(e.code()), e.what()});
          } catch (const Error & e) {
            std::lock_guard<std::mutex> lk(mu);
            failures.push_back({key, "error", e.what()});
          }
        }
      }
      log(fmt::format("clip {} ({}) done", clip.id, with_coc ? "with_coc" : "without_coc"));
    }
  };

  const int n_threads = std::max(1, std::min<int>(cfg.parallelism, static_cast<int>(units.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto & t : pool) t.join();

  CampaignResult out;
  for (auto & [k, r] : done) fresh.try_emplace(k, std::move(r));
  for (auto & [k, r] : fresh) out.records.push_back(std::move(r));
  detail::RecordOrder order(cfg);
  std::sort(out.records.begin(), out.records.end(), order);
  write_records(out.records, cfg.records_path());

  std::sort(failures.begin(), failures.end(), [](const auto & a, const auto & b) { return a.key < b.key; });
  {
    std::ofstream f(cfg.failures_path(), std::ios::trunc);
    for (const auto & e : failures) f << detail::failure_line(e) << '\n';
  }
  out.failures = std::move(failures);
  out.stats.inferences = inferences.load();
  out.stats.resumed = resumed_before;
  out.stats.failures = out.failures.size();
  out.stats.records = out.records.size();
  return out;
}

}  // namespace cocstress

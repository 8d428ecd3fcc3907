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

// The model-under-test boundary: the line-delimited JSON wire protocol,
// the Backend interface, a deterministic mock model, and the
// constant-velocity kinematic baseline. Field names are fixed; see
// docs/protocol.md.

#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cocstress/data_model.hpp"
#include "cocstress/errors.hpp"
#include "cocstress/image.hpp"
#include "cocstress/metrics.hpp"
#include "cocstress/perturb.hpp"
#include "cocstress/rng.hpp"
#include "cocstress/types.hpp"

namespace cocstress
{

inline constexpr int kCocTokenBudget = 512;
inline constexpr int kNoCocTokenBudget = 1;

// ------------------------------------------------------------ errors

enum class BackendErrorCode {
  connection_failure,
  timeout,
  malformed_response,
  shape_violation,
  protocol_violation,
  remote_error,
};

inline const char * to_string(BackendErrorCode c)
{
  switch (c) {
    case BackendErrorCode::connection_failure: return "connection_failure";
    case BackendErrorCode::timeout: return "timeout";
    case BackendErrorCode::malformed_response: return "malformed_response";
    case BackendErrorCode::shape_violation: return "shape_violation";
    case BackendErrorCode::protocol_violation: return "protocol_violation";
    case BackendErrorCode::remote_error: return "remote_error";
  }
  return "?";
}

class BackendError : public Error
{
public:
  BackendError(BackendErrorCode code, const std::string & what)
  : Error(std::string(to_string(code)) + ": " + what), code_(code)
  {
  }

  BackendErrorCode code() const noexcept { return code_; }

private:
  BackendErrorCode code_;
};

// ------------------------------------------------------------ messages

/// A frame passed by shared-filesystem path, or inline as base64 PPM.
struct FramePayload
{
  std::string path;
  std::optional<std::string> inline_ppm_base64;

  friend bool operator==(const FramePayload &, const FramePayload &) = default;
};

struct InferenceRequest
{
  std::string id;  // echoed in the response; used to match concurrent replies
  std::string clip_id;
  std::vector<FramePayload> frames;
  std::vector<EgoState> ego_history;
  bool with_coc = true;
  int max_new_tokens = kCocTokenBudget;
  double temperature = 0.6;
  double top_p = 0.98;
  std::uint64_t seed = 42;

  friend bool operator==(const InferenceRequest &, const InferenceRequest &) = default;
};

struct InferenceResponse
{
  Trajectory trajectory;
  std::optional<std::string> coc;
  double latency_ms = 0.0;
};

/// The response as it arrives on the wire, before shape validation.
struct RawResponse
{
  std::string id;
  std::vector<Vec2> trajectory;
  std::optional<std::string> coc;
  std::optional<double> latency_ms;

  friend bool operator==(const RawResponse &, const RawResponse &) = default;
};

struct ErrorFrame
{
  std::string id;
  std::string code;
  std::string message;
};

/// Ablation contract: without CoC the token budget is exactly one.
inline void validate_request(const InferenceRequest & r)
{
  if (r.clip_id.empty()) {
    throw ValidationError("request: empty clip_id");
  }
  if (r.max_new_tokens < 1) {
    throw ValidationError("request: max_new_tokens must be >= 1");
  }
  if (!r.with_coc && r.max_new_tokens != kNoCocTokenBudget) {
    throw ValidationError("request: with_coc=false requires max_new_tokens = 1");
  }
}

inline InferenceRequest make_request(
  const Clip & clip, std::vector<FramePayload> frames, bool with_coc, std::uint64_t seed = 42)
{
  InferenceRequest r;
  r.clip_id = clip.id;
  r.frames = std::move(frames);
  r.ego_history = clip.ego_history;
  r.with_coc = with_coc;
  r.max_new_tokens = with_coc ? kCocTokenBudget : kNoCocTokenBudget;
  r.seed = seed;
  return r;
}

inline nlohmann::ordered_json request_to_json(const InferenceRequest & r)
{
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["clip_id"] = r.clip_id;
  auto frames = nlohmann::ordered_json::array();
  for (const auto & f : r.frames) {
    if (f.inline_ppm_base64) {
      nlohmann::ordered_json fj;
      fj["encoding"] = "ppm_base64";
      fj["data"] = *f.inline_ppm_base64;
      frames.push_back(fj);
    } else {
      frames.push_back(f.path);
    }
  }
  j["frames"] = frames;
  auto ego = nlohmann::ordered_json::array();
  for (const auto & e : r.ego_history) {
    nlohmann::ordered_json ej;
    ej["t"] = e.t;
    ej["x"] = e.position.x;
    ej["y"] = e.position.y;
    ej["vx"] = e.velocity.x;
    ej["vy"] = e.velocity.y;
    ego.push_back(ej);
  }
  j["ego_history"] = ego;
  j["with_coc"] = r.with_coc;
  j["max_new_tokens"] = r.max_new_tokens;
  j["temperature"] = r.temperature;
  j["top_p"] = r.top_p;
  j["seed"] = r.seed;
  return j;
}

inline std::string serialize_request(const InferenceRequest & r) { return request_to_json(r).dump(); }

inline InferenceRequest parse_request(const std::string & line)
{
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error & e) {
    throw ValidationError(std::string("request is not valid JSON: ") + e.what());
  }
  InferenceRequest r;
  try {
    r.id = j.value("id", std::string{});
    r.clip_id = j.at("clip_id").get<std::string>();
    for (const auto & f : j.at("frames")) {
      FramePayload p;
      if (f.is_string()) {
        p.path = f.get<std::string>();
      } else if (f.is_object() && f.value("encoding", std::string{}) == "ppm_base64") {
        p.inline_ppm_base64 = f.at("data").get<std::string>();
      } else {
        throw ValidationError("request: frame must be a path or {encoding: ppm_base64, data}");
      }
      r.frames.push_back(std::move(p));
    }
    for (const auto & e : j.at("ego_history")) {
      EgoState s;
      s.t = e.at("t").get<double>();
      s.position = {e.at("x").get<double>(), e.at("y").get<double>()};
      s.velocity = {e.at("vx").get<double>(), e.at("vy").get<double>()};
      r.ego_history.push_back(s);
    }
    r.with_coc = j.at("with_coc").get<bool>();
    r.max_new_tokens = j.at("max_new_tokens").get<int>();
    r.temperature = j.at("temperature").get<double>();
    r.top_p = j.at("top_p").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception & e) {
    throw ValidationError(std::string("request field error: ") + e.what());
  }
  validate_request(r);
  return r;
}

inline nlohmann::ordered_json raw_response_to_json(const RawResponse & r)
{
  nlohmann::ordered_json j;
  j["id"] = r.id;
  auto traj = nlohmann::ordered_json::array();
  for (const auto & p : r.trajectory) traj.push_back(nlohmann::ordered_json::array({p.x, p.y}));
  j["trajectory"] = traj;
  if (r.coc) {
    j["coc"] = *r.coc;
  } else {
    j["coc"] = nullptr;
  }
  if (r.latency_ms) {
    j["latency_ms"] = *r.latency_ms;
  }
  return j;
}

inline std::string serialize_response(const RawResponse & r) { return raw_response_to_json(r).dump(); }

inline RawResponse to_raw(const InferenceResponse & r, const std::string & id)
{
  RawResponse raw;
  raw.id = id;
  raw.trajectory.assign(r.trajectory.points().begin(), r.trajectory.points().end());
  raw.coc = r.coc;
  raw.latency_ms = r.latency_ms;
  return raw;
}

inline std::string serialize_error(const ErrorFrame & e)
{
  nlohmann::ordered_json j;
  j["id"] = e.id;
  j["error"] = e.code;
  j["message"] = e.message;
  return j.dump();
}

/// One decoded line from a backend: either a response or an error frame.
struct WireMessage
{
  std::optional<RawResponse> response;
  std::optional<ErrorFrame> error;

  const std::string & id() const { return response ? response->id : error->id; }
};

/// Decodes a response line. Throws BackendError(malformed_response) when the
/// line is not a well-formed response or error frame.
inline WireMessage parse_wire_message(const std::string & line)
{
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error & e) {
    throw BackendError(BackendErrorCode::malformed_response, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) {
    throw BackendError(BackendErrorCode::malformed_response, "message is not an object");
  }
  WireMessage msg;
  try {
    if (j.contains("error")) {
      ErrorFrame e;
      e.id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : std::string{};
      e.code = j.at("error").is_string() ? j.at("error").get<std::string>() : j.at("error").dump();
      e.message = j.value("message", std::string{});
      msg.error = std::move(e);
      return msg;
    }
    RawResponse r;
    r.id = j.value("id", std::string{});
    const auto & traj = j.at("trajectory");
    if (!traj.is_array()) {
      throw BackendError(BackendErrorCode::malformed_response, "trajectory is not an array");
    }
    for (const auto & p : traj) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        throw BackendError(BackendErrorCode::malformed_response, "waypoint must be [x, y]");
      }
      r.trajectory.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    if (j.contains("coc") && !j["coc"].is_null()) {
      r.coc = j["coc"].get<std::string>();
    }
    if (j.contains("latency_ms") && !j["latency_ms"].is_null()) {
      r.latency_ms = j["latency_ms"].get<double>();
    }
    msg.response = std::move(r);
  } catch (const nlohmann::json::exception & e) {
    throw BackendError(BackendErrorCode::malformed_response, e.what());
  }
  return msg;
}

/// Checks a wire response against its request; `fallback_latency_ms` is the
/// harness-measured wall time used when the backend reports none.
inline InferenceResponse validate_response(
  const InferenceRequest & req, const RawResponse & raw, double fallback_latency_ms = 0.0)
{
  if (raw.trajectory.size() != kWaypointCount) {
    throw BackendError(
      BackendErrorCode::shape_violation,
      "clip '" + req.clip_id + "': expected " + std::to_string(kWaypointCount) + " waypoints, got " +
        std::to_string(raw.trajectory.size()));
  }
  for (const auto & p : raw.trajectory) {
    if (!p.finite()) {
      throw BackendError(BackendErrorCode::shape_violation, "clip '" + req.clip_id + "': non-finite waypoint");
    }
  }
  if (!req.with_coc && raw.coc && !raw.coc->empty()) {
    throw BackendError(
      BackendErrorCode::protocol_violation,
      "clip '" + req.clip_id + "': CoC text returned for a with_coc=false request");
  }
  InferenceResponse out;
  out.trajectory = Trajectory::from_points(raw.trajectory);
  out.coc = req.with_coc ? raw.coc : std::nullopt;
  out.latency_ms = raw.latency_ms.value_or(fallback_latency_ms);
  return out;
}

inline InferenceResponse decode_response(const InferenceRequest & req, const std::string & line, double fallback_latency_ms = 0.0)
{
  auto msg = parse_wire_message(line);
  if (msg.error) {
    throw BackendError(BackendErrorCode::remote_error, msg.error->code + ": " + msg.error->message);
  }
  return validate_response(req, *msg.response, fallback_latency_ms);
}

// ------------------------------------------------------------ backends

/// Everything a backend may use for one inference. `frames` are the
/// (perturbed, possibly defended) inputs; `clean_frames` the unperturbed
/// originals, which only the mock consults.
struct InferenceJob
{
  const Clip * clip = nullptr;
  InferenceRequest request;
  std::span<const Image> frames;
  std::span<const Image> clean_frames;
};

class Backend
{
public:
  virtual ~Backend() = default;

  /// Must be safe to call concurrently.
  virtual InferenceResponse infer(const InferenceJob & job) = 0;

  /// Remote backends read frames from disk (or inline payloads).
  virtual bool needs_frame_payloads() const { return false; }

  virtual std::string name() const = 0;
};

// ------------------------------------------------------------ baseline

/// Straight-line continuation from the last ego state at its velocity:
/// waypoint i (1..64) = p + v * i * dt.
inline Trajectory constant_velocity_baseline(std::span<const EgoState> history, double dt = kWaypointDt)
{
  if (history.empty()) {
    throw ValidationError("constant-velocity baseline needs at least one ego state");
  }
  const auto & last = history.back();
  if (!last.position.finite() || !last.velocity.finite()) {
    throw ValidationError("constant-velocity baseline: non-finite ego state");
  }
  Trajectory::Points pts;
  for (std::size_t i = 0; i < kWaypointCount; ++i) {
    const double t = static_cast<double>(i + 1) * dt;
    pts[i] = last.position + t * last.velocity;
  }
  return Trajectory(pts, dt);
}

// ------------------------------------------------------------ mock model

/// Parameters of the deterministic mock. Its trajectory is the ground truth
/// displaced along a clip-keyed unit direction u by
///   noise_floor + gain * E + flip_jump * [E > threshold(clip)] + penalty * [!with_coc]
/// where E is the mean perturbation energy of the input frames. The CoC flips
/// exactly when E exceeds the clip's threshold. The penalty is scaled per
/// clip by a factor in [0.5, 1.5).
struct MockModelConfig
{
  double deviation_gain = 0.02;  // meters per unit energy
  double noise_floor_m = 0.5;
  double flip_jump_m = 2.0;
  double threshold_min = 4.0;  // per-clip thresholds are log-uniform in [min, max]
  double threshold_max = 150.0;
  std::map<std::string, double> threshold_overrides;
  double ablation_penalty_m = 0.3;
  double latency_with_coc_ms = 9000.0;
  double latency_without_coc_ms = 3000.0;

  void validate() const
  {
    if (!(deviation_gain >= 0.0) || !(noise_floor_m >= 0.0) || !(flip_jump_m >= 0.0) ||
        !(ablation_penalty_m >= 0.0)) {
      throw ConfigError("mock: gains and offsets must be >= 0");
    }
    if (!(threshold_min > 0.0) || !(threshold_max >= threshold_min)) {
      throw ConfigError("mock: need 0 < threshold_min <= threshold_max");
    }
  }

  double threshold_for(const std::string & clip_id) const
  {
    if (auto it = threshold_overrides.find(clip_id); it != threshold_overrides.end()) {
      return it->second;
    }
    CounterRng rng(KeyBuilder{}.add("mock-threshold").add(clip_id).finish());
    return threshold_min * std::pow(threshold_max / threshold_min, rng.uniform());
  }

  double ablation_penalty_for(const std::string & clip_id) const
  {
    CounterRng rng(KeyBuilder{}.add("mock-penalty").add(clip_id).finish());
    return ablation_penalty_m * (0.5 + rng.uniform());
  }

  Vec2 direction_for(const std::string & clip_id) const
  {
    CounterRng rng(KeyBuilder{}.add("mock-direction").add(clip_id).finish());
    const double angle = rng.uniform(0.0, 6.283185307179586);
    return {std::cos(angle), std::sin(angle)};
  }
};

inline const std::vector<std::string> & mock_flip_templates()
{
  static const std::vector<std::string> t = {
    "Keep lane to continue driving since no critical agent needs attention",
    "Slow down because a pedestrian may cross ahead",
    "Accelerate to pass the slow truck in the adjacent lane",
  };
  return t;
}

/// The punctuation-only variant: toggles a trailing period.
inline std::string punctuation_variant(const std::string & coc)
{
  const std::string norm = CoCText::normalize_whitespace(coc);
  if (!norm.empty() && norm.back() == '.') return norm.substr(0, norm.size() - 1);
  return norm + ".";
}

/// Deterministic flipped explanation. Slot 3 is the punctuation variant;
/// the other slots are fixed sentences distinct from `clean_coc`.
inline std::string mock_flipped_coc(const std::string & clip_id, const std::string & clean_coc, double energy)
{
  const auto & templates = mock_flip_templates();
  CounterRng rng(KeyBuilder{}.add("mock-flip").add(clip_id).add(std::int64_t{std::llround(energy * 1000.0)}).finish());
  const auto slot = static_cast<std::size_t>(rng.below(templates.size() + 1));
  if (slot == templates.size()) {
    return punctuation_variant(clean_coc);
  }
  for (std::size_t k = 0; k < templates.size(); ++k) {
    const auto & cand = templates[(slot + k) % templates.size()];
    if (coc_changed(clean_coc, cand)) return cand;
  }
  return punctuation_variant(clean_coc);
}

inline InferenceResponse mock_infer(
  const Clip & clip, std::span<const Image> clean_frames, std::span<const Image> perturbed_frames,
  const MockModelConfig & cfg, bool with_coc)
{
  const double energy = mean_perturbation_energy(clean_frames, perturbed_frames);
  const bool flipped = energy > cfg.threshold_for(clip.id);
  double magnitude = cfg.noise_floor_m + cfg.deviation_gain * energy;
  if (flipped) magnitude += cfg.flip_jump_m;
  if (!with_coc) magnitude += cfg.ablation_penalty_for(clip.id);

  InferenceResponse resp;
  resp.trajectory = clip.gt_trajectory.shifted(magnitude * cfg.direction_for(clip.id));
  if (with_coc) {
    resp.coc = flipped ? mock_flipped_coc(clip.id, clip.clean_coc, energy) : clip.clean_coc;
  }
  resp.latency_ms = with_coc ? cfg.latency_with_coc_ms : cfg.latency_without_coc_ms;
  return resp;
}

class MockBackend : public Backend
{
public:
  explicit MockBackend(MockModelConfig cfg = {}) : cfg_(std::move(cfg)) { cfg_.validate(); }

  InferenceResponse infer(const InferenceJob & job) override
  {
    validate_request(job.request);
    if (job.clip == nullptr) {
      throw BackendError(BackendErrorCode::protocol_violation, "mock backend needs the clip");
    }
    auto resp = mock_infer(*job.clip, job.clean_frames, job.frames, cfg_, job.request.with_coc);
    // Route through the wire validator so the mock obeys the same contract.
    return validate_response(job.request, to_raw(resp, job.request.id));
  }

  std::string name() const override { return "mock"; }
  const MockModelConfig & config() const { return cfg_; }

private:
  MockModelConfig cfg_;
};

}  // namespace cocstress

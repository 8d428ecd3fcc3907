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

// Core domain types shared by every module: trajectories, clips, the
// perturbation/defense condition records, and per-trial evaluation records.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "cocstress/errors.hpp"

namespace cocstress
{

struct Vec2
{
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
  friend bool operator==(const Vec2 &, const Vec2 &) = default;

  double norm() const { return std::hypot(x, y); }
  double squared_norm() const { return x * x + y * y; }
  bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

inline constexpr std::size_t kWaypointCount = 64;
inline constexpr double kWaypointDt = 0.1;

/// 64 planar waypoints in the ego frame at 10 Hz (6.4 s horizon).
class Trajectory
{
public:
  using Points = std::array<Vec2, kWaypointCount>;

  Trajectory() = default;

  explicit Trajectory(const Points & pts, double dt = kWaypointDt) : points_(pts), dt_(dt)
  {
    check();
  }

  /// Throws ValidationError unless exactly 64 finite points are given.
  static Trajectory from_points(const std::vector<Vec2> & pts, double dt = kWaypointDt)
  {
    if (pts.size() != kWaypointCount) {
      throw ValidationError(
        "trajectory must have " + std::to_string(kWaypointCount) + " waypoints, got " +
        std::to_string(pts.size()));
    }
    Points arr;
    std::copy(pts.begin(), pts.end(), arr.begin());
    return Trajectory(arr, dt);
  }

  const Points & points() const noexcept { return points_; }
  const Vec2 & operator[](std::size_t i) const { return points_[i]; }
  std::size_t size() const noexcept { return kWaypointCount; }
  double dt() const noexcept { return dt_; }
  double horizon() const noexcept { return static_cast<double>(kWaypointCount) * dt_; }

  /// Every waypoint translated by `offset`.
  Trajectory shifted(Vec2 offset) const
  {
    Points pts = points_;
    for (auto & p : pts) {
      p = p + offset;
    }
    return Trajectory(pts, dt_);
  }

  friend bool operator==(const Trajectory &, const Trajectory &) = default;

private:
  void check() const
  {
    if (!(dt_ > 0.0) || !std::isfinite(dt_)) {
      throw ValidationError("trajectory dt must be positive and finite");
    }
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (!points_[i].finite()) {
        throw ValidationError("trajectory waypoint " + std::to_string(i) + " is not finite");
      }
    }
  }

  Points points_{};
  double dt_ = kWaypointDt;
};

struct EgoState
{
  double t = 0.0;
  Vec2 position;
  Vec2 velocity;

  friend bool operator==(const EgoState &, const EgoState &) = default;
};

/// One still image of a clip. Views sharing a timestep receive the same
/// perturbation seed.
struct FrameRef
{
  std::string path;  // relative to the manifest directory
  std::int64_t timestep = 0;
  std::string view;

  friend bool operator==(const FrameRef &, const FrameRef &) = default;
};

struct Clip
{
  std::string id;
  std::vector<FrameRef> frames;
  std::vector<EgoState> ego_history;
  Trajectory gt_trajectory;
  std::string clean_coc;
  std::optional<std::string> category;

  friend bool operator==(const Clip &, const Clip &) = default;
};

// ------------------------------------------------------------ conditions

enum class PerturbationKind { clean, noise, dark, bright, fog_light, fog_heavy };

inline const char * to_string(PerturbationKind k)
{
  switch (k) {
    case PerturbationKind::clean: return "clean";
    case PerturbationKind::noise: return "noise";
    case PerturbationKind::dark: return "dark";
    case PerturbationKind::bright: return "bright";
    case PerturbationKind::fog_light: return "fog_light";
    case PerturbationKind::fog_heavy: return "fog_heavy";
  }
  return "?";
}

inline PerturbationKind perturbation_kind_from_string(const std::string & s)
{
  for (auto k : {PerturbationKind::clean, PerturbationKind::noise, PerturbationKind::dark,
                 PerturbationKind::bright, PerturbationKind::fog_light,
                 PerturbationKind::fog_heavy}) {
    if (s == to_string(k)) {
      return k;
    }
  }
  throw ValidationError("unknown perturbation kind '" + s + "'");
}

// Shortest decimal form of a parameter, used inside condition labels.
inline std::string param_text(double v)
{
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    return fmt::format("{}", static_cast<long long>(v));
  }
  return fmt::format("{}", v);
}

/// One sensor corruption. Only the field matching `kind` is meaningful.
struct PerturbationSpec
{
  PerturbationKind kind = PerturbationKind::clean;
  double sigma = 0.0;               // noise: std-dev in intensity units
  double brightness_factor = 1.0;   // dark / bright
  double alpha = 0.0;               // fog blend weight

  static PerturbationSpec clean() { return {}; }
  static PerturbationSpec noise(double s) { return {PerturbationKind::noise, s, 1.0, 0.0}; }
  static PerturbationSpec dark(double f = 0.4) { return {PerturbationKind::dark, 0.0, f, 0.0}; }
  static PerturbationSpec bright(double f = 1.6) { return {PerturbationKind::bright, 0.0, f, 0.0}; }
  static PerturbationSpec fog_light(double a = 0.3) { return {PerturbationKind::fog_light, 0.0, 1.0, a}; }
  static PerturbationSpec fog_heavy(double a = 0.7) { return {PerturbationKind::fog_heavy, 0.0, 1.0, a}; }

  bool is_clean() const noexcept { return kind == PerturbationKind::clean; }

  void validate() const
  {
    switch (kind) {
      case PerturbationKind::clean:
        return;
      case PerturbationKind::noise:
        if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
          throw ValidationError("noise sigma must be finite and >= 0");
        }
        return;
      case PerturbationKind::dark:
      case PerturbationKind::bright:
        if (!(brightness_factor > 0.0) || !std::isfinite(brightness_factor)) {
          throw ValidationError("brightness factor must be finite and > 0");
        }
        return;
      case PerturbationKind::fog_light:
      case PerturbationKind::fog_heavy:
        if (!(alpha >= 0.0 && alpha <= 1.0)) {
          throw ValidationError("fog alpha must lie in [0, 1]");
        }
        return;
    }
  }

  /// Condition label: "noise_30", "dark", "fog_heavy", ... Non-default
  /// parameters for the named conditions are appended ("dark_0.3").
  std::string label() const
  {
    switch (kind) {
      case PerturbationKind::clean: return "clean";
      case PerturbationKind::noise: return "noise_" + param_text(sigma);
      case PerturbationKind::dark:
        return brightness_factor == 0.4 ? "dark" : "dark_" + param_text(brightness_factor);
      case PerturbationKind::bright:
        return brightness_factor == 1.6 ? "bright" : "bright_" + param_text(brightness_factor);
      case PerturbationKind::fog_light:
        return alpha == 0.3 ? "fog_light" : "fog_light_" + param_text(alpha);
      case PerturbationKind::fog_heavy:
        return alpha == 0.7 ? "fog_heavy" : "fog_heavy_" + param_text(alpha);
    }
    return "?";
  }

  static PerturbationSpec from_label(const std::string & label)
  {
    auto param_after = [&](std::size_t prefix_len) {
      try {
        std::size_t used = 0;
        const std::string tail = label.substr(prefix_len);
        const double v = std::stod(tail, &used);
        if (used != tail.size()) {
          throw ValidationError("");
        }
        return v;
      } catch (const std::exception &) {
        throw ValidationError("malformed condition label '" + label + "'");
      }
    };
    auto starts = [&](const std::string & p) { return label.rfind(p, 0) == 0; };
    PerturbationSpec s;
    if (label == "clean") {
      s = clean();
    } else if (starts("noise_")) {
      s = noise(param_after(6));
    } else if (label == "dark") {
      s = dark();
    } else if (starts("dark_")) {
      s = dark(param_after(5));
    } else if (label == "bright") {
      s = bright();
    } else if (starts("bright_")) {
      s = bright(param_after(7));
    } else if (label == "fog_light") {
      s = fog_light();
    } else if (starts("fog_light_")) {
      s = fog_light(param_after(10));
    } else if (label == "fog_heavy") {
      s = fog_heavy();
    } else if (starts("fog_heavy_")) {
      s = fog_heavy(param_after(10));
    } else {
      throw ValidationError("unknown condition label '" + label + "'");
    }
    s.validate();
    return s;
  }

  friend bool operator==(const PerturbationSpec &, const PerturbationSpec &) = default;
};

/// The eight corruption conditions of the standard threat model.
inline std::vector<PerturbationSpec> standard_perturbations()
{
  return {
    PerturbationSpec::noise(10), PerturbationSpec::noise(30), PerturbationSpec::noise(50),
    PerturbationSpec::noise(70), PerturbationSpec::dark(), PerturbationSpec::bright(),
    PerturbationSpec::fog_light(), PerturbationSpec::fog_heavy()};
}

enum class DefenseKind { none, gaussian3, gaussian5, median3, median5, bilateral, jpeg75 };

inline const char * to_string(DefenseKind k)
{
  switch (k) {
    case DefenseKind::none: return "none";
    case DefenseKind::gaussian3: return "gaussian3";
    case DefenseKind::gaussian5: return "gaussian5";
    case DefenseKind::median3: return "median3";
    case DefenseKind::median5: return "median5";
    case DefenseKind::bilateral: return "bilateral";
    case DefenseKind::jpeg75: return "jpeg75";
  }
  return "?";
}

/// One input-preprocessing defense. Parameters default per kind.
struct DefenseSpec
{
  DefenseKind kind = DefenseKind::none;
  int kernel = 0;             // gaussian / median
  int diameter = 5;           // bilateral
  double sigma_color = 75.0;  // bilateral
  double sigma_space = 75.0;  // bilateral
  int quality = 75;           // jpeg

  static DefenseSpec of(DefenseKind k)
  {
    DefenseSpec s;
    s.kind = k;
    switch (k) {
      case DefenseKind::gaussian3:
      case DefenseKind::median3: s.kernel = 3; break;
      case DefenseKind::gaussian5:
      case DefenseKind::median5: s.kernel = 5; break;
      default: break;
    }
    return s;
  }

  static DefenseSpec from_label(const std::string & label)
  {
    for (auto k : {DefenseKind::none, DefenseKind::gaussian3, DefenseKind::gaussian5,
                   DefenseKind::median3, DefenseKind::median5, DefenseKind::bilateral,
                   DefenseKind::jpeg75}) {
      if (label == to_string(k)) {
        return of(k);
      }
    }
    throw ValidationError("unknown defense '" + label + "'");
  }

  bool is_none() const noexcept { return kind == DefenseKind::none; }
  std::string label() const { return to_string(kind); }

  void validate() const
  {
    switch (kind) {
      case DefenseKind::gaussian3:
      case DefenseKind::gaussian5:
      case DefenseKind::median3:
      case DefenseKind::median5:
        if (kernel < 1 || kernel % 2 == 0) {
          throw ValidationError("defense kernel size must be odd and positive");
        }
        break;
      case DefenseKind::bilateral:
        if (diameter < 1 || diameter % 2 == 0) {
          throw ValidationError("bilateral diameter must be odd and positive");
        }
        if (!(sigma_color > 0.0) || !(sigma_space > 0.0)) {
          throw ValidationError("bilateral sigmas must be positive");
        }
        break;
      case DefenseKind::jpeg75:
        if (quality < 1 || quality > 100) {
          throw ValidationError("jpeg quality must lie in [1, 100]");
        }
        break;
      case DefenseKind::none:
        break;
    }
  }

  friend bool operator==(const DefenseSpec &, const DefenseSpec &) = default;
};

/// The six preprocessing defenses evaluated against perturbed frames.
inline std::vector<DefenseSpec> standard_defenses()
{
  return {
    DefenseSpec::of(DefenseKind::bilateral), DefenseSpec::of(DefenseKind::gaussian3),
    DefenseSpec::of(DefenseKind::gaussian5), DefenseSpec::of(DefenseKind::jpeg75),
    DefenseSpec::of(DefenseKind::median3), DefenseSpec::of(DefenseKind::median5)};
}

/// Result row for one (clip, condition, defense, ablation arm) trial.
struct EvalRecord
{
  std::string clip_id;
  PerturbationSpec condition;
  DefenseSpec defense;
  bool with_coc = true;
  double ade_m = 0.0;
  double fde_m = 0.0;
  double delta_ade_m = 0.0;
  double l2_deviation_m = 0.0;
  std::string coc_clean;
  std::string coc_perturbed;
  bool coc_changed = false;
  double word_similarity = 1.0;
  double energy = 0.0;  // mean |perturbed - clean| intensity fed to the model
  double latency_ms = 0.0;
  std::uint64_t seed = 42;
  std::optional<Trajectory> trajectory;  // predicted waypoints

  friend bool operator==(const EvalRecord &, const EvalRecord &) = default;
};

}  // namespace cocstress

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

// Procedural synthetic clips for tests, demos and the mock campaign. Scenes
// are small road renderings; ground-truth trajectories follow the scenario
// category so the clean explanation and the motion agree.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "cocstress/data_model.hpp"
#include "cocstress/image.hpp"
#include "cocstress/rng.hpp"
#include "cocstress/types.hpp"

namespace cocstress
{

struct FixtureOptions
{
  int width = 96;
  int height = 64;
  int timesteps = 2;
  std::vector<std::string> views{"front", "left"};
  int history_states = 10;
};

namespace detail
{

struct SceneCoc
{
  const char * category;
  std::array<const char *, 3> variants;
};

inline const std::array<SceneCoc, 8> & scene_cocs()
{
  static const std::array<SceneCoc, 8> table = {{
    {"Follow_Vehicle",
     {"Keep distance to the lead vehicle because it is directly ahead",
      "Follow the lead vehicle since it is moving slowly in the same lane",
      "Slow down to keep a safe gap behind the lead car"}},
    {"Intersection_Navigation",
     {"Proceed through the intersection since the path is clear",
      "Yield at the junction because cross traffic is approaching",
      "Slow down while crossing the intersection to watch for pedestrians"}},
    {"Stop_Signal",
     {"Stop because the traffic light is red", "Stop at the stop line since the signal is red",
      "Brake to stop for the stop sign ahead"}},
    {"Lane_Keeping",
     {"Keep lane since the road ahead is clear",
      "Continue straight and stay in lane as no agent requires attention",
      "Keep lane at a steady speed on the open road"}},
    {"Passing",
     {"Pass the slow truck on the left because the adjacent lane is free",
      "Overtake the cyclist with a wide berth since oncoming traffic is clear",
      "Accelerate to pass the parked car blocking the lane"}},
    {"Turn_Left",
     {"Turn left at the intersection because the route goes left",
      "Slow down and turn left after the oncoming car passes",
      "Yield to oncoming traffic before the left turn"}},
    {"Turn_Right",
     {"Turn right at the intersection to follow the route",
      "Slow down and turn right while yielding to the pedestrian",
      "Yield to the cyclist before the right turn"}},
    {"Other",
     {"Nudge around the construction cones while keeping speed low",
      "Drive cautiously through the parking area", "Reverse slowly out of the driveway"}},
  }};
  return table;
}

struct Canvas
{
  Image img;

  void put(int x, int y, std::array<int, 3> c)
  {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = static_cast<std::uint8_t>(std::clamp(c[ch], 0, 255));
  }

  void rect(int x0, int y0, int x1, int y1, std::array<int, 3> c)
  {
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) put(x, y, c);
  }

  void disc(int cx, int cy, int r, std::array<int, 3> c)
  {
    for (int y = cy - r; y <= cy + r; ++y)
      for (int x = cx - r; x <= cx + r; ++x)
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) put(x, y, c);
  }
};

inline Image render_scene(
  int category, std::uint64_t key, int timestep, int view, const FixtureOptions & opt)
{
  CounterRng rng(key);
  const int w = opt.width;
  const int h = opt.height;
  Canvas cv{Image(w, h)};
  const int horizon = h / 3;
  const int tint = static_cast<int>(rng.below(30));
  const int vx = w / 2 + (view == 0 ? 0 : w / 5);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (y < horizon) {
        cv.put(x, y, {100 + tint + y, 150 + y, 215 - y});
        continue;
      }
      const double depth = static_cast<double>(y - horizon) / static_cast<double>(h - horizon);
      const double half = 4.0 + depth * w * 0.45;
      const bool road = std::abs(x - vx) <= half;
      if (road) {
        cv.put(x, y, {92, 92, 96});
      } else {
        cv.put(x, y, {60 + tint, 120, 55});
      }
    }
  }
  // dashed centre marking, shifted with time to suggest motion
  for (int y = horizon + 2; y < h; ++y) {
    if (((y + timestep * 3) / 4) % 2 == 0) cv.put(vx, y, {235, 235, 225});
  }
  const int shift = timestep * 2;
  switch (category) {
    case 0:  // lead vehicle
      cv.rect(vx - 7, h / 2 - shift, vx + 7, h / 2 + 8 - shift, {150, 30, 35});
      break;
    case 1:  // crossing road
      cv.rect(0, horizon + 8, w, horizon + 14, {88, 88, 92});
      break;
    case 2:  // signal pole with red lamp
      cv.rect(vx + 20, horizon - 12, vx + 22, horizon + 10, {40, 40, 40});
      cv.disc(vx + 21, horizon - 14, 3, {230, 30, 30});
      break;
    case 4:  // slow truck to pass
      cv.rect(vx - 4 + shift, h / 2 - 4, vx + 12 + shift, h / 2 + 10, {200, 200, 210});
      break;
    case 5:
    case 6:  // curve arrow
      cv.rect(vx - 2, h - 16, vx + 2, h - 6, {240, 240, 240});
      cv.rect(category == 5 ? vx - 10 : vx, h - 16, category == 5 ? vx : vx + 10, h - 12, {240, 240, 240});
      break;
    case 7:  // cones
      for (int i = 0; i < 4; ++i) cv.disc(vx - 12 + 8 * i, h - 12 - i * 3, 2, {250, 130, 20});
      break;
    default: break;
  }
  // light sensor grain so flat regions are not perfectly uniform
  for (auto & v : cv.img.data) {
    const int g = static_cast<int>(rng.below(7)) - 3;
    v = static_cast<std::uint8_t>(std::clamp(int(v) + g, 0, 255));
  }
  return cv.img;
}

inline Trajectory scene_trajectory(int category, double v, double param)
{
  Trajectory::Points pts;
  for (std::size_t i = 0; i < kWaypointCount; ++i) {
    const double t = static_cast<double>(i + 1) * kWaypointDt;
    Vec2 p;
    switch (category) {
      case 0: p = {v * t - 0.4 * t * t, 0.0}; break;  // follow: gentle braking
      case 1: p = {0.7 * v * t, 0.0}; break;
      case 2: {  // stop with constant deceleration
        const double a = v / param;
        const double tt = std::min(t, param);
        p = {v * tt - 0.5 * a * tt * tt, 0.0};
        break;
      }
      case 3: p = {v * t, 0.002 * v * t * v * t}; break;
      case 4: {  // lane change of 3.5 m, smoothstep over the horizon
        const double s = t / (kWaypointCount * kWaypointDt);
        p = {v * t, 3.5 * s * s * (3.0 - 2.0 * s)};
        break;
      }
      case 5:
      case 6: {  // arc of radius param
        const double w = v / param * (category == 5 ? 1.0 : -1.0);
        p = {param * std::sin(std::abs(w) * t), (1.0 - std::cos(w * t)) * param * (w > 0 ? 1.0 : -1.0)};
        break;
      }
      default: p = {0.4 * v * t, 0.05 * t * t}; break;
    }
    pts[i] = p;
  }
  return Trajectory(pts);
}

}  // namespace detail

/// Writes `n` synthetic clips (PPM frames plus manifest.json) into `out_dir`
/// and returns the manifest. Output depends only on (n, seed, options).
inline Manifest generate_fixture_clips(
  std::size_t n, std::uint64_t seed, const std::filesystem::path & out_dir, const FixtureOptions & opt = {})
{
  std::filesystem::create_directories(out_dir / "frames");
  Manifest m;
  m.directory = out_dir;
  const auto & table = detail::scene_cocs();
  for (std::size_t i = 0; i < n; ++i) {
    const int category = static_cast<int>(i % table.size());
    const auto variant = (i / table.size()) % 3;
    Clip clip;
    clip.id = fmt::format("clip_{:04d}", i);
    const auto key = KeyBuilder{}.add(seed).add("fixture").add(clip.id).finish();
    CounterRng rng(key);
    const double v = rng.uniform(6.0, 14.0);
    const double param = category == 2 ? rng.uniform(3.0, 6.0) : rng.uniform(15.0, 30.0);

    for (int s = 0; s < opt.history_states; ++s) {
      const double t = -kWaypointDt * static_cast<double>(opt.history_states - 1 - s);
      clip.ego_history.push_back({t, {v * t, 0.0}, {v, 0.0}});
    }
    clip.gt_trajectory = detail::scene_trajectory(category, v, param);
    clip.clean_coc = table[category].variants[variant];

    for (int ts = 0; ts < opt.timesteps; ++ts) {
      for (std::size_t vi = 0; vi < opt.views.size(); ++vi) {
        FrameRef ref;
        ref.timestep = ts;
        ref.view = opt.views[vi];
        ref.path = fmt::format("frames/{}_t{}_{}.ppm", clip.id, ts, ref.view);
        const auto fkey = KeyBuilder{}.add(key).add(std::int64_t{ts}).add(ref.view).finish();
        write_ppm(detail::render_scene(category, fkey, ts, static_cast<int>(vi), opt), (out_dir / ref.path).string());
        clip.frames.push_back(std::move(ref));
      }
    }
    m.clips.push_back(std::move(clip));
  }
  write_manifest(m.clips, out_dir / "manifest.json");
  return m;
}

}  // namespace cocstress

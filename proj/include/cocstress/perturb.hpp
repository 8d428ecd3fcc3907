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

// Sensor corruption kernels: additive Gaussian noise, photometric scaling
// and uniform-transmittance fog. All kernels are pure functions.

#include <array>
#include <cmath>
#include <cstdlib>
#include <span>
#include <string>
#include <vector>

#include "cocstress/errors.hpp"
#include "cocstress/image.hpp"
#include "cocstress/rng.hpp"
#include "cocstress/types.hpp"

namespace cocstress
{

using Rgb = std::array<double, 3>;

struct FogOptions
{
  Rgb airlight{240.0, 240.0, 240.0};
  // Optional linear depth proxy: the blend weight falls from alpha at the top
  // row to alpha * near_fraction at the bottom row.
  bool depth_proxy = false;
  double near_fraction = 0.5;
};

/// out = round(in + n), n ~ N(0, sigma^2) i.i.d. per pixel and channel.
/// Element i draws from Philox block i/2 under the seed's stream key.
inline Image gaussian_noise(const Image & img, double sigma, const SeedDerivation & seed)
{
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw ValidationError("noise sigma must be finite and >= 0");
  }
  if (sigma == 0.0) {
    return img;
  }
  const std::uint64_t key = seed.stream_key();
  Image out = img;
  const std::size_t n = img.data.size();
  for (std::size_t i = 0; i < n; i += 2) {
    const auto z = normal_pair(key, i / 2);
    out.data[i] = to_pixel(img.data[i] + sigma * z[0]);
    if (i + 1 < n) {
      out.data[i + 1] = to_pixel(img.data[i + 1] + sigma * z[1]);
    }
  }
  return out;
}

/// out = round(in * factor), per channel.
inline Image photometric_scale(const Image & img, double factor)
{
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw ValidationError("brightness factor must be finite and > 0");
  }
  Image out = img;
  for (auto & v : out.data) {
    v = to_pixel(v * factor);
  }
  return out;
}

/// out = (1 - alpha) * in + alpha * airlight.
inline Image fog_blend(const Image & img, double alpha, const FogOptions & opts = {})
{
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ValidationError("fog alpha must lie in [0, 1]");
  }
  if (alpha == 0.0) {
    return img;
  }
  Image out = img;
  for (int y = 0; y < img.height; ++y) {
    double a = alpha;
    if (opts.depth_proxy && img.height > 1) {
      const double far = 1.0 - static_cast<double>(y) / (img.height - 1);  // 1 at top row
      a = alpha * (opts.near_fraction + (1.0 - opts.near_fraction) * far);
    }
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < Image::channels; ++c) {
        const auto idx = img.index(x, y, c);
        out.data[idx] = to_pixel((1.0 - a) * img.data[idx] + a * opts.airlight[c]);
      }
    }
  }
  return out;
}

inline Image fog_blend(const Image & img, double alpha, const Rgb & airlight)
{
  FogOptions o;
  o.airlight = airlight;
  return fog_blend(img, alpha, o);
}

inline Image apply_perturbation(
  const Image & img, const PerturbationSpec & spec, const SeedDerivation & seed,
  const FogOptions & fog = {})
{
  spec.validate();
  switch (spec.kind) {
    case PerturbationKind::clean: return img;
    case PerturbationKind::noise: return gaussian_noise(img, spec.sigma, seed);
    case PerturbationKind::dark:
    case PerturbationKind::bright: return photometric_scale(img, spec.brightness_factor);
    case PerturbationKind::fog_light:
    case PerturbationKind::fog_heavy: return fog_blend(img, spec.alpha, fog);
  }
  throw ValidationError("unknown perturbation kind");
}

/// Perturbs every frame of a clip. All camera views of one timestep share a
/// seed, so the corruption is applied synchronously across views.
inline std::vector<Image> perturb_frames(
  std::span<const Image> frames, std::span<const FrameRef> refs, const PerturbationSpec & spec,
  std::uint64_t campaign_seed, const std::string & clip_id, const FogOptions & fog = {})
{
  if (frames.size() != refs.size()) {
    throw ValidationError("frame/reference count mismatch");
  }
  std::vector<Image> out;
  out.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const SeedDerivation seed{campaign_seed, clip_id, refs[i].timestep, spec.label()};
    out.push_back(apply_perturbation(frames[i], spec, seed, fog));
  }
  return out;
}

/// Mean absolute per-channel intensity difference, in [0, 255].
inline double perturbation_energy(const Image & clean, const Image & perturbed)
{
  if (!clean.same_shape(perturbed) || clean.data.size() != perturbed.data.size()) {
    throw ValidationError("perturbation_energy: image dimensions differ");
  }
  if (clean.data.empty()) {
    return 0.0;
  }
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < clean.data.size(); ++i) {
    sum += static_cast<std::uint64_t>(std::abs(int(clean.data[i]) - int(perturbed.data[i])));
  }
  return static_cast<double>(sum) / static_cast<double>(clean.data.size());
}

/// Mean energy over matched frame lists (0 when empty).
inline double mean_perturbation_energy(std::span<const Image> clean, std::span<const Image> perturbed)
{
  if (clean.size() != perturbed.size()) {
    throw ValidationError("perturbation_energy: frame count mismatch");
  }
  if (clean.empty()) {
    return 0.0;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    sum += perturbation_energy(clean[i], perturbed[i]);
  }
  return sum / static_cast<double>(clean.size());
}

}  // namespace cocstress

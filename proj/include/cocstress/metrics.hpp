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

// Trajectory displacement metrics and Chain-of-Causation text comparison.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cocstress/types.hpp"

namespace cocstress
{

/// Explanation text with its two derived forms:
///  - normalized: whitespace runs collapsed to one space, ends trimmed,
///    case preserved (used for exact-match change detection);
///  - tokens: normalized text with ASCII punctuation removed, lowercased,
///    split on spaces (used for word-set similarity and lexicon lookups).
class CoCText
{
public:
  CoCText() = default;
  explicit CoCText(std::string raw) : raw_(std::move(raw))
  {
    normalized_ = normalize_whitespace(raw_);
    std::string stripped;
    stripped.reserve(normalized_.size());
    for (const char ch : normalized_) {
      const auto u = static_cast<unsigned char>(ch);
      if (std::ispunct(u)) {
        continue;
      }
      stripped += static_cast<char>(std::tolower(u));
    }
    std::size_t pos = 0;
    while (pos < stripped.size()) {
      const auto next = stripped.find(' ', pos);
      const auto end = next == std::string::npos ? stripped.size() : next;
      if (end > pos) {
        tokens_.emplace_back(stripped.substr(pos, end - pos));
      }
      pos = end + 1;
    }
  }

  const std::string & raw() const noexcept { return raw_; }
  const std::string & normalized() const noexcept { return normalized_; }
  const std::vector<std::string> & tokens() const noexcept { return tokens_; }

  std::set<std::string> token_set() const { return {tokens_.begin(), tokens_.end()}; }

  static std::string normalize_whitespace(std::string_view s)
  {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (const char ch : s) {
      if (std::isspace(static_cast<unsigned char>(ch))) {
        pending_space = !out.empty();
        continue;
      }
      if (pending_space) {
        out += ' ';
        pending_space = false;
      }
      out += ch;
    }
    return out;
  }

private:
  std::string raw_;
  std::string normalized_;
  std::vector<std::string> tokens_;
};

/// Average displacement error: mean per-waypoint Euclidean distance.
inline double ade(const Trajectory & pred, const Trajectory & gt)
{
  double sum = 0.0;
  for (std::size_t t = 0; t < kWaypointCount; ++t) {
    sum += (pred[t] - gt[t]).norm();
  }
  return sum / static_cast<double>(kWaypointCount);
}

/// Final displacement error: distance between the last waypoints.
inline double fde(const Trajectory & pred, const Trajectory & gt)
{
  return (pred[kWaypointCount - 1] - gt[kWaypointCount - 1]).norm();
}

/// Flattened Euclidean norm over all 64 waypoint differences,
/// sqrt(sum_t |a_t - b_t|^2). Not a per-waypoint mean.
inline double l2_deviation(const Trajectory & a, const Trajectory & b)
{
  double sum = 0.0;
  for (std::size_t t = 0; t < kWaypointCount; ++t) {
    sum += (a[t] - b[t]).squared_norm();
  }
  return std::sqrt(sum);
}

/// True iff the whitespace-normalized texts differ (case-sensitive).
inline bool coc_changed(const CoCText & clean, const CoCText & perturbed)
{
  return clean.normalized() != perturbed.normalized();
}

inline bool coc_changed(std::string_view clean, std::string_view perturbed)
{
  return CoCText::normalize_whitespace(clean) != CoCText::normalize_whitespace(perturbed);
}

/// |A n B| / |A u B| over token sets; two empty texts count as identical.
inline double jaccard_similarity(const CoCText & a, const CoCText & b)
{
  const auto sa = a.token_set();
  const auto sb = b.token_set();
  if (sa.empty() && sb.empty()) {
    return 1.0;
  }
  std::size_t inter = 0;
  for (const auto & w : sa) {
    inter += sb.count(w);
  }
  const std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline double delta_ade(double attacked_ade, double clean_ade) { return attacked_ade - clean_ade; }

/// Fractional error reduction of `model` relative to `reference`.
inline double relative_improvement(double reference, double model)
{
  return (reference - model) / reference;
}

}  // namespace cocstress

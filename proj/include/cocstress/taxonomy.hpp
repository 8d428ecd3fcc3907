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

// Scenario categories from clean explanations and failure-mode labels for
// flipped explanation pairs. Both are keyword methods over configurable
// lexicons (see configs/taxonomy.json).

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cocstress/errors.hpp"
#include "cocstress/metrics.hpp"
#include "cocstress/types.hpp"

namespace cocstress
{

inline const std::vector<std::string> & scenario_categories()
{
  static const std::vector<std::string> cats = {
    "Follow_Vehicle", "Intersection_Navigation", "Stop_Signal", "Lane_Keeping",
    "Passing",        "Turn_Left",               "Turn_Right",  "Other"};
  return cats;
}

inline constexpr const char * kOtherCategory = "Other";

struct CategoryRule
{
  std::string category;
  std::vector<std::string> keywords;  // phrases, matched on whole tokens
  int priority = 0;                   // lower wins

  friend bool operator==(const CategoryRule &, const CategoryRule &) = default;
};

struct Lexicon
{
  std::set<std::string> action_words;
  std::set<std::string> object_words;
  // Skipped when looking for the complement of an action word.
  std::set<std::string> function_words;

  friend bool operator==(const Lexicon &, const Lexicon &) = default;
};

struct TaxonomyConfig
{
  std::vector<CategoryRule> rules;  // sorted by priority
  Lexicon lexicon;

  friend bool operator==(const TaxonomyConfig &, const TaxonomyConfig &) = default;
};

inline TaxonomyConfig default_taxonomy()
{
  TaxonomyConfig cfg;
  // Signal and manoeuvre cues outrank generic lane wording; Follow_Vehicle sits above Lane_Keeping.
  cfg.rules = {
    {"Stop_Signal", {"traffic light", "red light", "stop sign", "stop line", "signal"}, 1},
    {"Turn_Left", {"turn left", "left turn", "turning left"}, 2},
    {"Turn_Right", {"turn right", "right turn", "turning right"}, 3},
    {"Passing", {"pass", "passing", "overtake", "overtaking"}, 4},
    {"Follow_Vehicle",
     {"lead vehicle", "lead car", "follow", "following", "keep distance", "vehicle ahead", "car ahead"},
     5},
    {"Intersection_Navigation", {"intersection", "junction", "crosswalk", "roundabout"}, 6},
    {"Lane_Keeping", {"keep lane", "lane keeping", "stay in lane", "lane", "continue straight"}, 7},
  };
  cfg.lexicon.action_words = {"stop",  "slow", "keep",   "turn",  "accelerate", "yield",
                              "pass",  "merge", "follow", "brake", "proceed"};
  cfg.lexicon.object_words = {"vehicle", "car",  "pedestrian",   "light", "sign",
                              "lane",    "intersection", "agent", "truck", "cyclist"};
  cfg.lexicon.function_words = {"the", "a",  "an", "to",  "for", "of", "at",  "in",  "on",   "by",
                                "and", "as", "is", "it", "its", "be", "because", "since", "with",
                                "from", "this", "that"};
  return cfg;
}

inline TaxonomyConfig taxonomy_from_json(const nlohmann::json & j)
{
  TaxonomyConfig cfg;
  try {
    for (const auto & r : j.at("rules")) {
      CategoryRule rule;
      rule.category = r.at("category").get<std::string>();
      rule.keywords = r.at("keywords").get<std::vector<std::string>>();
      rule.priority = r.at("priority").get<int>();
      if (rule.category == kOtherCategory) {
        throw ConfigError("'Other' is the fallback category and takes no keywords");
      }
      cfg.rules.push_back(std::move(rule));
    }
    const auto & lex = j.at("lexicon");
    for (const auto & w : lex.at("action_words")) cfg.lexicon.action_words.insert(w.get<std::string>());
    for (const auto & w : lex.at("object_words")) cfg.lexicon.object_words.insert(w.get<std::string>());
    if (lex.contains("function_words")) {
      for (const auto & w : lex.at("function_words")) cfg.lexicon.function_words.insert(w.get<std::string>());
    }
  } catch (const nlohmann::json::exception & e) {
    throw ConfigError(std::string("taxonomy config: ") + e.what());
  }
  std::stable_sort(cfg.rules.begin(), cfg.rules.end(), [](const auto & a, const auto & b) {
    return a.priority < b.priority;
  });
  for (std::size_t i = 1; i < cfg.rules.size(); ++i) {
    if (cfg.rules[i].priority == cfg.rules[i - 1].priority) {
      throw ConfigError("taxonomy config: duplicate rule priority " + std::to_string(cfg.rules[i].priority));
    }
  }
  return cfg;
}

inline TaxonomyConfig load_taxonomy(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read taxonomy config: " + path.string());
  }
  try {
    return taxonomy_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error & e) {
    throw ConfigError("taxonomy config " + path.string() + ": " + e.what());
  }
}

namespace detail
{

inline bool contains_phrase(const std::vector<std::string> & tokens, const std::vector<std::string> & phrase)
{
  if (phrase.empty() || phrase.size() > tokens.size()) return false;
  return std::search(tokens.begin(), tokens.end(), phrase.begin(), phrase.end()) != tokens.end();
}

}  // namespace detail

/// First rule (by priority) with a keyword phrase present wins; else Other.
/// Matching is on the lowercased, punctuation-free token sequence.
inline std::string classify_scenario(const CoCText & clean_coc, const TaxonomyConfig & cfg)
{
  for (const auto & rule : cfg.rules) {
    for (const auto & kw : rule.keywords) {
      if (detail::contains_phrase(clean_coc.tokens(), CoCText(kw).tokens())) {
        return rule.category;
      }
    }
  }
  return kOtherCategory;
}

inline std::string classify_scenario(const std::string & clean_coc)
{
  static const TaxonomyConfig cfg = default_taxonomy();
  return classify_scenario(CoCText(clean_coc), cfg);
}

enum class FailureLabel { action_word_change, object_reference_change, shifted_focus, paraphrase_only };

inline const char * to_string(FailureLabel l)
{
  switch (l) {
    case FailureLabel::action_word_change: return "action_word_change";
    case FailureLabel::object_reference_change: return "object_reference_change";
    case FailureLabel::shifted_focus: return "shifted_focus";
    case FailureLabel::paraphrase_only: return "paraphrase_only";
  }
  return "?";
}

struct FailureMode
{
  std::set<FailureLabel> labels;

  bool has(FailureLabel l) const { return labels.count(l) > 0; }
};

/// Each action word paired with its complement: the next token that is not a
/// function word ("keep distance" vs "keep lane"). Empty complement at the end.
inline std::set<std::pair<std::string, std::string>> action_signature(
  const CoCText & text, const Lexicon & lex)
{
  std::set<std::pair<std::string, std::string>> sig;
  const auto & tok = text.tokens();
  for (std::size_t i = 0; i < tok.size(); ++i) {
    if (!lex.action_words.count(tok[i])) continue;
    std::string complement;
    for (std::size_t j = i + 1; j < tok.size(); ++j) {
      if (!lex.function_words.count(tok[j])) {
        complement = tok[j];
        break;
      }
    }
    sig.emplace(tok[i], complement);
  }
  return sig;
}

inline std::set<std::string> object_references(const CoCText & text, const Lexicon & lex)
{
  std::set<std::string> out;
  for (const auto & t : text.tokens()) {
    if (lex.object_words.count(t)) out.insert(t);
  }
  return out;
}

/// Labels a flipped explanation pair. Throws if the pair is unchanged.
inline FailureMode classify_failure(const CoCText & clean, const CoCText & perturbed, const Lexicon & lex)
{
  if (!coc_changed(clean, perturbed)) {
    throw ValidationError("classify_failure called on an unchanged explanation pair");
  }
  FailureMode mode;
  const bool action = action_signature(clean, lex) != action_signature(perturbed, lex);
  const bool object = object_references(clean, lex) != object_references(perturbed, lex);
  if (action) mode.labels.insert(FailureLabel::action_word_change);
  if (object) mode.labels.insert(FailureLabel::object_reference_change);
  if (action && object) mode.labels.insert(FailureLabel::shifted_focus);
  if (!action && !object) mode.labels.insert(FailureLabel::paraphrase_only);
  return mode;
}

struct CrossAttackConsistency
{
  std::size_t n_clips = 0;
  std::vector<std::size_t> histogram;  // histogram[c] = clips failing exactly c attacks

  double fraction_at_least(std::size_t k) const
  {
    if (n_clips == 0) return 0.0;
    std::size_t cnt = 0;
    for (std::size_t c = k; c < histogram.size(); ++c) cnt += histogram[c];
    return static_cast<double>(cnt) / static_cast<double>(n_clips);
  }
};

/// Counts, per clip, the distinct attacks whose L2 deviation exceeds the
/// threshold. Clean and defended records are ignored.
inline CrossAttackConsistency cross_attack_consistency(
  std::span<const EvalRecord> records, double threshold_m = 5.0)
{
  std::map<std::string, std::set<std::string>> failing;
  for (const auto & r : records) {
    if (r.condition.is_clean() || !r.defense.is_none()) continue;
    auto & s = failing[r.clip_id];
    if (r.l2_deviation_m > threshold_m) s.insert(r.condition.label());
  }
  CrossAttackConsistency out;
  out.n_clips = failing.size();
  for (const auto & [clip, attacks] : failing) {
    if (out.histogram.size() <= attacks.size()) out.histogram.resize(attacks.size() + 1, 0);
    ++out.histogram[attacks.size()];
  }
  return out;
}

}  // namespace cocstress

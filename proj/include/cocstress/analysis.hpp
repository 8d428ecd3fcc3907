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

// Campaign analysis: turns a record file into the summary tables (attack
// ranking, dose-response, CoC partition, monitor, ablation, defenses,
// severity buckets, scenario heatmap, baseline, failure modes). A cell that
// cannot be computed is left empty and the reason, with its counts, is
// appended to `notes`.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "cocstress/campaign.hpp"
#include "cocstress/data_model.hpp"
#include "cocstress/modelio.hpp"
#include "cocstress/monitor.hpp"
#include "cocstress/stats.hpp"
#include "cocstress/taxonomy.hpp"

namespace cocstress
{

struct AnalysisOptions
{
  double unsafe_threshold_m = kUnsafeThresholdM;
  double mild_below_m = 10.0;
  double severe_above_m = 30.0;
  std::uint64_t seed = 42;
  std::size_t bootstrap_resamples = 10000;
  std::vector<std::string> attack_order;   // config order; unknown labels go last
  std::vector<std::string> defense_order;
  TaxonomyConfig taxonomy = default_taxonomy();

  static AnalysisOptions from(const CampaignConfig & c)
  {
    AnalysisOptions o;
    o.unsafe_threshold_m = c.unsafe_threshold_m;
    o.mild_below_m = c.mild_below_m;
    o.severe_above_m = c.severe_above_m;
    o.seed = c.seed;
    o.bootstrap_resamples = c.bootstrap_resamples;
    for (const auto & p : c.perturbations) o.attack_order.push_back(p.label());
    for (const auto & d : c.defenses) o.defense_order.push_back(d.label());
    if (c.taxonomy) o.taxonomy = load_taxonomy(*c.taxonomy);
    return o;
  }
};

struct AttackRow
{
  std::string attack;
  std::size_t n = 0;
  double mean_ade_m = 0.0;
  double mean_delta_ade_m = 0.0;
  double mean_l2_m = 0.0;
  std::optional<double> coc_change_pct;  // absent for the without-CoC arm
  double unsafe_pct = 0.0;               // l2_deviation > threshold
  std::optional<double> p_value;
  std::optional<double> p_bonferroni;
  std::optional<double> d_z;
  std::optional<double> r_pb;
  std::optional<double> l2_ratio;  // mean L2 changed / unchanged
  std::optional<double> mean_sigma;
};

struct DosePoint
{
  double sigma = 0.0;
  std::size_t n = 0;
  double mean_ade_m = 0.0;
  std::optional<stats::Interval> ci;
};

struct DoseResponse
{
  std::vector<DosePoint> points;
  std::optional<stats::FitResult> ols;
  std::vector<stats::FitResult> fits;
  std::vector<stats::AicEntry> aic;
};

struct PartitionStats
{
  std::size_t n_changed = 0;
  std::size_t n_unchanged = 0;
  std::optional<double> mean_changed, mean_unchanged, median_changed, median_unchanged;
  std::optional<double> ratio;    // mean changed / mean unchanged
  std::optional<stats::TestResult> welch;  // unchanged minus changed
  std::optional<double> cohens_d;          // changed vs unchanged
  std::optional<double> r_pb;
  std::optional<double> attack_level_r;    // CoC change rate vs mean L2 across attacks
};

struct AblationRow
{
  std::string attack;
  std::size_t n = 0;
  double mean_with_m = 0.0;
  double mean_without_m = 0.0;
  double delta_m = 0.0;  // without - with
  std::optional<double> improvement_pct;
  std::optional<double> d_z;
  std::optional<double> p_t;
  std::optional<double> p_wilcoxon;
};

struct AblationTable
{
  std::vector<AblationRow> rows;
  std::optional<double> mean_delta_m;
  std::optional<double> mean_improvement_pct;
  std::optional<double> mean_d_z;
  std::optional<double> slope_with;
  std::optional<double> slope_without;
};

struct DefenseRow
{
  std::string defense;
  std::map<std::string, double> mean_l2_by_attack;
  std::size_t n_pairs = 0;
  std::optional<double> avg_delta_m;  // defended - undefended, mean over attacks
  std::optional<double> p_value;
  std::optional<double> p_bonferroni;
  std::optional<double> d_z;
};

struct DefenseTable
{
  std::map<std::string, double> undefended_l2_by_attack;
  std::vector<DefenseRow> rows;
};

struct SeverityBucket
{
  std::string defense;
  std::string bucket;  // mild | middle | severe
  std::size_t n = 0;
  std::optional<double> mean_undefended_m;
  std::optional<double> mean_defended_m;
  std::optional<double> delta_m;
};

struct ScenarioCell
{
  std::string category;
  std::string attack;
  std::size_t n = 0;
  double mean_delta_ade_m = 0.0;
  std::optional<double> coc_change_pct;
};

struct BaselineComparison
{
  std::size_t n = 0;
  std::optional<double> mean_baseline_ade_m;
  std::optional<double> mean_model_ade_m;
  std::optional<double> improvement_pct;
  std::optional<stats::TestResult> test;  // baseline minus model
};

struct FailureModeRow
{
  std::string attack;  // "all" for the pooled row
  std::size_t n_changed = 0;
  std::map<std::string, std::size_t> counts;
};

struct CampaignSummary
{
  bool primary_with_coc = true;
  std::size_t n_records = 0;
  std::size_t n_clips = 0;
  std::optional<double> clean_mean_ade_m;
  std::vector<AttackRow> attacks;  // ascending mean ΔADE
  std::optional<DoseResponse> dose_response;
  PartitionStats partition;
  MonitorTable monitor;
  std::optional<AblationTable> ablation;
  std::optional<DefenseTable> defenses;
  std::vector<SeverityBucket> severity;
  std::vector<ScenarioCell> scenarios;
  std::map<std::string, std::size_t> category_counts;
  BaselineComparison baseline;
  std::vector<FailureModeRow> failure_modes;
  CrossAttackConsistency consistency;
  std::vector<std::string> notes;
};

namespace detail
{

template <class F>
auto try_stat(std::vector<std::string> & notes, const std::string & what, F && f) -> std::optional<decltype(f())>
{
  try {
    return f();
  } catch (const StatsError & e) {
    notes.push_back(what + ": absent (" + e.what() + ")");
    return std::nullopt;
  }
}

inline std::vector<std::string> ordered_labels(std::set<std::string> present, const std::vector<std::string> & order)
{
  std::vector<std::string> out;
  for (const auto & l : order) {
    if (present.erase(l)) out.push_back(l);
  }
  out.insert(out.end(), present.begin(), present.end());
  return out;
}

inline double pct(std::size_t k, std::size_t n) { return 100.0 * static_cast<double>(k) / static_cast<double>(n); }

}  // namespace detail

/// Fits OLS and the four dose-response families to the point means and
/// ranks the converged ones by AIC.
inline void fit_dose_response(DoseResponse & d, std::vector<std::string> & notes)
{
  std::vector<double> xs, ys;
  for (const auto & p : d.points) {
    xs.push_back(p.sigma);
    ys.push_back(p.mean_ade_m);
  }
  d.ols = detail::try_stat(notes, "dose-response OLS", [&] { return stats::ols_fit(xs, ys); });
  d.fits.clear();
  for (auto f : stats::kAllFamilies) {
    auto fit = detail::try_stat(notes, fmt::format("dose-response {} fit", stats::to_string(f)), [&] {
      return stats::fit_family(xs, ys, f);
    });
    if (fit) {
      if (!fit->converged) notes.push_back(fmt::format("dose-response {} fit excluded: {}", stats::to_string(f), fit->diagnostic));
      d.fits.push_back(*fit);
    }
  }
  d.aic = stats::aic_compare(d.fits);
}

/// Defense effect bucketed by the undefended L2 deviation of each matched
/// (clip, attack) pair. Buckets with no pairs carry n = 0 and no values.
inline std::vector<SeverityBucket> severity_conditioned_defense(
  std::span<const EvalRecord> undefended, std::span<const EvalRecord> defended, const std::string & defense_label,
  double mild_below_m = 10.0, double severe_above_m = 30.0)
{
  std::map<std::pair<std::string, std::string>, double> base;
  for (const auto & r : undefended) base[{r.clip_id, r.condition.label()}] = r.l2_deviation_m;
  struct Acc
  {
    std::vector<double> u, d;
  };
  std::map<std::string, Acc> acc;
  for (const auto & r : defended) {
    auto it = base.find({r.clip_id, r.condition.label()});
    if (it == base.end()) continue;
    const double u = it->second;
    const char * bucket = u < mild_below_m ? "mild" : (u > severe_above_m ? "severe" : "middle");
    acc[bucket].u.push_back(u);
    acc[bucket].d.push_back(r.l2_deviation_m);
  }
  std::vector<SeverityBucket> out;
  for (const char * name : {"mild", "middle", "severe"}) {
    SeverityBucket b;
    b.defense = defense_label;
    b.bucket = name;
    auto it = acc.find(name);
    if (it != acc.end() && !it->second.u.empty()) {
      b.n = it->second.u.size();
      b.mean_undefended_m = stats::mean(it->second.u);
      b.mean_defended_m = stats::mean(it->second.d);
      b.delta_m = *b.mean_defended_m - *b.mean_undefended_m;
    }
    out.push_back(b);
  }
  return out;
}

/// Computes the campaign summary. `clips` supplies ground truth and ego
/// history for the baseline and scenario categories; it may be empty, in
/// which case those sections are absent.
inline CampaignSummary analyze(
  const std::vector<EvalRecord> & input, const std::vector<Clip> & clips, const AnalysisOptions & opt = {})
{
  if (input.empty()) throw AnalysisError("no records to analyze");
  std::vector<EvalRecord> records = input;
  std::stable_sort(records.begin(), records.end(), [](const auto & a, const auto & b) { return a.clip_id < b.clip_id; });

  CampaignSummary s;
  auto & notes = s.notes;
  s.n_records = records.size();
  {
    std::set<std::string> ids;
    for (const auto & r : records) ids.insert(r.clip_id);
    s.n_clips = ids.size();
  }
  std::set<bool> arms;
  for (const auto & r : records) arms.insert(r.with_coc);
  s.primary_with_coc = arms.count(true) > 0;
  const bool primary = s.primary_with_coc;

  // Primary-arm views.
  std::map<std::string, const EvalRecord *> clean;  // clip -> clean record
  std::map<std::string, std::vector<const EvalRecord *>> by_attack;
  std::set<std::string> attack_set, defense_set;
  for (const auto & r : records) {
    if (r.with_coc != primary) continue;
    if (r.condition.is_clean()) {
      if (r.defense.is_none()) clean[r.clip_id] = &r;
      continue;
    }
    if (r.defense.is_none()) {
      by_attack[r.condition.label()].push_back(&r);
      attack_set.insert(r.condition.label());
    } else {
      defense_set.insert(r.defense.label());
    }
  }
  const auto attacks = detail::ordered_labels(attack_set, opt.attack_order);

  if (!clean.empty()) {
    std::vector<double> v;
    for (const auto & [id, r] : clean) v.push_back(r->ade_m);
    s.clean_mean_ade_m = stats::mean(v);
  }

  // ---- attack table
  for (const auto & a : attacks) {
    const auto & rs = by_attack[a];
    AttackRow row;
    row.attack = a;
    row.n = rs.size();
    std::vector<double> ade, dade, l2, l2c, l2u;
    std::vector<bool> changed;
    std::size_t n_changed = 0, n_unsafe = 0;
    for (const auto * r : rs) {
      ade.push_back(r->ade_m);
      dade.push_back(r->delta_ade_m);
      l2.push_back(r->l2_deviation_m);
      changed.push_back(r->coc_changed);
      (r->coc_changed ? l2c : l2u).push_back(r->l2_deviation_m);
      n_changed += r->coc_changed ? 1 : 0;
      n_unsafe += r->l2_deviation_m > opt.unsafe_threshold_m ? 1 : 0;
    }
    row.mean_ade_m = stats::mean(ade);
    row.mean_delta_ade_m = stats::mean(dade);
    row.mean_l2_m = stats::mean(l2);
    if (primary) row.coc_change_pct = detail::pct(n_changed, rs.size());
    row.unsafe_pct = detail::pct(n_unsafe, rs.size());
    if (auto t = detail::try_stat(notes, fmt::format("attack {} paired t (n={})", a, dade.size()), [&] {
          return stats::paired_t_test(dade);
        })) {
      row.p_value = t->p_value;
      row.d_z = t->effect_size;
    }
    if (primary) {
      row.r_pb = detail::try_stat(notes, fmt::format("attack {} r_pb (changed={}, n={})", a, n_changed, rs.size()), [&] {
        if (n_changed == 0 || n_changed == rs.size()) throw StatsError("one CoC group is empty");
        return stats::point_biserial(changed, l2);
      });
      if (!l2c.empty() && !l2u.empty() && stats::mean(l2u) > 0.0) {
        row.l2_ratio = stats::mean(l2c) / stats::mean(l2u);
      } else {
        notes.push_back(fmt::format("attack {} L2 ratio: absent (changed={}, unchanged={})", a, l2c.size(), l2u.size()));
      }
    }
    if (rs.front()->condition.kind == PerturbationKind::noise) row.mean_sigma = rs.front()->condition.sigma;
    s.attacks.push_back(std::move(row));
  }
  {
    std::vector<double> ps;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < s.attacks.size(); ++i) {
      if (s.attacks[i].p_value) {
        ps.push_back(*s.attacks[i].p_value);
        idx.push_back(i);
      }
    }
    const auto bf = stats::bonferroni(ps);
    for (std::size_t i = 0; i < idx.size(); ++i) s.attacks[idx[i]].p_bonferroni = bf.adjusted[i];
  }
  std::stable_sort(s.attacks.begin(), s.attacks.end(), [](const auto & a, const auto & b) {
    return a.mean_delta_ade_m < b.mean_delta_ade_m;
  });

  // ---- dose-response over the noise subset
  {
    std::map<double, std::vector<double>> by_sigma;
    for (const auto & a : attacks) {
      const auto & rs = by_attack[a];
      if (rs.front()->condition.kind != PerturbationKind::noise) continue;
      for (const auto * r : rs) by_sigma[r->condition.sigma].push_back(r->ade_m);
    }
    if (by_sigma.size() >= 3) {
      DoseResponse d;
      for (const auto & [sigma, v] : by_sigma) {
        DosePoint p;
        p.sigma = sigma;
        p.n = v.size();
        p.mean_ade_m = stats::mean(v);
        stats::BootstrapOptions bo;
        bo.resamples = opt.bootstrap_resamples;
        bo.seed = KeyBuilder{}.add(opt.seed).add("dose").add(std::int64_t{std::llround(sigma * 1000)}).finish();
        p.ci = detail::try_stat(notes, fmt::format("dose sigma={} CI (n={})", sigma, v.size()), [&] {
          return stats::bootstrap_ci(v, bo);
        });
        d.points.push_back(p);
      }
      fit_dose_response(d, notes);
      s.dose_response = std::move(d);
    } else {
      notes.push_back(fmt::format("dose-response: absent (distinct noise levels={})", by_sigma.size()));
    }
  }

  // ---- CoC partition, pooled over attacks (primary arm, no defense)
  if (primary) {
    std::vector<double> changed, unchanged, all_l2;
    std::vector<bool> flags;
    for (const auto & a : attacks) {
      for (const auto * r : by_attack[a]) {
        (r->coc_changed ? changed : unchanged).push_back(r->l2_deviation_m);
        all_l2.push_back(r->l2_deviation_m);
        flags.push_back(r->coc_changed);
      }
    }
    auto & p = s.partition;
    p.n_changed = changed.size();
    p.n_unchanged = unchanged.size();
    if (!changed.empty()) {
      p.mean_changed = stats::mean(changed);
      p.median_changed = stats::median(changed);
    }
    if (!unchanged.empty()) {
      p.mean_unchanged = stats::mean(unchanged);
      p.median_unchanged = stats::median(unchanged);
    }
    const auto counts = fmt::format("changed={}, unchanged={}", changed.size(), unchanged.size());
    if (p.mean_changed && p.mean_unchanged && *p.mean_unchanged > 0.0) {
      p.ratio = *p.mean_changed / *p.mean_unchanged;
    } else {
      notes.push_back("partition ratio: absent (" + counts + ")");
    }
    p.welch = detail::try_stat(notes, "partition Welch t (" + counts + ")", [&] {
      return stats::welch_t_test(unchanged, changed);
    });
    p.cohens_d = detail::try_stat(notes, "partition Cohen's d (" + counts + ")", [&] {
      return stats::cohens_d(unchanged, changed);
    });
    p.r_pb = detail::try_stat(notes, "partition r_pb (" + counts + ")", [&] {
      if (changed.empty() || unchanged.empty()) throw StatsError("one CoC group is empty");
      return stats::point_biserial(flags, all_l2);
    });
    std::vector<double> rate, mean_l2;
    for (const auto & row : s.attacks) {
      if (row.coc_change_pct) {
        rate.push_back(*row.coc_change_pct);
        mean_l2.push_back(row.mean_l2_m);
      }
    }
    p.attack_level_r = detail::try_stat(notes, fmt::format("attack-level correlation (attacks={})", rate.size()), [&] {
      return stats::pearson(rate, mean_l2);
    });
  } else {
    notes.push_back("partition: absent (no with-CoC records)");
  }

  // ---- monitor
  if (primary) {
    std::vector<EvalRecord> mrecs;
    for (const auto & a : attacks)
      for (const auto * r : by_attack[a]) mrecs.push_back(*r);
    s.monitor = monitor_report(std::move(mrecs), opt.unsafe_threshold_m, attacks);
  }

  // ---- ablation (needs both arms)
  if (arms.size() == 2) {
    AblationTable t;
    std::map<std::pair<std::string, std::string>, double> without;
    for (const auto & r : records) {
      if (!r.with_coc && r.defense.is_none()) without[{r.clip_id, r.condition.label()}] = r.ade_m;
    }
    std::vector<std::string> conds{"clean"};
    conds.insert(conds.end(), attacks.begin(), attacks.end());
    std::vector<double> deltas, imps, dzs;
    std::map<double, std::pair<std::vector<double>, std::vector<double>>> sigma_means;
    for (const auto & c : conds) {
      std::vector<double> w, wo;
      std::optional<double> sigma;
      for (const auto & r : records) {
        if (!r.with_coc || !r.defense.is_none() || r.condition.label() != c) continue;
        auto it = without.find({r.clip_id, c});
        if (it == without.end()) continue;
        w.push_back(r.ade_m);
        wo.push_back(it->second);
        if (r.condition.kind == PerturbationKind::noise) sigma = r.condition.sigma;
      }
      if (w.empty()) {
        notes.push_back("ablation " + c + ": absent (no matched pairs)");
        continue;
      }
      AblationRow row;
      row.attack = c;
      row.n = w.size();
      row.mean_with_m = stats::mean(w);
      row.mean_without_m = stats::mean(wo);
      row.delta_m = row.mean_without_m - row.mean_with_m;
      if (row.mean_without_m > 0.0) row.improvement_pct = 100.0 * row.delta_m / row.mean_without_m;
      std::vector<double> diff(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) diff[i] = wo[i] - w[i];
      if (auto tt = detail::try_stat(notes, fmt::format("ablation {} paired t (n={})", c, diff.size()), [&] {
            return stats::paired_t_test(diff);
          })) {
        row.p_t = tt->p_value;
        row.d_z = tt->effect_size;
      }
      row.p_wilcoxon = detail::try_stat(notes, fmt::format("ablation {} Wilcoxon (n={})", c, diff.size()), [&] {
        return stats::wilcoxon_signed_rank(diff).p_value;
      });
      if (sigma) {
        sigma_means[*sigma].first.push_back(row.mean_with_m);
        sigma_means[*sigma].second.push_back(row.mean_without_m);
      }
      deltas.push_back(row.delta_m);
      if (row.improvement_pct) imps.push_back(*row.improvement_pct);
      if (row.d_z) dzs.push_back(*row.d_z);
      t.rows.push_back(std::move(row));
    }
    if (!deltas.empty()) t.mean_delta_m = stats::mean(deltas);
    if (!imps.empty()) t.mean_improvement_pct = stats::mean(imps);
    if (!dzs.empty()) t.mean_d_z = stats::mean(dzs);
    if (sigma_means.size() >= 3) {
      std::vector<double> xs, yw, yo;
      for (const auto & [sg, v] : sigma_means) {
        xs.push_back(sg);
        yw.push_back(v.first.front());
        yo.push_back(v.second.front());
      }
      if (auto f = detail::try_stat(notes, "ablation slope with CoC", [&] { return stats::ols_fit(xs, yw); })) {
        t.slope_with = f->params[1];
      }
      if (auto f = detail::try_stat(notes, "ablation slope without CoC", [&] { return stats::ols_fit(xs, yo); })) {
        t.slope_without = f->params[1];
      }
    }
    s.ablation = std::move(t);
  }

  // ---- defenses and severity buckets
  if (!defense_set.empty()) {
    DefenseTable t;
    std::vector<EvalRecord> undefended;
    for (const auto & a : attacks) {
      std::vector<double> v;
      for (const auto * r : by_attack[a]) {
        v.push_back(r->l2_deviation_m);
        undefended.push_back(*r);
      }
      t.undefended_l2_by_attack[a] = stats::mean(v);
    }
    std::map<std::pair<std::string, std::string>, double> base;
    for (const auto & r : undefended) base[{r.clip_id, r.condition.label()}] = r.l2_deviation_m;

    const auto defenses = detail::ordered_labels(defense_set, opt.defense_order);
    std::vector<double> ps;
    std::vector<std::size_t> idx;
    for (const auto & dl : defenses) {
      DefenseRow row;
      row.defense = dl;
      std::vector<EvalRecord> defended;
      std::map<std::string, std::vector<double>> per_attack;
      std::map<std::string, std::vector<double>> per_attack_delta;
      std::vector<double> diffs;
      for (const auto & r : records) {
        if (r.with_coc != primary || r.condition.is_clean() || r.defense.label() != dl) continue;
        defended.push_back(r);
        per_attack[r.condition.label()].push_back(r.l2_deviation_m);
        auto it = base.find({r.clip_id, r.condition.label()});
        if (it != base.end()) {
          diffs.push_back(r.l2_deviation_m - it->second);
          per_attack_delta[r.condition.label()].push_back(r.l2_deviation_m - it->second);
        }
      }
      for (const auto & [a, v] : per_attack) row.mean_l2_by_attack[a] = stats::mean(v);
      row.n_pairs = diffs.size();
      if (!per_attack_delta.empty()) {
        std::vector<double> m;
        for (const auto & [a, v] : per_attack_delta) m.push_back(stats::mean(v));
        row.avg_delta_m = stats::mean(m);
      }
      if (auto tt = detail::try_stat(notes, fmt::format("defense {} paired t (n={})", dl, diffs.size()), [&] {
            return stats::paired_t_test(diffs);
          })) {
        row.p_value = tt->p_value;
        row.d_z = tt->effect_size;
        ps.push_back(tt->p_value);
        idx.push_back(t.rows.size());
      }
      auto buckets = severity_conditioned_defense(undefended, defended, dl, opt.mild_below_m, opt.severe_above_m);
      for (const auto & b : buckets) {
        if (b.n == 0) notes.push_back(fmt::format("severity {} {}: absent (n=0)", dl, b.bucket));
      }
      s.severity.insert(s.severity.end(), buckets.begin(), buckets.end());
      t.rows.push_back(std::move(row));
    }
    const auto bf = stats::bonferroni(ps);
    for (std::size_t i = 0; i < idx.size(); ++i) t.rows[idx[i]].p_bonferroni = bf.adjusted[i];
    s.defenses = std::move(t);
  }

  // ---- scenario categories, heatmap, baseline
  std::map<std::string, const Clip *> clip_by_id;
  for (const auto & c : clips) clip_by_id[c.id] = &c;
  std::map<std::string, std::string> category;
  for (const auto & [id, r] : clean) {
    auto it = clip_by_id.find(id);
    if (it != clip_by_id.end() && it->second->category) {
      category[id] = *it->second->category;
    } else {
      const std::string & text = it != clip_by_id.end() ? it->second->clean_coc : r->coc_perturbed;
      category[id] = classify_scenario(CoCText(text), opt.taxonomy);
    }
    ++s.category_counts[category[id]];
  }
  {
    std::map<std::pair<std::string, std::string>, std::vector<const EvalRecord *>> cells;
    for (const auto & a : attacks)
      for (const auto * r : by_attack[a]) {
        auto it = category.find(r->clip_id);
        if (it != category.end()) cells[{it->second, a}].push_back(r);
      }
    std::vector<std::string> cats = scenario_categories();
    for (const auto & cat : cats) {
      for (const auto & a : attacks) {
        auto it = cells.find({cat, a});
        if (it == cells.end()) continue;
        ScenarioCell cell;
        cell.category = cat;
        cell.attack = a;
        cell.n = it->second.size();
        std::vector<double> d;
        std::size_t k = 0;
        for (const auto * r : it->second) {
          d.push_back(r->delta_ade_m);
          k += r->coc_changed ? 1 : 0;
        }
        cell.mean_delta_ade_m = stats::mean(d);
        if (primary) cell.coc_change_pct = detail::pct(k, cell.n);
        s.scenarios.push_back(cell);
      }
    }
  }
  {
    std::vector<double> base_ade, model_ade, diff;
    for (const auto & [id, r] : clean) {
      auto it = clip_by_id.find(id);
      if (it == clip_by_id.end() || it->second->ego_history.empty()) continue;
      const double b = ade(constant_velocity_baseline(it->second->ego_history), it->second->gt_trajectory);
      base_ade.push_back(b);
      model_ade.push_back(r->ade_m);
      diff.push_back(b - r->ade_m);
    }
    auto & bc = s.baseline;
    bc.n = diff.size();
    if (!diff.empty()) {
      bc.mean_baseline_ade_m = stats::mean(base_ade);
      bc.mean_model_ade_m = stats::mean(model_ade);
      if (*bc.mean_baseline_ade_m > 0.0) {
        bc.improvement_pct = relative_improvement(*bc.mean_baseline_ade_m, *bc.mean_model_ade_m) * 100.0;
      }
      bc.test = detail::try_stat(notes, fmt::format("baseline paired t (n={})", diff.size()), [&] {
        return stats::paired_t_test(diff);
      });
    } else {
      notes.push_back("baseline: absent (no clean records with clip metadata)");
    }
  }

  // ---- failure modes and cross-attack consistency
  if (primary) {
    FailureModeRow pooled;
    pooled.attack = "all";
    for (const auto & a : attacks) {
      FailureModeRow row;
      row.attack = a;
      for (const auto * r : by_attack[a]) {
        if (!r->coc_changed) continue;
        const auto mode = classify_failure(CoCText(r->coc_clean), CoCText(r->coc_perturbed), opt.taxonomy.lexicon);
        ++row.n_changed;
        ++pooled.n_changed;
        for (auto l : mode.labels) {
          ++row.counts[to_string(l)];
          ++pooled.counts[to_string(l)];
        }
      }
      s.failure_modes.push_back(std::move(row));
    }
    s.failure_modes.push_back(std::move(pooled));
  }
  {
    std::vector<EvalRecord> prim;
    for (const auto & r : records)
      if (r.with_coc == primary) prim.push_back(r);
    s.consistency = cross_attack_consistency(prim, opt.unsafe_threshold_m);
  }
  return s;
}

}  // namespace cocstress

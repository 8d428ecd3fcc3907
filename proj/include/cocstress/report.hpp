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

// Renders a CampaignSummary: summary.json, one CSV per table, a plain-text
// report and three SVG figures. Output is a pure function of the summary.
// Absent cells render as "—" next to their counts.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "cocstress/analysis.hpp"
#include "cocstress/errors.hpp"

namespace cocstress
{

inline constexpr const char * kAbsent = "—";

inline std::string fmt_num(std::optional<double> v, int decimals = 4)
{
  if (!v || !std::isfinite(*v)) return kAbsent;
  return fmt::format("{:.{}f}", *v, decimals);
}

inline std::string fmt_p(std::optional<double> p)
{
  if (!p) return kAbsent;
  return fmt::format("{:.3g}", *p);
}

/// One row of the monitor table: label, counts, then Prec/Recall/FPR/AUROC
/// to three decimals.
inline std::vector<std::string> monitor_row(const std::string & label, const MonitorReport & r)
{
  return {label,
          std::to_string(r.tp),
          std::to_string(r.fp),
          std::to_string(r.fn),
          std::to_string(r.tn),
          fmt_num(r.precision, 3),
          fmt_num(r.recall, 3),
          fmt_num(r.fpr, 3),
          fmt_num(r.auroc, 3)};
}

// ------------------------------------------------------------ tables

struct Table
{
  std::string name;
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

namespace detail
{

inline std::string csv_escape(const std::string & s)
{
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Display width in code points, so "—" counts as one column.
inline std::size_t display_width(const std::string & s)
{
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80 ? 1 : 0;
  return n;
}

inline Json opt_json(std::optional<double> v)
{
  if (v && std::isfinite(*v)) return *v;
  return nullptr;
}

}  // namespace detail

inline std::string to_csv(const Table & t)
{
  std::ostringstream out;
  auto line = [&](const std::vector<std::string> & cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << detail::csv_escape(cells[i]);
    out << '\n';
  };
  line(t.header);
  for (const auto & r : t.rows) line(r);
  return out.str();
}

inline std::string to_text(const Table & t)
{
  std::vector<std::size_t> w(t.header.size(), 0);
  auto widen = [&](const std::vector<std::string> & r) {
    for (std::size_t i = 0; i < r.size() && i < w.size(); ++i) w[i] = std::max(w[i], detail::display_width(r[i]));
  };
  widen(t.header);
  for (const auto & r : t.rows) widen(r);
  std::ostringstream out;
  out << t.title << '\n';
  auto line = [&](const std::vector<std::string> & r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      out << (i ? "  " : "") << r[i];
      if (i + 1 < r.size()) out << std::string(w[i] - detail::display_width(r[i]), ' ');
    }
    out << '\n';
  };
  line(t.header);
  std::size_t total = 0;
  for (auto x : w) total += x + 2;
  out << std::string(total > 2 ? total - 2 : 0, '-') << '\n';
  for (const auto & r : t.rows) line(r);
  return out.str();
}

inline std::vector<Table> summary_tables(const CampaignSummary & s)
{
  std::vector<Table> tables;

  Table a{"attacks", "Attack impact (ascending mean ΔADE)",
          {"attack", "n", "mean_ade_m", "delta_ade_m", "coc_change_pct", "l2_gt_threshold_pct", "p_raw",
           "p_bonferroni", "d_z", "mean_l2_m"},
          {}};
  if (s.clean_mean_ade_m) {
    a.rows.push_back({"clean", std::to_string(s.n_clips), fmt_num(s.clean_mean_ade_m), fmt_num(0.0), kAbsent,
                      kAbsent, kAbsent, kAbsent, kAbsent, kAbsent});
  }
  for (const auto & r : s.attacks) {
    a.rows.push_back({r.attack, std::to_string(r.n), fmt_num(r.mean_ade_m), fmt_num(r.mean_delta_ade_m),
                      fmt_num(r.coc_change_pct, 1), fmt_num(r.unsafe_pct, 1), fmt_p(r.p_value),
                      fmt_p(r.p_bonferroni), fmt_num(r.d_z, 3), fmt_num(r.mean_l2_m)});
  }
  tables.push_back(std::move(a));

  if (s.dose_response) {
    Table d{"dose_response", "Dose-response (noise σ)", {"sigma", "n", "mean_ade_m", "ci_lo", "ci_hi"}, {}};
    for (const auto & p : s.dose_response->points) {
      d.rows.push_back({fmt_num(p.sigma, 1), std::to_string(p.n), fmt_num(p.mean_ade_m),
                        fmt_num(p.ci ? std::optional(p.ci->lo) : std::nullopt),
                        fmt_num(p.ci ? std::optional(p.ci->hi) : std::nullopt)});
    }
    tables.push_back(std::move(d));
    Table f{"fits", "Dose-response fits", {"family", "params", "r_squared", "aic", "delta_aic", "converged", "slope_p"}, {}};
    for (const auto & fit : s.dose_response->fits) {
      std::string params;
      for (std::size_t i = 0; i < fit.params.size(); ++i) params += (i ? " " : "") + fmt::format("{:.6g}", fit.params[i]);
      std::optional<double> delta;
      for (const auto & e : s.dose_response->aic)
        if (e.family == fit.family) delta = e.delta_aic;
      f.rows.push_back({stats::to_string(fit.family), params, fmt_num(fit.r_squared), fmt_num(fit.aic, 3),
                        fmt_num(delta, 3), fit.converged ? "yes" : "no", fmt_p(fit.slope_p)});
    }
    tables.push_back(std::move(f));
  }

  const auto & p = s.partition;
  Table part{"partition", "CoC partition of L2 deviation",
             {"group", "n", "mean_l2_m", "median_l2_m"},
             {{"unchanged", std::to_string(p.n_unchanged), fmt_num(p.mean_unchanged), fmt_num(p.median_unchanged)},
              {"changed", std::to_string(p.n_changed), fmt_num(p.mean_changed), fmt_num(p.median_changed)}}};
  tables.push_back(std::move(part));
  Table ptest{"partition_tests", "CoC partition statistics", {"statistic", "value"},
              {{"ratio_changed_over_unchanged", fmt_num(p.ratio, 3)},
               {"welch_t", fmt_num(p.welch ? std::optional(p.welch->statistic) : std::nullopt, 3)},
               {"welch_df", fmt_num(p.welch ? p.welch->df : std::nullopt, 1)},
               {"welch_p", fmt_p(p.welch ? std::optional(p.welch->p_value) : std::nullopt)},
               {"cohens_d", fmt_num(p.cohens_d, 3)},
               {"r_pb", fmt_num(p.r_pb, 3)},
               {"attack_level_r", fmt_num(p.attack_level_r, 3)}}};
  tables.push_back(std::move(ptest));

  Table corr{"correlation", "Per-attack CoC/L2 coupling", {"attack", "n", "r_pb", "l2_ratio"}, {}};
  for (const auto & r : s.attacks) corr.rows.push_back({r.attack, std::to_string(r.n), fmt_num(r.r_pb, 3), fmt_num(r.l2_ratio, 2)});
  tables.push_back(std::move(corr));

  Table mon{"monitor", "CoC-change monitor", {"attack", "tp", "fp", "fn", "tn", "precision", "recall", "fpr", "auroc"}, {}};
  for (const auto & [label, rep] : s.monitor.per_attack) mon.rows.push_back(monitor_row(label, rep));
  mon.rows.push_back(monitor_row("aggregate", s.monitor.aggregate));
  tables.push_back(std::move(mon));

  if (s.ablation) {
    Table ab{"ablation", "CoC ablation (ADE with vs without CoC)",
             {"condition", "n", "ade_with_m", "ade_without_m", "delta_m", "improvement_pct", "d_z", "p_t", "p_wilcoxon"},
             {}};
    for (const auto & r : s.ablation->rows) {
      ab.rows.push_back({r.attack, std::to_string(r.n), fmt_num(r.mean_with_m), fmt_num(r.mean_without_m),
                         fmt_num(r.delta_m), fmt_num(r.improvement_pct, 2), fmt_num(r.d_z, 3), fmt_p(r.p_t),
                         fmt_p(r.p_wilcoxon)});
    }
    ab.rows.push_back({"average", "", kAbsent, kAbsent, fmt_num(s.ablation->mean_delta_m),
                       fmt_num(s.ablation->mean_improvement_pct, 2), fmt_num(s.ablation->mean_d_z, 3), kAbsent, kAbsent});
    ab.rows.push_back({"sigma_slope_with", "", fmt_num(s.ablation->slope_with, 6), "", "", "", "", "", ""});
    ab.rows.push_back({"sigma_slope_without", "", "", fmt_num(s.ablation->slope_without, 6), "", "", "", "", ""});
    tables.push_back(std::move(ab));
  }

  if (s.defenses) {
    std::vector<std::string> attacks;
    for (const auto & [a, v] : s.defenses->undefended_l2_by_attack) attacks.push_back(a);
    // keep the attack order of the main table
    std::vector<std::string> ordered;
    for (const auto & r : s.attacks)
      if (std::find(attacks.begin(), attacks.end(), r.attack) != attacks.end()) ordered.push_back(r.attack);
    Table d{"defenses", "Defenses (mean L2 deviation by attack)", {"defense"}, {}};
    for (const auto & a : ordered) d.header.push_back(a);
    for (const auto & h : {"avg_delta_m", "n_pairs", "p_raw", "p_bonferroni", "d_z"}) d.header.push_back(h);
    std::vector<std::string> none{"none"};
    for (const auto & a : ordered) none.push_back(fmt_num(s.defenses->undefended_l2_by_attack.at(a)));
    for (int i = 0; i < 5; ++i) none.push_back(i == 0 ? fmt_num(0.0) : "");
    d.rows.push_back(none);
    for (const auto & r : s.defenses->rows) {
      std::vector<std::string> row{r.defense};
      for (const auto & a : ordered) {
        auto it = r.mean_l2_by_attack.find(a);
        row.push_back(it == r.mean_l2_by_attack.end() ? std::string(kAbsent) : fmt_num(it->second));
      }
      row.push_back(fmt_num(r.avg_delta_m));
      row.push_back(std::to_string(r.n_pairs));
      row.push_back(fmt_p(r.p_value));
      row.push_back(fmt_p(r.p_bonferroni));
      row.push_back(fmt_num(r.d_z, 3));
      d.rows.push_back(std::move(row));
    }
    tables.push_back(std::move(d));
    Table sv{"severity", "Severity-conditioned defense effect",
             {"defense", "bucket", "n", "mean_undefended_m", "mean_defended_m", "delta_m"}, {}};
    for (const auto & b : s.severity) {
      sv.rows.push_back({b.defense, b.bucket, std::to_string(b.n), fmt_num(b.mean_undefended_m),
                         fmt_num(b.mean_defended_m), fmt_num(b.delta_m)});
    }
    tables.push_back(std::move(sv));
  }

  Table sc{"scenarios", "Scenario × attack", {"category", "attack", "n", "mean_delta_ade_m", "coc_change_pct"}, {}};
  for (const auto & c : s.scenarios) {
    sc.rows.push_back({c.category, c.attack, std::to_string(c.n), fmt_num(c.mean_delta_ade_m), fmt_num(c.coc_change_pct, 1)});
  }
  tables.push_back(std::move(sc));
  Table cats{"categories", "Scenario categories (clean CoC)", {"category", "clips"}, {}};
  for (const auto & c : scenario_categories()) {
    auto it = s.category_counts.find(c);
    cats.rows.push_back({c, std::to_string(it == s.category_counts.end() ? 0 : it->second)});
  }
  tables.push_back(std::move(cats));

  const auto & b = s.baseline;
  Table base{"baseline", "Constant-velocity baseline vs model (clean)",
             {"n", "baseline_ade_m", "model_ade_m", "improvement_pct", "t", "p"},
             {{std::to_string(b.n), fmt_num(b.mean_baseline_ade_m), fmt_num(b.mean_model_ade_m),
               fmt_num(b.improvement_pct, 1), fmt_num(b.test ? std::optional(b.test->statistic) : std::nullopt, 3),
               fmt_p(b.test ? std::optional(b.test->p_value) : std::nullopt)}}};
  tables.push_back(std::move(base));

  Table fm{"failure_modes", "Failure modes of changed explanations",
           {"attack", "n_changed", "action_word_change", "object_reference_change", "shifted_focus", "paraphrase_only"}, {}};
  for (const auto & r : s.failure_modes) {
    std::vector<std::string> row{r.attack, std::to_string(r.n_changed)};
    for (const char * l : {"action_word_change", "object_reference_change", "shifted_focus", "paraphrase_only"}) {
      auto it = r.counts.find(l);
      row.push_back(std::to_string(it == r.counts.end() ? 0 : it->second));
    }
    fm.rows.push_back(std::move(row));
  }
  tables.push_back(std::move(fm));

  Table cons{"consistency", "Cross-attack consistency (attacks with L2 above threshold per clip)", {"attacks_failed", "clips"}, {}};
  for (std::size_t k = 0; k < s.consistency.histogram.size(); ++k) {
    cons.rows.push_back({std::to_string(k), std::to_string(s.consistency.histogram[k])});
  }
  tables.push_back(std::move(cons));
  return tables;
}

// ------------------------------------------------------------ structured summary

inline Json summary_to_json(const CampaignSummary & s)
{
  using detail::opt_json;
  Json j;
  j["primary_arm"] = s.primary_with_coc ? "with_coc" : "without_coc";
  j["n_records"] = s.n_records;
  j["n_clips"] = s.n_clips;
  j["clean_mean_ade_m"] = opt_json(s.clean_mean_ade_m);
  auto attacks = Json::array();
  for (const auto & r : s.attacks) {
    Json a;
    a["attack"] = r.attack;
    a["n"] = r.n;
    a["mean_ade_m"] = r.mean_ade_m;
    a["mean_delta_ade_m"] = r.mean_delta_ade_m;
    a["mean_l2_m"] = r.mean_l2_m;
    a["coc_change_pct"] = opt_json(r.coc_change_pct);
    a["l2_gt_threshold_pct"] = r.unsafe_pct;
    a["p_raw"] = opt_json(r.p_value);
    a["p_bonferroni"] = opt_json(r.p_bonferroni);
    a["d_z"] = opt_json(r.d_z);
    a["r_pb"] = opt_json(r.r_pb);
    a["l2_ratio"] = opt_json(r.l2_ratio);
    attacks.push_back(a);
  }
  j["attacks"] = attacks;
  if (s.dose_response) {
    Json d;
    auto pts = Json::array();
    for (const auto & p : s.dose_response->points) {
      Json pj;
      pj["sigma"] = p.sigma;
      pj["n"] = p.n;
      pj["mean_ade_m"] = p.mean_ade_m;
      pj["ci"] = p.ci ? Json::array({p.ci->lo, p.ci->hi}) : Json(nullptr);
      pts.push_back(pj);
    }
    d["points"] = pts;
    auto fits = Json::array();
    for (const auto & f : s.dose_response->fits) {
      Json fj;
      fj["family"] = stats::to_string(f.family);
      fj["params"] = f.params;
      fj["r_squared"] = f.r_squared;
      fj["ss_res"] = f.ss_res;
      fj["aic"] = f.aic;
      fj["converged"] = f.converged;
      if (!f.diagnostic.empty()) fj["diagnostic"] = f.diagnostic;
      fj["slope_p"] = opt_json(f.slope_p);
      fits.push_back(fj);
    }
    d["fits"] = fits;
    auto aic = Json::array();
    for (const auto & e : s.dose_response->aic) aic.push_back({{"family", stats::to_string(e.family)}, {"delta_aic", e.delta_aic}});
    d["aic_ranking"] = aic;
    j["dose_response"] = d;
  } else {
    j["dose_response"] = nullptr;
  }
  const auto & p = s.partition;
  j["partition"] = {
    {"n_changed", p.n_changed},
    {"n_unchanged", p.n_unchanged},
    {"mean_changed_m", opt_json(p.mean_changed)},
    {"mean_unchanged_m", opt_json(p.mean_unchanged)},
    {"median_changed_m", opt_json(p.median_changed)},
    {"median_unchanged_m", opt_json(p.median_unchanged)},
    {"ratio", opt_json(p.ratio)},
    {"welch_t", opt_json(p.welch ? std::optional(p.welch->statistic) : std::nullopt)},
    {"welch_p", opt_json(p.welch ? std::optional(p.welch->p_value) : std::nullopt)},
    {"cohens_d", opt_json(p.cohens_d)},
    {"r_pb", opt_json(p.r_pb)},
    {"attack_level_r", opt_json(p.attack_level_r)},
  };
  auto mon_json = [&](const MonitorReport & r) {
    return Json{{"tp", r.tp}, {"fp", r.fp}, {"fn", r.fn}, {"tn", r.tn}, {"precision", opt_json(r.precision)},
                {"recall", opt_json(r.recall)}, {"fpr", opt_json(r.fpr)}, {"auroc", opt_json(r.auroc)}};
  };
  Json mon;
  for (const auto & [label, rep] : s.monitor.per_attack) mon[label] = mon_json(rep);
  mon["aggregate"] = mon_json(s.monitor.aggregate);
  j["monitor"] = mon;
  if (s.ablation) {
    Json ab;
    auto rows = Json::array();
    for (const auto & r : s.ablation->rows) {
      rows.push_back({{"condition", r.attack}, {"n", r.n}, {"ade_with_m", r.mean_with_m}, {"ade_without_m", r.mean_without_m},
                      {"delta_m", r.delta_m}, {"improvement_pct", opt_json(r.improvement_pct)}, {"d_z", opt_json(r.d_z)},
                      {"p_t", opt_json(r.p_t)}, {"p_wilcoxon", opt_json(r.p_wilcoxon)}});
    }
    ab["rows"] = rows;
    ab["mean_delta_m"] = opt_json(s.ablation->mean_delta_m);
    ab["mean_improvement_pct"] = opt_json(s.ablation->mean_improvement_pct);
    ab["mean_d_z"] = opt_json(s.ablation->mean_d_z);
    ab["sigma_slope_with"] = opt_json(s.ablation->slope_with);
    ab["sigma_slope_without"] = opt_json(s.ablation->slope_without);
    j["ablation"] = ab;
  } else {
    j["ablation"] = nullptr;
  }
  if (s.defenses) {
    Json d;
    d["undefended_l2_by_attack"] = s.defenses->undefended_l2_by_attack;
    auto rows = Json::array();
    for (const auto & r : s.defenses->rows) {
      rows.push_back({{"defense", r.defense}, {"mean_l2_by_attack", r.mean_l2_by_attack}, {"n_pairs", r.n_pairs},
                      {"avg_delta_m", opt_json(r.avg_delta_m)}, {"p_raw", opt_json(r.p_value)},
                      {"p_bonferroni", opt_json(r.p_bonferroni)}, {"d_z", opt_json(r.d_z)}});
    }
    d["rows"] = rows;
    auto sev = Json::array();
    for (const auto & b : s.severity) {
      sev.push_back({{"defense", b.defense}, {"bucket", b.bucket}, {"n", b.n}, {"mean_undefended_m", opt_json(b.mean_undefended_m)},
                     {"mean_defended_m", opt_json(b.mean_defended_m)}, {"delta_m", opt_json(b.delta_m)}});
    }
    d["severity"] = sev;
    j["defenses"] = d;
  } else {
    j["defenses"] = nullptr;
  }
  auto sc = Json::array();
  for (const auto & c : s.scenarios) {
    sc.push_back({{"category", c.category}, {"attack", c.attack}, {"n", c.n}, {"mean_delta_ade_m", c.mean_delta_ade_m},
                  {"coc_change_pct", opt_json(c.coc_change_pct)}});
  }
  j["scenarios"] = sc;
  j["category_counts"] = s.category_counts;
  const auto & b = s.baseline;
  j["baseline"] = {{"n", b.n}, {"baseline_ade_m", opt_json(b.mean_baseline_ade_m)}, {"model_ade_m", opt_json(b.mean_model_ade_m)},
                   {"improvement_pct", opt_json(b.improvement_pct)},
                   {"t", opt_json(b.test ? std::optional(b.test->statistic) : std::nullopt)},
                   {"p", opt_json(b.test ? std::optional(b.test->p_value) : std::nullopt)}};
  auto fm = Json::array();
  for (const auto & r : s.failure_modes) fm.push_back({{"attack", r.attack}, {"n_changed", r.n_changed}, {"counts", r.counts}});
  j["failure_modes"] = fm;
  j["consistency"] = {{"n_clips", s.consistency.n_clips}, {"histogram", s.consistency.histogram}};
  j["notes"] = s.notes;
  return j;
}

// ------------------------------------------------------------ figures

namespace svg
{

inline std::string header(int w, int h)
{
  return fmt::format(
    "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
    "font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n",
    w, h);
}

inline std::string escape(const std::string & s)
{
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Scale
{
  double d0, d1, r0, r1;
  double operator()(double v) const { return d1 == d0 ? 0.5 * (r0 + r1) : r0 + (v - d0) / (d1 - d0) * (r1 - r0); }
};

inline std::pair<double, double> padded(double lo, double hi)
{
  if (hi <= lo) return {lo - 1.0, hi + 1.0};
  const double pad = 0.08 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace svg

/// Points with CI whiskers plus the OLS line across the σ range.
inline std::string dose_response_svg(const DoseResponse & d)
{
  constexpr int W = 480, H = 320, L = 60, R = 20, T = 30, B = 45;
  double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
  for (const auto & p : d.points) {
    xlo = std::min(xlo, p.sigma);
    xhi = std::max(xhi, p.sigma);
    ylo = std::min(ylo, p.ci ? p.ci->lo : p.mean_ade_m);
    yhi = std::max(yhi, p.ci ? p.ci->hi : p.mean_ade_m);
  }
  if (d.points.empty()) xlo = ylo = 0.0, xhi = yhi = 1.0;
  const auto [x0, x1] = svg::padded(xlo, xhi);
  const auto [y0, y1] = svg::padded(ylo, yhi);
  const svg::Scale sx{x0, x1, double(L), double(W - R)};
  const svg::Scale sy{y0, y1, double(H - B), double(T)};
  std::string out = svg::header(W, H);
  out += fmt::format("<text x=\"{}\" y=\"18\" text-anchor=\"middle\">Dose-response: ADE vs noise σ</text>\n", W / 2);
  out += fmt::format("<line class=\"axis\" x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", L, H - B, W - R);
  out += fmt::format("<line class=\"axis\" x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", L, H - B, T);
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0;
    const double yv = y0 + (y1 - y0) * i / 4.0;
    out += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{:.0f}</text>\n", sx(xv), H - B + 15, xv);
    out += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.2f}</text>\n", L - 5, sy(yv) + 4, yv);
  }
  out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">noise σ</text>\n", (L + W - R) / 2, H - 8);
  out += fmt::format("<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">mean ADE (m)</text>\n",
                     (T + H - B) / 2, (T + H - B) / 2);
  if (d.ols) {
    out += fmt::format(
      "<line class=\"fit\" x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#c0392b\" stroke-width=\"1.5\"/>\n",
      sx(xlo), sy(d.ols->predict(xlo)), sx(xhi), sy(d.ols->predict(xhi)));
  }
  for (const auto & p : d.points) {
    if (p.ci) {
      out += fmt::format("<line class=\"ci\" x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"#555\"/>\n",
                         sx(p.sigma), sy(p.ci->lo), sy(p.ci->hi));
    }
    out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"4\" fill=\"#2c3e50\"/>\n", sx(p.sigma), sy(p.mean_ade_m));
  }
  return out + "</svg>\n";
}

inline std::string partition_svg(const PartitionStats & p)
{
  constexpr int W = 360, H = 300, L = 60, B = 45, T = 30;
  const double top = std::max({p.mean_changed.value_or(0.0), p.mean_unchanged.value_or(0.0), 1e-9}) * 1.15;
  std::string out = svg::header(W, H);
  out += fmt::format("<text x=\"{}\" y=\"18\" text-anchor=\"middle\">Mean L2 deviation by CoC outcome</text>\n", W / 2);
  out += fmt::format("<line class=\"axis\" x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", L, H - B, W - 20);
  const std::array<std::tuple<const char *, std::optional<double>, std::size_t>, 2> bars = {
    std::tuple{"unchanged", p.mean_unchanged, p.n_unchanged}, std::tuple{"changed", p.mean_changed, p.n_changed}};
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const auto & [label, v, n] = bars[i];
    const double x = L + 40 + 130.0 * static_cast<double>(i);
    const double h = v ? (*v / top) * (H - B - T) : 0.0;
    out += fmt::format("<rect class=\"bar\" x=\"{:.1f}\" y=\"{:.1f}\" width=\"80\" height=\"{:.1f}\" fill=\"{}\"/>\n", x,
                       H - B - h, h, i == 0 ? "#7f8c8d" : "#c0392b");
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", x + 40, H - B - h - 4,
                       v ? fmt::format("{:.2f} m", *v) : std::string(kAbsent));
    out += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{} (n={})</text>\n", x + 40, H - B + 15, label, n);
  }
  return out + "</svg>\n";
}

inline std::string scenario_heatmap_svg(const std::vector<ScenarioCell> & cells, const std::vector<std::string> & attacks)
{
  const auto & cats = scenario_categories();
  constexpr int L = 150, T = 70, CW = 70, CH = 24;
  const int W = L + CW * static_cast<int>(std::max<std::size_t>(attacks.size(), 1)) + 20;
  const int H = T + CH * static_cast<int>(cats.size()) + 20;
  double lo = 0.0, hi = 0.0;
  for (const auto & c : cells) {
    lo = std::min(lo, c.mean_delta_ade_m);
    hi = std::max(hi, c.mean_delta_ade_m);
  }
  std::string out = svg::header(W, H);
  out += fmt::format("<text x=\"{}\" y=\"18\" text-anchor=\"middle\">Mean ΔADE (m) by scenario and attack</text>\n", W / 2);
  for (std::size_t a = 0; a < attacks.size(); ++a) {
    const int x = L + CW * static_cast<int>(a) + CW / 2;
    out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", x, T - 8, svg::escape(attacks[a]));
  }
  for (std::size_t r = 0; r < cats.size(); ++r) {
    const int y = T + CH * static_cast<int>(r);
    out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", L - 6, y + CH / 2 + 4, svg::escape(cats[r]));
    for (std::size_t a = 0; a < attacks.size(); ++a) {
      const int x = L + CW * static_cast<int>(a);
      auto it = std::find_if(cells.begin(), cells.end(), [&](const auto & c) {
        return c.category == cats[r] && c.attack == attacks[a];
      });
      std::string fill = "#eeeeee";
      std::string label = kAbsent;
      if (it != cells.end()) {
        const double t = hi > lo ? (it->mean_delta_ade_m - lo) / (hi - lo) : 0.0;
        const int g = static_cast<int>(std::lround(235.0 - 180.0 * t));
        fill = fmt::format("rgb(235,{},{})", g, g);
        label = fmt::format("{:.2f}", it->mean_delta_ade_m);
      }
      out += fmt::format("<rect class=\"cell\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" stroke=\"white\"/>\n",
                         x, y, CW, CH, fill);
      out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", x + CW / 2, y + CH / 2 + 4, label);
    }
  }
  return out + "</svg>\n";
}

// ------------------------------------------------------------ writer

inline std::string render_text_report(const CampaignSummary & s)
{
  std::ostringstream out;
  out << "cocstress campaign report\n";
  out << fmt::format("records: {}  clips: {}  primary arm: {}\n\n", s.n_records, s.n_clips,
                     s.primary_with_coc ? "with_coc" : "without_coc");
  for (const auto & t : summary_tables(s)) out << to_text(t) << '\n';
  if (s.dose_response && s.dose_response->ols) {
    const auto & f = *s.dose_response->ols;
    out << fmt::format("dose-response OLS: slope {:.5f} m per σ unit, R² {:.3f}, slope p {}\n", f.params[1], f.r_squared,
                       fmt_p(f.slope_p));
    if (!s.dose_response->aic.empty()) {
      out << "AIC ranking:";
      for (const auto & e : s.dose_response->aic) out << fmt::format(" {} (Δ{:.2f})", stats::to_string(e.family), e.delta_aic);
      out << "\n";
    }
    out << '\n';
  }
  if (!s.notes.empty()) {
    out << "Notes\n";
    for (const auto & n : s.notes) out << "  " << n << '\n';
  }
  return out.str();
}

/// Writes every report artifact into `dir` and returns the file names.
inline std::vector<std::string> write_report(const CampaignSummary & s, const std::filesystem::path & dir)
{
  std::filesystem::create_directories(dir);
  std::vector<std::string> written;
  auto put = [&](const std::string & name, const std::string & text) {
    std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + (dir / name).string());
    f << text;
    written.push_back(name);
  };
  put("summary.json", summary_to_json(s).dump(2) + "\n");
  for (const auto & t : summary_tables(s)) put(t.name + ".csv", to_csv(t));
  put("report.txt", render_text_report(s));
  if (s.dose_response) put("dose_response.svg", dose_response_svg(*s.dose_response));
  put("partition.svg", partition_svg(s.partition));
  std::vector<std::string> attacks;
  for (const auto & [label, _] : s.monitor.per_attack) attacks.push_back(label);
  if (attacks.empty())
    for (const auto & r : s.attacks) attacks.push_back(r.attack);
  put("scenario_heatmap.svg", scenario_heatmap_svg(s.scenarios, attacks));
  return written;
}

}  // namespace cocstress

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

#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace cocstress;
using testing_support::TempDir;

namespace
{

const std::string kClean = "Keep lane since the road is clear";
const std::string kFlip = "Stop at the red light";

EvalRecord rec(
  int clip, const PerturbationSpec & cond, double ade, double dade, double l2, bool changed, bool with_coc = true,
  const DefenseSpec & def = {})
{
  EvalRecord r;
  r.clip_id = fmt::format("c{:02d}", clip);
  r.condition = cond;
  r.defense = def;
  r.with_coc = with_coc;
  r.ade_m = ade;
  r.fde_m = ade;
  r.delta_ade_m = dade;
  r.l2_deviation_m = l2;
  r.coc_clean = with_coc ? kClean : "";
  r.coc_perturbed = with_coc ? (changed ? kFlip : kClean) : "";
  r.coc_changed = with_coc && changed;
  r.word_similarity = r.coc_changed ? 0.0 : 1.0;
  return r;
}

std::vector<EvalRecord> cleans(int n, bool with_coc = true, double ade = 1.0)
{
  std::vector<EvalRecord> out;
  for (int i = 0; i < n; ++i) out.push_back(rec(i, PerturbationSpec::clean(), ade, 0, 0, false, with_coc));
  return out;
}

const AttackRow & row_of(const CampaignSummary & s, const std::string & a)
{
  for (const auto & r : s.attacks)
    if (r.attack == a) return r;
  throw std::runtime_error("missing attack row " + a);
}

bool has_note(const CampaignSummary & s, const std::string & needle)
{
  for (const auto & n : s.notes)
    if (n.find(needle) != std::string::npos) return true;
  return false;
}

double t_stat(const std::vector<double> & d)
{
  double m = 0;
  for (double x : d) m += x;
  m /= d.size();
  double ss = 0;
  for (double x : d) ss += (x - m) * (x - m);
  return m / std::sqrt(ss / (d.size() - 1) / d.size());
}

// Two attacks over six clips with hand-picked values.
std::vector<EvalRecord> two_attack_campaign()
{
  auto rs = cleans(6);
  const std::vector<double> dark = {0.1, 0.2, 0.3, 0.2, 0.1, 0.3};
  const std::vector<double> noise = {1, 2, 3, 1, 2, 4};
  const std::vector<double> noise_l2 = {2, 9, 12, 3, 4, 20};
  const std::vector<bool> noise_changed = {false, true, true, false, false, true};
  for (int i = 0; i < 6; ++i) {
    rs.push_back(rec(i, PerturbationSpec::dark(), 1 + dark[i], dark[i], 1.0 + i * 0.1, false));
    rs.push_back(rec(i, PerturbationSpec::noise(30), 1 + noise[i], noise[i], noise_l2[i], noise_changed[i]));
  }
  return rs;
}

}  // namespace

TEST(Analyze, EmptyInputIsAnalysisError)
{
  EXPECT_THROW(analyze({}, {}), AnalysisError);
}

TEST(Analyze, AttackTableMatchesHandComputation)
{
  const auto s = analyze(two_attack_campaign(), {});
  ASSERT_EQ(s.attacks.size(), 2u);
  EXPECT_EQ(s.attacks[0].attack, PerturbationSpec::dark().label());  // ascending ΔADE
  EXPECT_NEAR(*s.clean_mean_ade_m, 1.0, 1e-15);

  const auto & n = row_of(s, "noise_30");
  const std::vector<double> d = {1, 2, 3, 1, 2, 4};
  EXPECT_EQ(n.n, 6u);
  EXPECT_NEAR(n.mean_delta_ade_m, 13.0 / 6.0, 1e-12);
  EXPECT_NEAR(n.mean_ade_m, 1 + 13.0 / 6.0, 1e-12);
  EXPECT_NEAR(n.mean_l2_m, 50.0 / 6.0, 1e-12);
  EXPECT_NEAR(*n.coc_change_pct, 50.0, 1e-12);
  EXPECT_NEAR(n.unsafe_pct, 50.0, 1e-12);  // 9, 12, 20 exceed 5 m
  const double t = t_stat(d);
  EXPECT_NEAR(*n.p_value, stats::student_t_two_sided_p(t, 5), 1e-12);
  EXPECT_NEAR(*n.p_bonferroni, std::min(1.0, 2.0 * *n.p_value), 1e-15);
  EXPECT_NEAR(*n.d_z, t / std::sqrt(6.0), 1e-12);
  EXPECT_NEAR(*n.l2_ratio, (41.0 / 3.0) / 3.0, 1e-12);
  // r_pb = (M1 - M0) / s_n * sqrt(p q) with the population SD.
  const double mu = 50.0 / 6.0;
  double ss = 0;
  for (double v : {2.0, 9.0, 12.0, 3.0, 4.0, 20.0}) ss += (v - mu) * (v - mu);
  EXPECT_NEAR(*n.r_pb, (41.0 / 3.0 - 3.0) / std::sqrt(ss / 6.0) * 0.5, 1e-12);
  EXPECT_EQ(*n.mean_sigma, 30.0);
}

TEST(Analyze, SingleGroupCellsAreAbsentWithCounts)
{
  const auto s = analyze(two_attack_campaign(), {});
  const auto & dark = row_of(s, PerturbationSpec::dark().label());
  EXPECT_FALSE(dark.r_pb.has_value());
  EXPECT_FALSE(dark.l2_ratio.has_value());
  EXPECT_TRUE(has_note(s, "attack dark r_pb (changed=0, n=6)"));
  EXPECT_TRUE(has_note(s, "changed=0, unchanged=6"));
  EXPECT_TRUE(has_note(s, "dose-response: absent (distinct noise levels=1)"));
  EXPECT_FALSE(s.dose_response.has_value());
}

TEST(Analyze, PartitionDirectionAndEffectSizes)
{
  const auto s = analyze(two_attack_campaign(), {});
  const auto & p = s.partition;
  EXPECT_EQ(p.n_changed, 3u);
  EXPECT_EQ(p.n_unchanged, 9u);
  EXPECT_NEAR(*p.mean_changed, 41.0 / 3.0, 1e-12);
  ASSERT_TRUE(p.welch.has_value());
  EXPECT_LT(p.welch->statistic, 0.0);  // unchanged minus changed
  EXPECT_GT(*p.cohens_d, 0.0);
  EXPECT_GT(*p.r_pb, 0.0);
  EXPECT_TRUE(has_note(s, "attack-level correlation (attacks=2)"));  // two points are too few
}

TEST(Analyze, DoseResponseOverNoiseLevels)
{
  auto rs = cleans(8);
  std::mt19937 gen(1);
  std::normal_distribution<double> eps(0, 0.05);
  for (double sigma : {10.0, 30.0, 50.0, 70.0})
    for (int i = 0; i < 8; ++i) {
      const double ade = 1.0 + 0.01 * sigma + eps(gen);
      rs.push_back(rec(i, PerturbationSpec::noise(sigma), ade, ade - 1.0, 1.0, false));
    }
  AnalysisOptions opt;
  opt.bootstrap_resamples = 2000;
  const auto s = analyze(rs, {}, opt);
  ASSERT_TRUE(s.dose_response.has_value());
  const auto & d = *s.dose_response;
  ASSERT_EQ(d.points.size(), 4u);
  std::vector<double> xs, ys;
  for (const auto & p : d.points) {
    xs.push_back(p.sigma);
    ys.push_back(p.mean_ade_m);
    ASSERT_TRUE(p.ci.has_value());
    EXPECT_LE(p.ci->lo, p.mean_ade_m);
    EXPECT_GE(p.ci->hi, p.mean_ade_m);
  }
  double sxy = 0, sxx = 0;
  for (int i = 0; i < 4; ++i) {
    sxy += (xs[i] - 40) * (ys[i] - stats::mean(ys));
    sxx += (xs[i] - 40) * (xs[i] - 40);
  }
  EXPECT_NEAR(d.ols->params[1], sxy / sxx, 1e-12);
  EXPECT_NEAR(d.ols->params[1], 0.01, 0.003);
  EXPECT_FALSE(d.aic.empty());
  EXPECT_EQ(d.aic.front().delta_aic, 0.0);
}

TEST(Analyze, AblationPairsArms)
{
  auto rs = cleans(6);
  auto wo = cleans(6, false, 1.5);
  rs.insert(rs.end(), wo.begin(), wo.end());
  const std::vector<double> pen = {0.3, 0.35, 0.4, 0.25, 0.3, 0.45};
  for (int i = 0; i < 6; ++i) {
    rs.push_back(rec(i, PerturbationSpec::dark(), 2.0, 1.0, 3.0, false));
    rs.push_back(rec(i, PerturbationSpec::dark(), 2.0 + pen[i], 1.0, 3.0, false, false));
  }
  const auto s = analyze(rs, {});
  EXPECT_TRUE(s.primary_with_coc);
  ASSERT_TRUE(s.ablation.has_value());
  ASSERT_EQ(s.ablation->rows.size(), 2u);
  const auto & clean = s.ablation->rows[0];
  EXPECT_EQ(clean.attack, "clean");
  EXPECT_NEAR(clean.delta_m, 0.5, 1e-12);
  EXPECT_NEAR(*clean.improvement_pct, 100.0 / 3.0, 1e-9);
  EXPECT_FALSE(clean.p_t.has_value());  // constant difference
  const auto & dark = s.ablation->rows[1];
  EXPECT_NEAR(dark.delta_m, 2.05 / 6.0, 1e-12);
  EXPECT_NEAR(*dark.improvement_pct, 100.0 * (2.05 / 6.0) / (2.0 + 2.05 / 6.0), 1e-9);
  EXPECT_NEAR(*dark.d_z, t_stat(pen) / std::sqrt(6.0), 1e-9);
  EXPECT_DOUBLE_EQ(*dark.p_wilcoxon, 0.03125);
  EXPECT_NEAR(*s.ablation->mean_delta_m, (0.5 + 2.05 / 6.0) / 2.0, 1e-12);
}

TEST(Analyze, WithoutCocOnlyCampaign)
{
  auto rs = cleans(4, false);
  for (int i = 0; i < 4; ++i) rs.push_back(rec(i, PerturbationSpec::dark(), 2.0 + 0.1 * i, 1.0 + 0.1 * i, 3.0, false, false));
  const auto s = analyze(rs, {});
  EXPECT_FALSE(s.primary_with_coc);
  EXPECT_FALSE(s.attacks[0].coc_change_pct.has_value());
  EXPECT_FALSE(s.ablation.has_value());
  EXPECT_TRUE(has_note(s, "partition: absent"));
  const auto text = render_text_report(s);
  EXPECT_NE(text.find(kAbsent), std::string::npos);
}

TEST(Severity, BucketBoundaries)
{
  std::vector<EvalRecord> und, def;
  const std::vector<double> u = {9.99, 10.0, 30.0, 30.01, 50.0};
  for (int i = 0; i < 5; ++i) {
    und.push_back(rec(i, PerturbationSpec::dark(), 0, 0, u[i], false));
    def.push_back(rec(i, PerturbationSpec::dark(), 0, 0, u[i] - 1.0, false, true, DefenseSpec::of(DefenseKind::median3)));
  }
  const auto b = severity_conditioned_defense(und, def, "median3");
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0].bucket, "mild");
  EXPECT_EQ(b[0].n, 1u);
  EXPECT_EQ(b[1].n, 2u);
  EXPECT_EQ(b[2].n, 2u);
  EXPECT_NEAR(*b[2].delta_m, -1.0, 1e-12);
  EXPECT_NEAR(*b[1].mean_undefended_m, 20.0, 1e-12);
}

TEST(Severity, IdentityHalvingAndEmptyBuckets)
{
  std::vector<EvalRecord> und, same, halved;
  const std::vector<double> u = {2, 4, 40, 60};
  for (int i = 0; i < 4; ++i) {
    und.push_back(rec(i, PerturbationSpec::noise(50), 0, 0, u[i], false));
    same.push_back(rec(i, PerturbationSpec::noise(50), 0, 0, u[i], false, true, DefenseSpec::of(DefenseKind::gaussian3)));
    halved.push_back(rec(i, PerturbationSpec::noise(50), 0, 0, u[i] > 30 ? u[i] / 2 : u[i], false, true,
                         DefenseSpec::of(DefenseKind::gaussian3)));
  }
  for (const auto & b : severity_conditioned_defense(und, same, "gaussian3")) {
    if (b.n) EXPECT_EQ(*b.delta_m, 0.0) << b.bucket;
  }
  const auto h = severity_conditioned_defense(und, halved, "gaussian3");
  EXPECT_EQ(*h[0].delta_m, 0.0);
  EXPECT_EQ(h[1].n, 0u);
  EXPECT_FALSE(h[1].delta_m.has_value());
  EXPECT_NEAR(*h[2].delta_m, -25.0, 1e-12);
}

TEST(Analyze, DefenseTableAndSeverityRows)
{
  auto rs = cleans(5);
  const auto med = DefenseSpec::of(DefenseKind::median3);
  const auto jpg = DefenseSpec::of(DefenseKind::jpeg75);
  for (int i = 0; i < 5; ++i) {
    const double l2 = 4.0 + 10.0 * i;
    rs.push_back(rec(i, PerturbationSpec::noise(70), 2, 1, l2, false));
    rs.push_back(rec(i, PerturbationSpec::noise(70), 2, 1, l2, false, true, med));
    rs.push_back(rec(i, PerturbationSpec::noise(70), 2, 1, l2 * 0.5 + 0.1 * i * i, false, true, jpg));
  }
  AnalysisOptions opt;
  opt.defense_order = {"median3", "jpeg75"};
  const auto s = analyze(rs, {}, opt);
  ASSERT_TRUE(s.defenses.has_value());
  ASSERT_EQ(s.defenses->rows.size(), 2u);
  const auto & m = s.defenses->rows[0];
  EXPECT_EQ(m.defense, "median3");
  EXPECT_EQ(*m.avg_delta_m, 0.0);
  EXPECT_FALSE(m.p_value.has_value());
  EXPECT_TRUE(has_note(s, "defense median3 paired t (n=5)"));
  const auto & j = s.defenses->rows[1];
  EXPECT_LT(*j.avg_delta_m, 0.0);
  ASSERT_TRUE(j.p_value.has_value());
  EXPECT_EQ(*j.p_bonferroni, *j.p_value);  // only one testable defense
  EXPECT_EQ(s.severity.size(), 6u);
  EXPECT_NEAR(s.defenses->undefended_l2_by_attack.at("noise_70"), 24.0, 1e-12);
  // Defended records never enter the attack table.
  EXPECT_EQ(row_of(s, "noise_70").n, 5u);
}

TEST(Analyze, BaselineAndScenarios)
{
  std::vector<Clip> clips;
  for (int i = 0; i < 4; ++i) {
    Clip c;
    c.id = fmt::format("c{:02d}", i);
    c.ego_history = {{0.0, {0, 0}, {10, 0}}};
    c.gt_trajectory = testing_support::line_trajectory(10, 1);
    c.clean_coc = i < 2 ? "Stop at the stop sign" : "Turn left at the junction";
    if (i == 3) c.category = "Passing";
    clips.push_back(c);
  }
  auto rs = cleans(4);
  for (int i = 0; i < 4; ++i) rs.push_back(rec(i, PerturbationSpec::fog_heavy(), 2, 1 + i, 3, i == 0));
  const auto s = analyze(rs, clips);
  EXPECT_EQ(s.category_counts.at("Stop_Signal"), 2u);
  EXPECT_EQ(s.category_counts.at("Turn_Left"), 1u);
  EXPECT_EQ(s.category_counts.at("Passing"), 1u);
  ASSERT_EQ(s.scenarios.size(), 3u);
  EXPECT_EQ(s.scenarios[0].category, "Stop_Signal");
  EXPECT_NEAR(s.scenarios[0].mean_delta_ade_m, 1.5, 1e-12);
  EXPECT_NEAR(*s.scenarios[0].coc_change_pct, 50.0, 1e-12);

  EXPECT_EQ(s.baseline.n, 4u);
  EXPECT_NEAR(*s.baseline.mean_baseline_ade_m, 3.25, 1e-9);
  EXPECT_NEAR(*s.baseline.improvement_pct, 100.0 * 2.25 / 3.25, 1e-9);
  EXPECT_FALSE(s.baseline.test.has_value());  // identical differences
}

TEST(Analyze, FailureModesAndConsistency)
{
  auto rs = two_attack_campaign();
  const auto s = analyze(rs, {});
  ASSERT_EQ(s.failure_modes.size(), 3u);
  EXPECT_EQ(s.failure_modes.back().attack, "all");
  EXPECT_EQ(s.failure_modes.back().n_changed, 3u);
  std::size_t per_attack = 0;
  for (std::size_t i = 0; i + 1 < s.failure_modes.size(); ++i) per_attack += s.failure_modes[i].n_changed;
  EXPECT_EQ(per_attack, 3u);
  const auto mode = classify_failure(CoCText(kClean), CoCText(kFlip), default_taxonomy().lexicon);
  for (auto l : mode.labels) EXPECT_EQ(s.failure_modes.back().counts.at(to_string(l)), 3u);
  EXPECT_EQ(s.consistency.n_clips, 6u);
  EXPECT_NEAR(s.consistency.fraction_at_least(1), 0.5, 1e-15);
}

TEST(Analyze, InvariantToRecordOrder)
{
  auto rs = two_attack_campaign();
  const auto a = summary_to_json(analyze(rs, {})).dump();
  std::mt19937 gen(8);
  std::shuffle(rs.begin(), rs.end(), gen);
  EXPECT_EQ(summary_to_json(analyze(rs, {})).dump(), a);
}

TEST(Report, TablesCsvAndText)
{
  const auto s = analyze(two_attack_campaign(), {});
  const auto tables = summary_tables(s);
  std::set<std::string> names;
  for (const auto & t : tables) names.insert(t.name);
  for (const char * n : {"attacks", "partition", "partition_tests", "correlation", "monitor", "scenarios", "categories",
                         "baseline", "failure_modes", "consistency"}) {
    EXPECT_TRUE(names.count(n)) << n;
  }
  const auto & attacks = tables.front();
  EXPECT_EQ(attacks.rows.front().front(), "clean");
  const auto csv = to_csv(attacks);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "attack,n,mean_ade_m,delta_ade_m,coc_change_pct,l2_gt_threshold_pct,p_raw,p_bonferroni,d_z,mean_l2_m");
  EXPECT_NE(to_text(attacks).find(kAbsent), std::string::npos);
  Table t{"x", "X", {"a", "b"}, {{"has,comma", "has \"quote\""}}};
  EXPECT_EQ(to_csv(t), "a,b\n\"has,comma\",\"has \"\"quote\"\"\"\n");
}

TEST(Report, FormattingHelpers)
{
  EXPECT_EQ(fmt_num(std::nullopt), kAbsent);
  EXPECT_EQ(fmt_num(NAN), kAbsent);
  EXPECT_EQ(fmt_num(1.23456, 2), "1.23");
  EXPECT_EQ(fmt_p(std::nullopt), kAbsent);
  EXPECT_EQ(fmt_p(0.000123456), "0.000123");
}

TEST(Report, DoseSvgHasOnePointPerSigmaAndOneFitLine)
{
  DoseResponse d;
  for (double s : {10.0, 30.0, 50.0, 70.0}) d.points.push_back({s, 5, 1.0 + 0.005 * s, stats::Interval{0.9, 1.5}});
  std::vector<std::string> notes;
  fit_dose_response(d, notes);
  const auto svg = dose_response_svg(d);
  auto count = [&](const std::string & needle) {
    std::size_t n = 0;
    for (auto p = svg.find(needle); p != std::string::npos; p = svg.find(needle, p + 1)) ++n;
    return n;
  };
  EXPECT_EQ(count("<circle"), 4u);
  EXPECT_EQ(count("class=\"fit\""), 1u);
  EXPECT_EQ(count("class=\"ci\""), 4u);
  EXPECT_EQ(svg.rfind("</svg>\n"), svg.size() - 7);
}

TEST(Report, WriteReportIsDeterministic)
{
  TempDir a, b;
  const auto s = analyze(two_attack_campaign(), {});
  const auto files = write_report(s, a.path());
  write_report(s, b.path());
  for (const char * f : {"summary.json", "attacks.csv", "report.txt", "partition.svg", "scenario_heatmap.svg"}) {
    EXPECT_NE(std::find(files.begin(), files.end(), f), files.end()) << f;
  }
  for (const auto & f : files) EXPECT_EQ(testing_support::slurp(a / f), testing_support::slurp(b / f)) << f;
  const auto j = nlohmann::json::parse(testing_support::slurp(a / "summary.json"));
  EXPECT_EQ(j["n_records"], 18);
  EXPECT_TRUE(j["attacks"][0]["r_pb"].is_null());
}

TEST(Report, CellsRecomputableFromRecordFile)
{
  TempDir dir;
  FixtureOptions fo;
  fo.width = 32;
  fo.height = 24;
  generate_fixture_clips(10, 2, dir / "data", fo);
  CampaignConfig cfg;
  cfg.manifest = dir / "data" / "manifest.json";
  cfg.output_dir = dir / "out";
  cfg.arms = {true, false};
  cfg.defenses = {DefenseSpec::of(DefenseKind::median3)};
  run_campaign(cfg, *make_backend(cfg.backend));
  const auto records = read_records(cfg.records_path());
  const auto s = analyze(records, load_manifest(cfg.manifest).clips, AnalysisOptions::from(cfg));

  auto sel = [&](auto pred) {
    std::vector<const EvalRecord *> out;
    for (const auto & r : records)
      if (pred(r)) out.push_back(&r);
    return out;
  };
  // 1. mean ΔADE for noise_50
  const auto n50 = sel([](const auto & r) { return r.with_coc && r.defense.is_none() && r.condition.label() == "noise_50"; });
  double m = 0;
  for (auto * r : n50) m += r->delta_ade_m;
  EXPECT_NEAR(row_of(s, "noise_50").mean_delta_ade_m, m / n50.size(), 1e-12);
  // 2. CoC change rate for fog_heavy
  const auto fh = sel([](const auto & r) { return r.with_coc && r.defense.is_none() && r.condition.label() == "fog_heavy"; });
  double k = 0;
  for (auto * r : fh) k += r->coc_changed;
  EXPECT_NEAR(*row_of(s, "fog_heavy").coc_change_pct, 100.0 * k / fh.size(), 1e-12);
  // 3. monitor true positives, pooled
  std::size_t tp = 0;
  for (auto * r : sel([](const auto & r) { return r.with_coc && r.defense.is_none() && !r.condition.is_clean(); }))
    tp += r->coc_changed && r->l2_deviation_m > kUnsafeThresholdM;
  EXPECT_EQ(s.monitor.aggregate.tp, tp);
  // 4. clean mean ADE
  double c = 0;
  const auto cl = sel([](const auto & r) { return r.with_coc && r.condition.is_clean(); });
  for (auto * r : cl) c += r->ade_m;
  EXPECT_NEAR(*s.clean_mean_ade_m, c / cl.size(), 1e-12);
  // 5. mean defended L2 for median3 under dark
  const auto md = sel([](const auto & r) { return r.with_coc && r.defense.label() == "median3" && r.condition.label() == "dark"; });
  double l = 0;
  for (auto * r : md) l += r->l2_deviation_m;
  EXPECT_NEAR(s.defenses->rows[0].mean_l2_by_attack.at("dark"), l / md.size(), 1e-12);
}

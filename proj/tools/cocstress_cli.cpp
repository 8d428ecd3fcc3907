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

// Command-line front end.
//
// Exit codes: 0 success, 1 unexpected error, 2 configuration, input or I/O error,
// 3 backend failure (including trials left in the failure ledger),
// 4 analysis error.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cocstress.hpp"

namespace
{

using namespace cocstress;

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kBackend = 3, kAnalysis = 4 };

struct Common
{
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallelism;
  std::string endpoint;
  std::string records;
  std::string out;
};

void add_common(CLI::App * app, Common & c, bool need_config = true)
{
  auto * opt = app->add_option("-c,--config", c.config, "campaign config (JSON)");
  if (need_config) opt->required();
  app->add_option("--seed", c.seed, "override the campaign seed");
  app->add_option("-j,--parallelism", c.parallelism, "worker threads");
  app->add_option("--endpoint", c.endpoint, "model backend URL (or COCSTRESS_ENDPOINT)");
}

CampaignConfig load(const Common & c)
{
  CampaignConfig cfg = load_campaign_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.parallelism) cfg.parallelism = *c.parallelism;
  std::string endpoint = c.endpoint;
  if (endpoint.empty()) {
    if (const char * env = std::getenv("COCSTRESS_ENDPOINT")) endpoint = env;
  }
  if (!endpoint.empty()) {
    cfg.backend.kind = "http";
    cfg.backend.endpoint = endpoint;
  }
  if (!c.out.empty()) cfg.output_dir = c.out;
  cfg.validate();
  return cfg;
}

std::filesystem::path records_path(const Common & c, const CampaignConfig & cfg)
{
  return c.records.empty() ? cfg.records_path() : std::filesystem::path(c.records);
}

CampaignSummary summarize(const Common & c, const CampaignConfig & cfg)
{
  const auto records = read_records(records_path(c, cfg));
  const auto manifest = load_manifest(cfg.manifest, /*check_frames=*/false);
  return analyze(records, manifest.clips, AnalysisOptions::from(cfg));
}

int run(const CampaignConfig & cfg, bool resume)
{
  auto backend = make_backend(cfg.backend);
  RunOptions opts;
  opts.resume = resume;
  opts.log = [](const std::string & s) { std::cerr << s << '\n'; };
  const auto res = run_campaign(cfg, *backend, opts);
  std::cout << fmt::format(
    "records: {}  new inferences: {}  resumed: {}  failures: {}\n", res.stats.records, res.stats.inferences,
    res.stats.resumed, res.stats.failures);
  std::cout << "record file: " << cfg.records_path().string() << '\n';
  if (res.stats.failures > 0) {
    std::cout << "failure ledger: " << cfg.failures_path().string() << '\n';
    return kBackend;
  }
  return kOk;
}

void print_tables(const CampaignSummary & s, std::initializer_list<const char *> names)
{
  for (const auto & t : summary_tables(s)) {
    for (const char * n : names) {
      if (t.name == n) std::cout << to_text(t) << '\n';
    }
  }
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"cocstress: corruption stress tests for trajectory + explanation driving models"};
  app.require_subcommand(1);

  Common common;

  auto * fixtures = app.add_subcommand("fixtures", "generate a synthetic clip dataset");
  std::string fx_out = "fixtures";
  std::size_t fx_n = 20;
  std::uint64_t fx_seed = 42;
  fixtures->add_option("-o,--out", fx_out, "output directory");
  fixtures->add_option("-n,--clips", fx_n, "number of clips");
  fixtures->add_option("--seed", fx_seed, "generator seed");

  auto * perturb = app.add_subcommand("perturb", "write corrupted (and defended) frames without running a model");
  add_common(perturb, common);
  perturb->add_option("-o,--out", common.out, "output directory (default: <output_dir>/perturbed)");

  auto * run_cmd = app.add_subcommand("run", "execute the evaluation grid");
  add_common(run_cmd, common);
  bool no_resume = false;
  run_cmd->add_flag("--no-resume", no_resume, "ignore an existing record file");

  auto * analyze_cmd = app.add_subcommand("analyze", "summarize a record file");
  add_common(analyze_cmd, common);
  analyze_cmd->add_option("--records", common.records, "record file (default: <output_dir>/records.jsonl)");

  auto * monitor_cmd = app.add_subcommand("monitor-eval", "CoC-change monitor precision/recall/FPR/AUROC");
  add_common(monitor_cmd, common);
  monitor_cmd->add_option("--records", common.records, "record file");

  auto * defense_cmd = app.add_subcommand("defense-eval", "run the grid with all six defenses and report their effect");
  add_common(defense_cmd, common);

  auto * ablate_cmd = app.add_subcommand("ablate", "run with and without CoC and report the ablation table");
  add_common(ablate_cmd, common);

  auto * report_cmd = app.add_subcommand("report", "write CSV, text, JSON and SVG report files");
  add_common(report_cmd, common);
  report_cmd->add_option("--records", common.records, "record file");
  std::string report_dir;
  report_cmd->add_option("-o,--out", report_dir, "report directory (default: <output_dir>/report)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fixtures->parsed()) {
      const auto m = generate_fixture_clips(fx_n, fx_seed, fx_out);
      std::cout << fmt::format("wrote {} clips to {}\n", m.clips.size(), (std::filesystem::path(fx_out) / "manifest.json").string());
      return kOk;
    }
    if (perturb->parsed()) {
      const std::string out_override = common.out;
      common.out.clear();
      const auto cfg = load(common);
      const auto dir = out_override.empty() ? cfg.output_dir / "perturbed" : std::filesystem::path(out_override);
      const auto manifest = load_manifest(cfg.manifest);
      std::size_t n = 0;
      for (const auto & clip : manifest.clips) {
        std::vector<Image> clean;
        for (const auto & f : clip.frames) clean.push_back(read_ppm(manifest.frame_path(f).string()));
        for (const auto & p : cfg.perturbations) {
          const auto frames = perturb_frames(clean, clip.frames, p, cfg.seed, clip.id, cfg.fog);
          std::vector<DefenseSpec> ds{DefenseSpec{}};
          ds.insert(ds.end(), cfg.defenses.begin(), cfg.defenses.end());
          for (const auto & d : ds) {
            const auto sub = dir / clip.id / p.label() / d.label();
            std::filesystem::create_directories(sub);
            for (std::size_t i = 0; i < frames.size(); ++i) {
              const auto img = d.is_none() ? frames[i] : apply_defense(frames[i], d);
              write_ppm(img, (sub / fmt::format("t{}_{}.ppm", clip.frames[i].timestep, clip.frames[i].view)).string());
              ++n;
            }
          }
        }
      }
      std::cout << fmt::format("wrote {} frames under {}\n", n, dir.string());
      return kOk;
    }
    if (run_cmd->parsed()) {
      return run(load(common), !no_resume);
    }
    if (analyze_cmd->parsed()) {
      const auto cfg = load(common);
      const auto s = summarize(common, cfg);
      print_tables(s, {"attacks", "dose_response", "fits", "partition", "partition_tests", "correlation", "baseline"});
      for (const auto & n : s.notes) std::cout << "note: " << n << '\n';
      return kOk;
    }
    if (monitor_cmd->parsed()) {
      const auto cfg = load(common);
      print_tables(summarize(common, cfg), {"monitor"});
      return kOk;
    }
    if (defense_cmd->parsed()) {
      auto cfg = load(common);
      if (cfg.defenses.empty()) cfg.defenses = standard_defenses();
      const int rc = run(cfg, true);
      const auto records = read_records(cfg.records_path());
      const auto manifest = load_manifest(cfg.manifest, false);
      print_tables(analyze(records, manifest.clips, AnalysisOptions::from(cfg)), {"defenses", "severity"});
      return rc;
    }
    if (ablate_cmd->parsed()) {
      auto cfg = load(common);
      cfg.arms = {true, false};
      const int rc = run(cfg, true);
      const auto records = read_records(cfg.records_path());
      const auto manifest = load_manifest(cfg.manifest, false);
      print_tables(analyze(records, manifest.clips, AnalysisOptions::from(cfg)), {"ablation"});
      return rc;
    }
    if (report_cmd->parsed()) {
      const auto cfg = load(common);
      const auto dir = report_dir.empty() ? cfg.output_dir / "report" : std::filesystem::path(report_dir);
      const auto files = write_report(summarize(common, cfg), dir);
      std::cout << fmt::format("wrote {} files to {}\n", files.size(), dir.string());
      return kOk;
    }
  } catch (const ConfigError & e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const ValidationError & e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError & e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kConfig;
  } catch (const BackendError & e) {
    std::cerr << "backend error: " << e.what() << '\n';
    return kBackend;
  } catch (const AnalysisError & e) {
    std::cerr << "analysis error: " << e.what() << '\n';
    return kAnalysis;
  } catch (const StatsError & e) {
    std::cerr << "analysis error: " << e.what() << '\n';
    return kAnalysis;
  } catch (const RecordError & e) {
    std::cerr << "analysis error: " << e.what() << '\n';
    return kAnalysis;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}

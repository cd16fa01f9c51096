#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "refscore/error.hpp"
#include "refscore/pipeline.hpp"

namespace {

using namespace refscore;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method, target, out_dir, metrics_csv, resolver_url, resolver_cache, submissions, results, uoa;
  std::optional<int> threshold;
  bool log_metrics = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON configuration file");
  cmd->add_option("--seed", o.seed, "top-level random seed");
  cmd->add_option("--out-dir", o.out_dir, "directory for all artifacts");
  cmd->add_option("--target", o.target, "four_star, three_plus or both");
  cmd->add_flag("--quiet", o.quiet, "only log warnings and errors");
}

pipeline::RunConfig resolve(const Overrides& o) {
  pipeline::RunConfig cfg = o.config.empty() ? pipeline::RunConfig{} : pipeline::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.method) cfg.method = pipeline::parse_method(*o.method);
  if (o.target) cfg.target = em::parse_cv_target(*o.target);
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.metrics_csv) cfg.metrics_csv = *o.metrics_csv;
  if (o.log_metrics) cfg.log_metrics = true;
  if (o.resolver_url) cfg.resolver.url = *o.resolver_url;
  if (o.resolver_cache) cfg.resolver.cache = *o.resolver_cache;
  if (o.submissions) cfg.submissions = *o.submissions;
  if (o.results) cfg.results = *o.results;
  if (o.uoa) cfg.uoa = *o.uoa;
  if (o.threshold) cfg.threshold = *o.threshold;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Journal-level quality scores from aggregate research assessment profiles"};
  app.require_subcommand(1);
  Overrides o;

  auto* ingest = app.add_subcommand("ingest", "cluster journals and build the counts matrix and profiles");
  add_common(ingest, o);
  ingest->add_option("--submissions", o.submissions, "submissions CSV");
  ingest->add_option("--results", o.results, "results CSV");
  ingest->add_option("--uoa", o.uoa, "keep only this unit of assessment");
  ingest->add_option("--threshold", o.threshold, "minimum articles for a named journal column");
  ingest->add_option("--resolver-url", o.resolver_url, "DOI metadata service base URL");
  ingest->add_option("--resolver-cache", o.resolver_cache, "DOI metadata cache file");

  auto* fit = app.add_subcommand("fit", "fit journal probabilities and compute predictions and indices");
  add_common(fit, o);
  fit->add_option("--method", o.method, "hmc, em or both");

  auto* cv = app.add_subcommand("cv", "cross-validate the pseudo-data strength");
  add_common(cv, o);

  auto* report = app.add_subcommand("report", "write a text summary of the fit artifacts");
  add_common(report, o);
  report->add_option("--metrics-csv", o.metrics_csv, "external journal scores (journal_key, issn, score)");
  report->add_flag("--log-metrics", o.log_metrics, "compare against log10 of the scores");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  spdlog::set_level(o.quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    const auto cfg = resolve(o);
    if (ingest->parsed()) {
      const auto s = pipeline::cmd_ingest(cfg);
      fmt::print("{} outputs, {} institutions, {} journals, {} named columns\n", s.outputs, s.institutions, s.journals,
                 s.named_columns);
    } else if (fit->parsed()) {
      const auto s = pipeline::cmd_fit(cfg);
      for (std::size_t k = 0; k < 2; ++k) {
        if (s.em_hmc_correlation[k]) {
          fmt::print("EM vs HMC logit correlation ({}): {:.4f}\n", k == 0 ? "4*" : "3*+", *s.em_hmc_correlation[k]);
        }
      }
      if (s.median_delta) fmt::print("median delta {:.4f}, median funding delta {:.4f}\n", *s.median_delta, *s.median_money);
      if (s.max_rhat > 0.0) fmt::print("max Rhat {:.4f}, {} divergent transitions\n", s.max_rhat, s.divergences);
    } else if (cv->parsed()) {
      const auto s = pipeline::cmd_cv(cfg);
      for (std::size_t g = 0; g < s.grid.size(); ++g) fmt::print("{:>10g} {:.5f}\n", s.grid[g], s.mean_delta[g]);
      fmt::print("selected pseudo_strength {}\n", s.best);
    } else if (report->parsed()) {
      pipeline::cmd_report(cfg);
      fmt::print("wrote {}\n", (cfg.out_dir / "report.txt").string());
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 3;
  }
  return 0;
}

#include "refscore/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "refscore/csv.hpp"
#include "refscore/error.hpp"
#include "refscore/ingest.hpp"
#include "refscore/kernels.hpp"
#include "refscore/model.hpp"
#include "refscore/numeric.hpp"
#include "refscore/rng.hpp"
#include "refscore/stats.hpp"

namespace refscore::pipeline {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using csv::format_double;

constexpr const char* kCounts = "counts.csv";
constexpr const char* kProfiles = "profiles.csv";
constexpr const char* kClustering = "clustering_report.csv";
constexpr const char* kEnrichment = "enrichment_report.csv";
constexpr const char* kLeague = "league_table.csv";
constexpr const char* kPredictions = "predictions.csv";
constexpr const char* kIndices = "indices.csv";
constexpr const char* kProbitGap = "probit_gap.csv";
constexpr const char* kThreeStar = "three_star.csv";
constexpr const char* kEmVsHmc = "em_vs_hmc.csv";
constexpr const char* kFitSummary = "fit_summary.json";
constexpr const char* kCvTable = "cv_table.csv";
constexpr const char* kCvSummary = "cv_summary.csv";
constexpr const char* kReport = "report.txt";
constexpr const char* kCorrelation = "metric_correlation.csv";

std::string trace_name(TargetLevel t) { return fmt::format("trace_{}.csv", to_string(t)); }
std::string rhat_name(TargetLevel t) { return fmt::format("rhat_{}.csv", to_string(t)); }
std::string em_name(TargetLevel t) { return fmt::format("em_fit_{}.csv", to_string(t)); }

std::vector<TargetLevel> levels_of(em::CvTarget t) {
  switch (t) {
    case em::CvTarget::four_star: return {TargetLevel::four_star};
    case em::CvTarget::three_plus: return {TargetLevel::three_plus};
    case em::CvTarget::both: break;
  }
  return {TargetLevel::four_star, TargetLevel::three_plus};
}

std::size_t level_index(TargetLevel t) { return t == TargetLevel::four_star ? 0 : 1; }

class Writer {
 public:
  explicit Writer(const fs::path& dir) : dir_(dir) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw ConfigError(fmt::format("cannot create output directory '{}': {}", dir_.string(), ec.message()));
  }
  void write(const std::string& name, std::string_view contents) {
    csv::write_file_atomic(dir_ / name, contents);
    written_.push_back(name);
  }
  [[nodiscard]] const std::vector<std::string>& written() const { return written_; }

 private:
  fs::path dir_;
  std::vector<std::string> written_;
};

csv::Table read_artifact(const RunConfig& cfg, const char* name, const char* producer) {
  const auto path = cfg.out_dir / name;
  if (!fs::exists(path)) {
    throw DataError(fmt::format("missing upstream artifact '{}'; run the '{}' subcommand first", path.string(), producer));
  }
  return csv::read_file(path);
}

csv::Table read_input(const fs::path& path, const char* what) {
  if (path.empty()) throw ConfigError(fmt::format("no {} file configured", what));
  if (!fs::exists(path)) throw DataError(fmt::format("{} file '{}' does not exist", what, path.string()));
  return csv::read_file(path);
}

struct Dataset {
  CountsMatrix counts;
  std::vector<InstitutionProfile> profiles;
};

Dataset load_dataset(const RunConfig& cfg) {
  Dataset d;
  d.counts = ingest::parse_counts(read_artifact(cfg, kCounts, "ingest"));
  d.profiles = ingest::parse_profiles(read_artifact(cfg, kProfiles, "ingest"));
  check_alignment(d.counts, d.profiles);
  return d;
}

std::string na_or(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

const char* status_name(sampler::DiagnosticStatus s) {
  switch (s) {
    case sampler::DiagnosticStatus::ok: return "ok";
    case sampler::DiagnosticStatus::not_applicable_constant: return "constant";
    case sampler::DiagnosticStatus::too_few_draws: return "too_few_draws";
  }
  return "?";
}

/// Journal probabilities per draw, (draw x journal), chains concatenated.
std::vector<double> pi_draws(const sampler::PosteriorDraws& d, std::size_t journals) {
  const std::size_t n = d.chains * d.iterations;
  std::vector<double> out(n * journals);
  for (std::size_t c = 0; c < d.chains; ++c) {
    for (std::size_t t = 0; t < d.iterations; ++t) {
      for (std::size_t j = 0; j < journals; ++j) {
        out[(c * d.iterations + t) * journals + j] = num::sigmoid(d.at(c, t, j));
      }
    }
  }
  return out;
}

struct LevelFit {
  TargetLevel level = TargetLevel::four_star;
  std::optional<sampler::PosteriorDraws> draws;
  std::vector<double> pi;            // (draw x journal), HMC only
  std::size_t n_draws = 0;
  std::vector<double> median_pi;     // point estimate per journal (HMC median, else EM)
  std::vector<double> median_logit;  // HMC only
  std::vector<IntervalSummary> intervals;
  std::optional<em::EmResult> em;
  double max_rhat = 0.0;
};

std::string predictions_csv(const std::vector<InstitutionProfile>& prof, const std::vector<metrics::Prediction>& pred,
                            const metrics::FundingConfig& f) {
  std::string out = csv::format_row({"institution", "fte", "y4", "yhat4", "y3", "yhat3", "funding_actual_units",
                                     "funding_predicted_units"});
  for (std::size_t i = 0; i < prof.size(); ++i) {
    const auto& y = prof[i];
    const auto& p = pred[i];
    const double n = y.total_outputs;
    const double actual = y.fte * (f.r4() * y.y4 + f.r3 * y.y3()) / n;
    const double predicted = y.fte * (f.r4() * p.yhat4 + f.r3 * p.yhat3) / n;
    out += csv::format_row({y.institution, format_double(y.fte), std::to_string(y.y4), format_double(p.yhat4),
                            std::to_string(y.y3()), format_double(p.yhat3), format_double(actual),
                            format_double(predicted)});
  }
  return out;
}

std::string fmt_pct(double x) { return fmt::format("{:.1f}%", 100.0 * x); }

}  // namespace

Method parse_method(std::string_view s) {
  if (s == "hmc") return Method::hmc;
  if (s == "em") return Method::em;
  if (s == "both") return Method::both;
  throw ConfigError(fmt::format("unknown method '{}' (expected hmc, em or both)", s));
}

const char* to_string(Method m) noexcept {
  switch (m) {
    case Method::hmc: return "hmc";
    case Method::em: return "em";
    case Method::both: return "both";
  }
  return "?";
}

void RunConfig::validate() const {
  if (threshold < 1) throw ConfigError("threshold must be at least 1");
  if (index_draws < 1) throw ConfigError("index_draws must be at least 1");
  if (!(funding.r3 > 0.0)) throw ConfigError("funding.r3 must be positive");
  if (resolver.enabled() && !(resolver.timeout_seconds > 0.0)) throw ConfigError("resolver timeout must be positive");
  if (resolver.retries < 1) throw ConfigError("resolver retries must be at least 1");
  chains.validate();
  em.validate();
  if (cv.folds < 2) throw ConfigError("cv.folds must be at least 2");
  if (cv.grid.empty()) throw ConfigError("cv.grid must not be empty");
  for (double g : cv.grid) {
    if (!(g > 0.0)) throw ConfigError("cv.grid values must be positive");
  }
}

void apply_json(RunConfig& cfg, const std::string& json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const auto path_of = [&](const json& v) {
    fs::path p = v.get<std::string>();
    return p.is_relative() ? base_dir / p : p;
  };
  const auto check_keys = [](const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [k, _] : obj.items()) {
      if (!allowed.contains(k)) throw ConfigError(fmt::format("unknown config key '{}{}'", where.empty() ? "" : where + ".", k));
    }
  };
  try {
    check_keys(j,
               {"submissions", "results", "metrics_csv", "log_metrics", "out_dir", "uoa", "seed", "threshold", "method",
                "target", "resolver", "chains", "em", "cv", "funding", "index_draws"},
               "");
    if (j.contains("submissions")) cfg.submissions = path_of(j["submissions"]);
    if (j.contains("results")) cfg.results = path_of(j["results"]);
    if (j.contains("metrics_csv")) cfg.metrics_csv = path_of(j["metrics_csv"]);
    if (j.contains("log_metrics")) cfg.log_metrics = j["log_metrics"].get<bool>();
    if (j.contains("out_dir")) cfg.out_dir = path_of(j["out_dir"]);
    if (j.contains("uoa")) cfg.uoa = j["uoa"].get<std::string>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("threshold")) cfg.threshold = j["threshold"].get<int>();
    if (j.contains("method")) cfg.method = parse_method(j["method"].get<std::string>());
    if (j.contains("target")) cfg.target = em::parse_cv_target(j["target"].get<std::string>());
    if (j.contains("index_draws")) cfg.index_draws = j["index_draws"].get<std::size_t>();
    if (j.contains("resolver")) {
      const auto& r = j["resolver"];
      check_keys(r, {"url", "cache", "timeout", "retries", "max_in_flight"}, "resolver");
      if (r.contains("url")) cfg.resolver.url = r["url"].get<std::string>();
      if (r.contains("cache")) cfg.resolver.cache = path_of(r["cache"]).string();
      if (r.contains("timeout")) cfg.resolver.timeout_seconds = r["timeout"].get<double>();
      if (r.contains("retries")) cfg.resolver.retries = r["retries"].get<int>();
      if (r.contains("max_in_flight")) cfg.resolver.max_in_flight = r["max_in_flight"].get<std::size_t>();
    }
    if (j.contains("chains")) {
      const auto& c = j["chains"];
      check_keys(c, {"chains", "warmup", "samples", "target_accept", "max_depth"}, "chains");
      if (c.contains("chains")) cfg.chains.chains = c["chains"].get<int>();
      if (c.contains("warmup")) cfg.chains.warmup_iters = c["warmup"].get<int>();
      if (c.contains("samples")) cfg.chains.sample_iters = c["samples"].get<int>();
      if (c.contains("target_accept")) cfg.chains.target_accept = c["target_accept"].get<double>();
      if (c.contains("max_depth")) cfg.chains.max_leapfrog_depth = c["max_depth"].get<int>();
    }
    if (j.contains("em")) {
      const auto& e = j["em"];
      check_keys(e, {"pseudo_strength", "tol", "max_iters"}, "em");
      if (e.contains("pseudo_strength")) cfg.em.pseudo_strength = e["pseudo_strength"].get<double>();
      if (e.contains("tol")) cfg.em.tol = e["tol"].get<double>();
      if (e.contains("max_iters")) cfg.em.max_iters = e["max_iters"].get<int>();
    }
    if (j.contains("cv")) {
      const auto& c = j["cv"];
      check_keys(c, {"folds", "grid"}, "cv");
      if (c.contains("folds")) cfg.cv.folds = c["folds"].get<int>();
      if (c.contains("grid")) cfg.cv.grid = c["grid"].get<std::vector<double>>();
    }
    if (j.contains("funding")) {
      const auto& f = j["funding"];
      check_keys(f, {"r3"}, "funding");
      if (f.contains("r3")) cfg.funding.r3 = f["r3"].get<double>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

RunConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError(fmt::format("config file '{}' does not exist", path.string()));
  RunConfig cfg;
  apply_json(cfg, csv::read_text(path), path.parent_path());
  return cfg;
}

std::vector<std::string> artifact_names() {
  std::vector<std::string> v{kCounts,    kProfiles,  kClustering, kEnrichment, kLeague,     kPredictions,
                             kIndices,   kProbitGap, kThreeStar,  kEmVsHmc,    kFitSummary, kCvTable,
                             kCvSummary, kReport,    kCorrelation};
  for (auto t : {TargetLevel::four_star, TargetLevel::three_plus}) {
    v.push_back(trace_name(t));
    v.push_back(rhat_name(t));
    v.push_back(em_name(t));
  }
  return v;
}

// ---------------------------------------------------------------------------

IngestSummary cmd_ingest(const RunConfig& cfg) {
  cfg.validate();
  auto outputs = ingest::read_submissions(read_input(cfg.submissions, "submissions"), cfg.uoa);
  const auto results = ingest::read_results(read_input(cfg.results, "results"), cfg.uoa);
  Writer out(cfg.out_dir);
  IngestSummary s;
  s.outputs = outputs.size();

  if (cfg.resolver.enabled()) {
    std::shared_ptr<ingest::MetadataResolver> live;
    if (!cfg.resolver.url.empty()) {
      live = std::make_shared<ingest::HttpResolver>(cfg.resolver.url, cfg.resolver.timeout_seconds, cfg.resolver.retries);
    }
    std::shared_ptr<ingest::MetadataResolver> resolver = live;
    if (!cfg.resolver.cache.empty()) resolver = std::make_shared<ingest::CachedResolver>(cfg.resolver.cache, live);
    const auto report = ingest::enrich_with_doi_metadata(outputs, *resolver, cfg.resolver.max_in_flight);
    spdlog::info("DOI metadata: {} looked up, {} resolved, {} not found, {} failed", report.dois, report.resolved,
                 report.not_found, report.failed);
    s.unresolved_dois = report.not_found + report.failed;
    out.write(kEnrichment, ingest::enrichment_report_csv(report));
  }

  const auto clusters = ingest::cluster_journals(outputs);
  const auto agg = ingest::aggregate(clusters, outputs, cfg.threshold);
  const auto profiles = ingest::build_profiles(results, agg.counts);
  out.write(kCounts, ingest::counts_csv(agg.counts));
  out.write(kProfiles, ingest::profiles_csv(profiles));
  out.write(kClustering, ingest::clustering_report_csv(clusters, agg));
  s.institutions = agg.counts.rows();
  s.journals = clusters.size();
  s.named_columns = agg.column_journal_ids.size();
  spdlog::info("{} outputs from {} institutions in {} journals; {} named at threshold {}", s.outputs, s.institutions,
               s.journals, s.named_columns, cfg.threshold);
  return s;
}

// ---------------------------------------------------------------------------

FitSummary cmd_fit(const RunConfig& cfg) {
  cfg.validate();
  const auto data = load_dataset(cfg);
  const auto& counts = data.counts;
  const auto& profiles = data.profiles;
  const std::size_t J = counts.cols();
  Writer out(cfg.out_dir);
  FitSummary summary;
  json js;
  js["method"] = to_string(cfg.method);
  js["seed"] = cfg.seed;

  const bool run_hmc = cfg.method != Method::em;
  const bool run_em = cfg.method != Method::hmc;
  std::vector<LevelFit> fits;

  for (const auto level : levels_of(cfg.target)) {
    LevelFit f;
    f.level = level;
    json jl;
    if (run_em) {
      auto ec = cfg.em;
      ec.init_seed = substream_seed(cfg.seed, "fit.em", level_index(level));
      f.em = em::em_run(counts, profiles, level, ec);
      const auto& fit = f.em->fit;
      const auto lo = fit.log_odds();
      std::string csv = csv::format_row({"journal", "beta_hat", "log_odds", "probability", "identified"});
      for (std::size_t j = 0; j < J; ++j) {
        csv += csv::format_row({counts.columns[j], format_double(fit.beta_hat[j]), format_double(lo[j]),
                                format_double(num::sigmoid(lo[j])), fit.identified[j] ? "1" : "0"});
      }
      out.write(em_name(level), csv);
      jl["em"] = {{"converged", f.em->converged},       {"oscillating", f.em->oscillating},
                  {"iterations", f.em->iterations},     {"mu_hat", fit.mu_hat},
                  {"alpha_hat", fit.alpha_hat},         {"reference", counts.columns[fit.reference]},
                  {"pseudo_strength", cfg.em.pseudo_strength}};
      if (!f.em->converged) spdlog::warn("EM for {} did not converge in {} iterations", to_string(level), f.em->iterations);
      f.median_pi = fit.probabilities();
    }
    if (run_hmc) {
      const PoissonBinomialModel m(counts, profiles, level);
      auto cc = cfg.chains;
      cc.seed = substream_seed(cfg.seed, "fit.hmc", level_index(level));
      f.draws = sampler::run_chains(
          m, [&m](Rng& rng) { return m.initial_point(rng); }, cc);
      const auto& d = *f.draws;
      out.write(trace_name(level), sampler::draws_csv(d));
      const auto sums = sampler::summarize(d);
      std::string csv = csv::format_row(
          {"parameter", "mean", "sd", "median", "lo95", "hi95", "rhat", "ess_bulk", "status"});
      for (const auto& s : sums) {
        csv += csv::format_row({s.name, format_double(s.mean), format_double(s.sd), format_double(s.median),
                                format_double(s.lo95), format_double(s.hi95), na_or(s.rhat), na_or(s.ess_bulk),
                                status_name(s.status)});
        if (s.rhat) f.max_rhat = std::max(f.max_rhat, *s.rhat);
      }
      out.write(rhat_name(level), csv);
      summary.max_rhat = std::max(summary.max_rhat, f.max_rhat);
      summary.divergences += d.divergences();
      if (d.unreliable()) {
        spdlog::warn("{}: {:.2f}% of transitions diverged; treat the posterior with caution", to_string(level),
                     100.0 * d.divergent_fraction());
      }
      f.n_draws = d.chains * d.iterations;
      f.pi = pi_draws(d, J);
      f.median_pi.assign(J, 0.0);
      f.median_logit.assign(J, 0.0);
      f.intervals.resize(J);
      std::vector<double> col(f.n_draws);
      for (std::size_t j = 0; j < J; ++j) {
        for (std::size_t k = 0; k < f.n_draws; ++k) col[k] = f.pi[k * J + j];
        f.intervals[j] = summarize_sample(col);
        f.median_pi[j] = f.intervals[j].median;
        f.median_logit[j] = stats::median(d.pooled(j));
      }
      jl["hmc"] = {{"max_rhat", f.max_rhat},
                   {"divergences", d.divergences()},
                   {"divergent_fraction", d.divergent_fraction()},
                   {"unreliable", d.unreliable()},
                   {"draws", f.n_draws}};
    }
    if (run_em && run_hmc) {
      const auto lo = f.em->fit.log_odds();
      const double r = stats::pearson(lo, f.median_logit);
      summary.em_hmc_correlation[level_index(level)] = r;
      jl["em_hmc_pearson_logit"] = r;
    }
    js["levels"][to_string(level)] = jl;
    fits.push_back(std::move(f));
  }

  // League table: one block per level, descending median.
  {
    std::string csv = csv::format_row({"journal", "target", "median", "lo50", "hi50", "lo95", "hi95", "article_count"});
    for (const auto& f : fits) {
      std::vector<std::size_t> order(J);
      for (std::size_t j = 0; j < J; ++j) order[j] = j;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return f.median_pi[a] > f.median_pi[b]; });
      for (auto j : order) {
        const bool iv = !f.intervals.empty();
        const auto na = std::string("NA");
        csv += csv::format_row({counts.columns[j], to_string(f.level), format_double(f.median_pi[j]),
                                iv ? format_double(f.intervals[j].lo50) : na, iv ? format_double(f.intervals[j].hi50) : na,
                                iv ? format_double(f.intervals[j].lo95) : na, iv ? format_double(f.intervals[j].hi95) : na,
                                std::to_string(counts.col_total(j))});
      }
    }
    out.write(kLeague, csv);
  }

  if (run_em && run_hmc) {
    std::string csv = csv::format_row({"journal", "target", "em_logit", "hmc_median_logit"});
    for (const auto& f : fits) {
      const auto lo = f.em->fit.log_odds();
      for (std::size_t j = 0; j < J; ++j) {
        csv += csv::format_row(
            {counts.columns[j], to_string(f.level), format_double(lo[j]), format_double(f.median_logit[j])});
      }
    }
    out.write(kEmVsHmc, csv);
  }

  if (fits.size() == 2) {
    const auto& f4 = fits[0];
    const auto& f34 = fits[1];
    const auto pred = metrics::predict(counts, f4.median_pi, f34.median_pi);
    out.write(kPredictions, predictions_csv(profiles, pred, cfg.funding));

    std::vector<double> delta, money;
    if (run_hmc) {
      // Pair draws of the two fits in natural order, thinned to index_draws.
      const std::size_t n = std::min({f4.n_draws, f34.n_draws, cfg.index_draws});
      const auto i4 = thin_indices(f4.n_draws, n), i34 = thin_indices(f34.n_draws, n);
      std::vector<double> d4(n * J), d34(n * J);
      for (std::size_t k = 0; k < n; ++k) {
        std::copy_n(f4.pi.begin() + static_cast<std::ptrdiff_t>(i4[k] * J), J, d4.begin() + static_cast<std::ptrdiff_t>(k * J));
        std::copy_n(f34.pi.begin() + static_cast<std::ptrdiff_t>(i34[k] * J), J,
                    d34.begin() + static_cast<std::ptrdiff_t>(k * J));
      }
      kernels::draw_indices(counts, profiles, d4, d34, n, cfg.funding.r3, kernels::Exec::parallel, delta, money);

      const auto three = derive_three_star(f4.pi, f4.n_draws, f34.pi, f34.n_draws, J);
      std::string csv = csv::format_row(
          {"journal", "median", "lo50", "hi50", "lo95", "hi95", "negative_fraction", "flagged"});
      for (std::size_t j = 0; j < J; ++j) {
        const auto& t = three.per_journal[j];
        csv += csv::format_row({counts.columns[j], format_double(t.summary.median), format_double(t.summary.lo50),
                                format_double(t.summary.hi50), format_double(t.summary.lo95),
                                format_double(t.summary.hi95), format_double(t.negative_fraction),
                                t.flagged ? "1" : "0"});
      }
      out.write(kThreeStar, csv);
    } else {
      delta.push_back(metrics::dissimilarity(profiles, pred));
      money.push_back(metrics::money_redistribution(profiles, pred, cfg.funding));
    }
    std::string csv = csv::format_row({"draw", "delta", "delta_money"});
    for (std::size_t k = 0; k < delta.size(); ++k) {
      csv += csv::format_row({std::to_string(k + 1), format_double(delta[k]), format_double(money[k])});
    }
    out.write(kIndices, csv);
    summary.median_delta = stats::median(delta);
    summary.median_money = stats::median(money);
    js["indices"] = {{"median_delta", *summary.median_delta},
                     {"median_delta_money", *summary.median_money},
                     {"draws", delta.size()}};

    try {
      const auto g = metrics::probit_gap(f4.median_pi, f34.median_pi);
      std::string pg = csv::format_row({"journal", "pi4", "pi34", "probit4", "gap", "status"});
      std::map<std::size_t, std::size_t> pos;
      for (std::size_t k = 0; k < g.included.size(); ++k) pos[g.included[k]] = k;
      const std::set<std::size_t> flagged(g.flagged.begin(), g.flagged.end());
      for (std::size_t j = 0; j < J; ++j) {
        const auto it = pos.find(j);
        const bool in = it != pos.end();
        pg += csv::format_row({counts.columns[j], format_double(f4.median_pi[j]), format_double(f34.median_pi[j]),
                               in ? format_double(g.probit4[it->second]) : "NA",
                               in ? format_double(g.gap[it->second]) : "NA",
                               !in ? "excluded" : (flagged.contains(j) ? "flagged" : "ok")});
      }
      out.write(kProbitGap, pg);
      js["probit_gap"] = {{"slope", g.fit.slope}, {"intercept", g.fit.intercept}, {"flagged", g.flagged.size()}};
    } catch (const InvalidInput& e) {
      spdlog::warn("probit-gap diagnostic skipped: {}", e.what());
      js["probit_gap"] = {{"skipped", e.what()}};
    }
  } else {
    spdlog::info("single target level fitted; predictions and indices need both levels and are skipped");
  }

  out.write(kFitSummary, js.dump(2) + "\n");
  summary.files = out.written();
  return summary;
}

// ---------------------------------------------------------------------------

CvSummary cmd_cv(const RunConfig& cfg) {
  cfg.validate();
  const auto data = load_dataset(cfg);
  auto cv = cfg.cv;
  cv.seed = substream_seed(cfg.seed, "cv");
  cv.em = cfg.em;
  const auto r = em::cross_validate(data.counts, data.profiles, cfg.target, cv);
  Writer out(cfg.out_dir);
  std::string table = csv::format_row({"pseudo_strength", "fold", "delta", "unseen_columns"});
  for (const auto& row : r.rows) {
    table += csv::format_row({format_double(row.pseudo_strength), std::to_string(row.fold), format_double(row.delta),
                              std::to_string(row.unseen_columns)});
  }
  out.write(kCvTable, table);
  std::string sum = csv::format_row({"pseudo_strength", "mean_delta", "selected"});
  for (std::size_t g = 0; g < r.grid.size(); ++g) {
    sum += csv::format_row(
        {format_double(r.grid[g]), format_double(r.mean_delta[g]), r.grid[g] == r.best ? "1" : "0"});
  }
  out.write(kCvSummary, sum);
  if (r.unseen_total > 0) {
    spdlog::info("{} held-out cells fell in columns unseen in training; predicted from the reference column",
                 r.unseen_total);
  }
  spdlog::info("cross-validation ({}) selects pseudo_strength {}", em::to_string(cfg.target), r.best);
  return {r.best, r.grid, r.mean_delta};
}

// ---------------------------------------------------------------------------

void cmd_report(const RunConfig& cfg) {
  const auto league = read_artifact(cfg, kLeague, "fit");
  const auto pred = read_artifact(cfg, kPredictions, "fit");
  const auto idx = read_artifact(cfg, kIndices, "fit");
  Writer out(cfg.out_dir);
  std::string text;
  const auto line = [&](std::string s) {
    text += s;
    text += '\n';
  };

  // League tables.
  const auto cj = league.require_column("journal", kLeague), ct = league.require_column("target", kLeague),
             cm = league.require_column("median", kLeague), clo = league.require_column("lo95", kLeague),
             chi = league.require_column("hi95", kLeague), cn = league.require_column("article_count", kLeague);
  std::map<std::string, std::vector<const std::vector<std::string>*>> by_target;
  for (const auto& r : league.rows) by_target[r[ct]].push_back(&r);
  std::vector<metrics::JournalKey> keys;
  for (const char* target : {"four_star", "three_plus"}) {
    auto it = by_target.find(target);
    if (it == by_target.end()) continue;
    auto rows = it->second;
    std::stable_sort(rows.begin(), rows.end(), [&](auto* a, auto* b) {
      return csv::parse_double((*a)[cm], kLeague) > csv::parse_double((*b)[cm], kLeague);
    });
    line(fmt::format("League table: probability of a {} rating (posterior median, 95% interval)",
                     std::string(target) == "four_star" ? "4*" : "3* or 4*"));
    for (const auto* r : rows) {
      const double med = csv::parse_double((*r)[cm], kLeague);
      const auto lo = (*r)[clo], hi = (*r)[chi];
      line(fmt::format("  {:<50} {:>6.3f}  {}  n={}", (*r)[cj], med,
                       lo == "NA" ? std::string("(point estimate)")
                                  : fmt::format("[{:.3f}, {:.3f}]", csv::parse_double(lo, kLeague),
                                                csv::parse_double(hi, kLeague)),
                       (*r)[cn]));
      if (std::string(target) == "four_star") keys.push_back({(*r)[cj], {}, med});
    }
    line("");
  }

  // Predicted vs actual.
  line("Predicted vs actual outputs (4* and 3*)");
  line(fmt::format("  {:<40} {:>6} {:>8} {:>6} {:>8}", "institution", "y4", "yhat4", "y3", "yhat3"));
  const auto pi = pred.require_column("institution", kPredictions), p4 = pred.require_column("y4", kPredictions),
             ph4 = pred.require_column("yhat4", kPredictions), p3 = pred.require_column("y3", kPredictions),
             ph3 = pred.require_column("yhat3", kPredictions);
  for (const auto& r : pred.rows) {
    line(fmt::format("  {:<40} {:>6} {:>8.1f} {:>6} {:>8.1f}", r[pi], r[p4], csv::parse_double(r[ph4], kPredictions),
                     r[p3], csv::parse_double(r[ph3], kPredictions)));
  }
  line("");

  // Indices.
  std::vector<double> delta, money;
  const auto cd = idx.require_column("delta", kIndices), cmo = idx.require_column("delta_money", kIndices);
  for (const auto& r : idx.rows) {
    delta.push_back(csv::parse_double(r[cd], kIndices));
    money.push_back(csv::parse_double(r[cmo], kIndices));
  }
  if (delta.empty()) throw DataError(fmt::format("'{}' has no rows", (cfg.out_dir / kIndices).string()));
  const double md = stats::median(delta), mm = stats::median(money);
  line(fmt::format("Index of dissimilarity: median {} ({}) over {} draws", format_double(md), fmt_pct(md), delta.size()));
  line(fmt::format("Funding redistribution: median {} ({})", format_double(mm), fmt_pct(mm)));
  line("");

  // External metrics.
  if (cfg.metrics_csv.empty()) {
    line("Journal metric correlation: no external metrics file supplied; block omitted.");
  } else {
    // ISSNs per named column come from the clustering report.
    const auto clus = read_artifact(cfg, kClustering, "ingest");
    const auto ccol = clus.require_column("column", kClustering), ckeys = clus.require_column("identifier_keys", kClustering);
    std::map<std::string, std::vector<std::string>> issns;
    for (const auto& r : clus.rows) {
      std::string_view ks = r[ckeys];
      while (!ks.empty()) {
        const auto semi = ks.find(';');
        const auto k = ks.substr(0, semi);
        if (k.starts_with("issn:")) issns[r[ccol]].emplace_back(k.substr(5));
        if (semi == std::string_view::npos) break;
        ks.remove_prefix(semi + 1);
      }
    }
    std::vector<metrics::JournalKey> named;
    for (auto k : keys) {
      if (k.title == kOtherJournals || k.title == kConferenceProceedings || k.title == kOtherOutputs) continue;
      k.issns = issns[k.title];
      named.push_back(std::move(k));
    }
    const auto scores = metrics::parse_external_scores(read_input(cfg.metrics_csv, "external metrics"));
    const auto c = metrics::metric_correlation(named, scores, cfg.log_metrics);
    std::string csv = csv::format_row({"journal", "median_pi4", "score"});
    for (const auto& p : c.pairs) {
      csv += csv::format_row({named[p.journal].title, format_double(p.value), format_double(p.score)});
    }
    out.write(kCorrelation, csv);
    line(fmt::format("Journal metric correlation ({} matched, {} unmatched{}):", c.pairs.size(),
                     c.unmatched_journals.size(), cfg.log_metrics ? ", scores on log10 scale" : ""));
    line(fmt::format("  Pearson {:.3f}  Spearman {:.3f}  score = {:.4g} + {:.4g} * median", c.pearson, c.spearman,
                     c.line.intercept, c.line.slope));
    for (auto j : c.unmatched_journals) line(fmt::format("  unmatched: {}", named[j].title));
  }
  out.write(kReport, text);
}

}  // namespace refscore::pipeline

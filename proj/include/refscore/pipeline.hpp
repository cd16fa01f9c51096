#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "refscore/data.hpp"
#include "refscore/em.hpp"
#include "refscore/metrics.hpp"
#include "refscore/sampler.hpp"

/// The four subcommands as library calls. Each reads its inputs, writes its
/// artifacts into the output directory (temp file + rename) and returns a short
/// summary. All randomness derives from RunConfig::seed.
namespace refscore::pipeline {

enum class Method { hmc, em, both };
Method parse_method(std::string_view s);
[[nodiscard]] const char* to_string(Method m) noexcept;

struct ResolverConfig {
  std::string url;    // empty: no live lookups
  std::string cache;  // empty: no cache file
  double timeout_seconds = 10.0;
  int retries = 3;
  std::size_t max_in_flight = 8;
  [[nodiscard]] bool enabled() const { return !url.empty() || !cache.empty(); }
};

struct RunConfig {
  std::filesystem::path submissions;
  std::filesystem::path results;
  std::filesystem::path metrics_csv;  // optional external journal scores
  std::filesystem::path out_dir = "out";
  std::optional<std::string> uoa;
  std::uint64_t seed = 1;
  int threshold = 20;
  Method method = Method::both;
  em::CvTarget target = em::CvTarget::both;  // levels fitted by `fit`, scored by `cv`
  bool log_metrics = false;                   // log10 the external scores
  ResolverConfig resolver;
  sampler::ChainConfig chains;
  em::EmConfig em;
  em::CvConfig cv;
  metrics::FundingConfig funding;
  std::size_t index_draws = 1000;  // posterior draws used for the index distributions

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Reads a JSON config. Relative paths are taken relative to the file's directory;
/// unknown keys are a ConfigError.
RunConfig load_config(const std::filesystem::path& path);
/// Merges a JSON object into `cfg` (same keys as the file).
void apply_json(RunConfig& cfg, const std::string& json_text, const std::filesystem::path& base_dir);

struct IngestSummary {
  std::size_t outputs = 0;
  std::size_t institutions = 0;
  std::size_t journals = 0;        // distinct clusters
  std::size_t named_columns = 0;
  std::size_t unresolved_dois = 0;
};
IngestSummary cmd_ingest(const RunConfig& cfg);

struct FitSummary {
  std::vector<std::string> files;  // written, relative to out_dir
  std::optional<double> em_hmc_correlation[2];  // per level, when both methods ran
  std::optional<double> median_delta;
  std::optional<double> median_money;
  double max_rhat = 0.0;
  std::size_t divergences = 0;
};
FitSummary cmd_fit(const RunConfig& cfg);

struct CvSummary {
  double best = 0.0;
  std::vector<double> grid;
  std::vector<double> mean_delta;
};
CvSummary cmd_cv(const RunConfig& cfg);

void cmd_report(const RunConfig& cfg);

/// Artifacts every subcommand may write, for callers that compare runs.
std::vector<std::string> artifact_names();

}  // namespace refscore::pipeline

#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "refscore/csv.hpp"
#include "refscore/data.hpp"
#include "refscore/error.hpp"

namespace refscore::ingest {

enum class OutputType { journal_article, conference, other };

OutputType parse_output_type(std::string_view s);
[[nodiscard]] const char* to_string(OutputType t) noexcept;

struct RawOutput {
  std::string output_id;
  std::string institution;
  std::string uoa;
  OutputType type = OutputType::other;
  std::string doi;
  std::vector<std::string> issns;
  std::string isbn;
  std::string volume_title;
};

/// The title normalises to nothing, so it cannot identify a journal.
class UnusableTitle : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// Decompose, strip combining marks, lowercase, drop one leading "the" token
/// (unless it is the only token),
/// then keep only letters and digits.
std::string normalize_title(std::string_view title);

/// "1234-567X" form, or nullopt when the input is not eight ISSN characters.
std::optional<std::string> normalize_issn(std::string_view issn);

/// Lowercased DOI without resolver prefixes ("https://doi.org/", "doi:").
std::string normalize_doi(std::string_view doi);

/// Digits and X only.
std::string normalize_isbn(std::string_view isbn);

/// Identifier keys ("issn:", "isbn:", "doi:", "title:") that link an output to others.
std::vector<std::string> identifier_keys(const RawOutput& output);

struct JournalCluster {
  int journal_id = 0;
  std::string display_title;
  std::vector<std::string> member_output_ids;  // sorted
  std::vector<std::string> identifier_keys;    // sorted
};

/// Connected components of the bipartite graph between journal-article outputs
/// and their identifier keys. Clusters are numbered from 1 by size (largest
/// first), then display title, then first member id.
std::vector<JournalCluster> cluster_journals(const std::vector<RawOutput>& outputs);

// ---------------------------------------------------------------------------
// DOI metadata.

struct DoiMetadata {
  std::string container_title;
  std::vector<std::string> issns;
};

enum class LookupStatus { found, not_found, transport_error };

struct LookupResult {
  LookupStatus status = LookupStatus::not_found;
  DoiMetadata metadata;
  std::string error;
};

/// lookup() may be called from several threads at once.
class MetadataResolver {
 public:
  virtual ~MetadataResolver() = default;
  virtual LookupResult lookup(const std::string& doi) = 0;
};

/// Crossref-style REST client: GET {base_url}/works/{doi}, reading
/// message.container-title[0] and message.ISSN. A 404 is a miss; anything else
/// that fails is retried, then reported as a transport error.
class HttpResolver final : public MetadataResolver {
 public:
  HttpResolver(std::string base_url, double timeout_seconds, int retries = 3);
  LookupResult lookup(const std::string& doi) override;

 private:
  std::string scheme_host_;
  std::string path_prefix_;
  double timeout_;
  int retries_;
};

/// Append-only TSV cache (doi, status, title, issns) in front of an optional
/// live resolver. Hits and misses are cached; transport errors are not. Without
/// a live resolver, anything not in the cache is a miss.
class CachedResolver final : public MetadataResolver {
 public:
  CachedResolver(std::filesystem::path cache_file, std::shared_ptr<MetadataResolver> live);
  LookupResult lookup(const std::string& doi) override;
  [[nodiscard]] std::size_t live_calls() const;

 private:
  void append(const std::string& doi, const LookupResult& r);

  std::filesystem::path path_;
  std::shared_ptr<MetadataResolver> live_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, LookupResult> entries_;
  std::size_t live_calls_ = 0;
};

struct EnrichReport {
  std::size_t dois = 0;  // unique DOIs looked up
  std::size_t resolved = 0;
  std::size_t not_found = 0;
  std::size_t failed = 0;
  std::vector<std::string> unresolved_output_ids;  // sorted
  std::vector<std::string> changed_output_ids;     // sorted; fields differed from the registry
};

/// Looks up every distinct DOI (at most max_in_flight at a time). Registry
/// metadata replaces the hand-entered container title and ISSNs; unresolved rows
/// keep their fields and are listed in the report.
EnrichReport enrich_with_doi_metadata(std::vector<RawOutput>& outputs, MetadataResolver& resolver,
                                      std::size_t max_in_flight = 8);

// ---------------------------------------------------------------------------
// Aggregation.

struct Aggregated {
  CountsMatrix counts;
  std::vector<int> column_journal_ids;  // journal id per named column
};

/// Named columns for clusters with at least `threshold` articles, then
/// "Other journals", "Conference proceedings", "Other outputs". Institutions are
/// sorted by name.
Aggregated aggregate(const std::vector<JournalCluster>& clusters, const std::vector<RawOutput>& outputs,
                     int threshold);

struct ResultRow {
  std::string institution;
  std::string uoa;
  double fte = 0.0;
  double pct4 = 0.0, pct3 = 0.0, pct2 = 0.0, pct1 = 0.0, pctu = 0.0;
  double envir_pct4 = 0.0;
};

/// Converts published percentages to counts with round-half-to-even (clamped so
/// 0 <= y4 <= y34 <= N_i) and centres the environment 4* share, expressed as a
/// proportion. Institutions must match the matrix exactly.
std::vector<InstitutionProfile> build_profiles(const std::vector<ResultRow>& results, const CountsMatrix& counts);

// ---------------------------------------------------------------------------
// File formats.

std::vector<RawOutput> read_submissions(const csv::Table& table, const std::optional<std::string>& uoa = {});
std::vector<ResultRow> read_results(const csv::Table& table, const std::optional<std::string>& uoa = {});

std::string counts_csv(const CountsMatrix& counts);
CountsMatrix parse_counts(const csv::Table& table);

std::string profiles_csv(const std::vector<InstitutionProfile>& profiles);
std::vector<InstitutionProfile> parse_profiles(const csv::Table& table);

/// journal_id, display_title, article_count, column, identifier_keys.
std::string clustering_report_csv(const std::vector<JournalCluster>& clusters, const Aggregated& aggregated);

std::string enrichment_report_csv(const EnrichReport& report);

}  // namespace refscore::ingest

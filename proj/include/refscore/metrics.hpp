#pragma once

#include <span>
#include <string>
#include <vector>

#include "refscore/csv.hpp"
#include "refscore/data.hpp"
#include "refscore/stats.hpp"

namespace refscore::metrics {

struct Prediction {
  std::string institution;
  int total_outputs = 0;  // sum of the row's counts
  double yhat4 = 0.0;
  double yhat34 = 0.0;
  double yhat3 = 0.0;             // yhat34 - yhat4, kept even when negative
  bool negative_three_star = false;
};

/// yhat = sum_j n_ij pi_j for each institution and level.
std::vector<Prediction> predict(const CountsMatrix& counts, std::span<const double> pi4, std::span<const double> pi34);

/// Index of dissimilarity:
///   1/(2N) sum_i (|y4 - yhat4| + |y3 - yhat3| + |y4 + y3 - yhat4 - yhat3|)
/// with N the total number of submitted outputs.
double dissimilarity(const std::vector<InstitutionProfile>& profiles, const std::vector<Prediction>& predictions);

/// Single-level index, for a fit of one target only: sum_i |y - yhat| / N.
double dissimilarity_binary(std::span<const int> observed, std::span<const double> predicted,
                            std::span<const int> totals);

struct FundingConfig {
  double r3 = 1.0;  // arbitrary units per 3* output
  [[nodiscard]] double r4() const noexcept { return 4.0 * r3; }
};

/// Fraction of quality-related funding that moves between institutions when
/// observed profiles are replaced by predicted ones. Proportions are counts over
/// each institution's total outputs; institutions are weighted by FTE.
double money_redistribution(const std::vector<InstitutionProfile>& profiles,
                            const std::vector<Prediction>& predictions, FundingConfig funding = {});

/// Funding per output implied by a pot F split over n3 3* and n4 4* outputs.
struct FundingValue {
  double x3 = 0.0;
  double x4 = 0.0;
};
FundingValue funding_value(double F, double n3, double n4);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};
struct Bounds {
  Interval beta_b;  // rate inside the group of share X
  Interval beta_w;  // rate outside it
};

/// Deterministic bounds for a 2x2 table with group share X and overall rate T.
Bounds ecological_bounds(double X, double T);

struct ProbitGap {
  std::vector<std::size_t> included;  // journal indices used in the fit
  std::vector<double> probit4;        // probit(pi4) per included journal
  std::vector<double> gap;            // probit(pi34) - probit(pi4) per included journal
  std::vector<std::size_t> excluded;  // a median at 0 or 1
  std::vector<std::size_t> flagged;   // pi4 >= pi34, so gap <= 0
  stats::LineFit fit;                 // gap regressed on probit(pi4)
};
ProbitGap probit_gap(std::span<const double> pi4, std::span<const double> pi34);

/// A fitted journal as seen by the external-metric join.
struct JournalKey {
  std::string title;
  std::vector<std::string> issns;
  double value = 0.0;  // usually the posterior median pi4
};

struct ExternalScore {
  std::string journal_key;
  std::string issn;
  double score = 0.0;
};

/// Reads journal_key, issn, score columns.
std::vector<ExternalScore> parse_external_scores(const csv::Table& table);

struct MatchedPair {
  std::size_t journal = 0;
  std::size_t score_row = 0;
  double value = 0.0;
  double score = 0.0;  // after the optional log10
};

struct Correlation {
  double pearson = 0.0;
  double spearman = 0.0;
  stats::LineFit line;  // score on value
  std::vector<MatchedPair> pairs;
  std::vector<std::size_t> unmatched_journals;
};

/// Joins journals to external scores by ISSN first, then by normalised title.
/// A score row matching two journals, or two score rows matching one journal, is
/// a DataError; so is a join with fewer than three matches.
Correlation metric_correlation(const std::vector<JournalKey>& journals, const std::vector<ExternalScore>& scores,
                               bool log_transform);

}  // namespace refscore::metrics

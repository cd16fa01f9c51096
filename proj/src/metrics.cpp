#include "refscore/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "refscore/error.hpp"
#include "refscore/ingest.hpp"
#include "refscore/numeric.hpp"

namespace refscore::metrics {
namespace {

void check_probabilities(std::span<const double> p, const char* name) {
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput(fmt::format("{} contains {}, outside [0,1]", name, v));
  }
}

void check_pairing(const std::vector<InstitutionProfile>& profiles, const std::vector<Prediction>& predictions) {
  if (profiles.size() != predictions.size()) {
    throw InvalidInput(fmt::format("{} profiles but {} predictions", profiles.size(), predictions.size()));
  }
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    if (profiles[i].institution != predictions[i].institution) {
      throw InvalidInput(fmt::format("profile '{}' paired with prediction '{}'", profiles[i].institution,
                                     predictions[i].institution));
    }
  }
}

}  // namespace

std::vector<Prediction> predict(const CountsMatrix& counts, std::span<const double> pi4,
                                std::span<const double> pi34) {
  if (pi4.size() != counts.cols() || pi34.size() != counts.cols()) {
    throw InvalidInput(fmt::format("{} columns but probability vectors of length {} and {}", counts.cols(),
                                   pi4.size(), pi34.size()));
  }
  check_probabilities(pi4, "pi4");
  check_probabilities(pi34, "pi34");
  std::vector<Prediction> out(counts.rows());
  for (std::size_t i = 0; i < counts.rows(); ++i) {
    auto& p = out[i];
    p.institution = counts.institutions[i];
    for (std::size_t j = 0; j < counts.cols(); ++j) {
      const double n = counts.at(i, j);
      p.yhat4 += n * pi4[j];
      p.yhat34 += n * pi34[j];
      p.total_outputs += counts.at(i, j);
    }
    p.yhat3 = p.yhat34 - p.yhat4;
    p.negative_three_star = p.yhat3 < 0.0;
  }
  return out;
}

double dissimilarity(const std::vector<InstitutionProfile>& profiles, const std::vector<Prediction>& predictions) {
  check_pairing(profiles, predictions);
  double num = 0.0;
  long long n = 0;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& y = profiles[i];
    const auto& p = predictions[i];
    const double y4 = y.y4;
    const double y3 = y.y3();
    num += std::abs(y4 - p.yhat4) + std::abs(y3 - p.yhat3) + std::abs(y4 + y3 - p.yhat4 - p.yhat3);
    n += y.total_outputs;
  }
  if (n <= 0) throw InvalidInput("dissimilarity needs at least one submitted output");
  return num / (2.0 * static_cast<double>(n));
}

double dissimilarity_binary(std::span<const int> observed, std::span<const double> predicted,
                            std::span<const int> totals) {
  if (observed.size() != predicted.size() || observed.size() != totals.size()) {
    throw InvalidInput("dissimilarity inputs differ in length");
  }
  double num = 0.0;
  long long n = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    num += std::abs(static_cast<double>(observed[i]) - predicted[i]);
    n += totals[i];
  }
  if (n <= 0) throw InvalidInput("dissimilarity needs at least one submitted output");
  return num / static_cast<double>(n);
}

double money_redistribution(const std::vector<InstitutionProfile>& profiles,
                            const std::vector<Prediction>& predictions, FundingConfig funding) {
  check_pairing(profiles, predictions);
  if (!(funding.r3 > 0.0)) throw InvalidInput("r3 must be positive");
  const double r3 = funding.r3;
  const double r4 = funding.r4();
  double moved = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& y = profiles[i];
    const auto& p = predictions[i];
    if (!(y.fte > 0.0)) throw InvalidInput(fmt::format("institution '{}' has non-positive FTE", y.institution));
    if (y.total_outputs <= 0) throw InvalidInput(fmt::format("institution '{}' has no outputs", y.institution));
    const double n = y.total_outputs;
    const double p4 = y.y4 / n, p3 = y.y3() / n;
    const double q4 = p.yhat4 / n, q3 = p.yhat3 / n;
    moved += y.fte * std::abs(r4 * (p4 - q4) + r3 * (p3 - q3));
    total += y.fte * (r4 * p4 + r3 * p3);
  }
  if (!(total > 0.0)) throw InvalidInput("no 3* or 4* outputs anywhere: funding denominator is zero");
  return 0.5 * moved / total;
}

FundingValue funding_value(double F, double n3, double n4) {
  const double denom = n3 + 4.0 * n4;
  if (!(denom > 0.0)) throw InvalidInput("n3 + 4 n4 must be positive");
  FundingValue v;
  v.x3 = F / denom;
  v.x4 = 4.0 * v.x3;
  return v;
}

Bounds ecological_bounds(double X, double T) {
  if (!(X > 0.0 && X < 1.0)) throw InvalidInput("X must lie strictly inside (0,1): one group is empty");
  if (!(T >= 0.0 && T <= 1.0)) throw InvalidInput("T must lie in [0,1]");
  const auto clip = [](double v) { return std::clamp(v, 0.0, 1.0); };
  Bounds b;
  b.beta_b = {clip(std::max(0.0, (T - (1.0 - X)) / X)), clip(std::min(1.0, T / X))};
  b.beta_w = {clip(std::max(0.0, (T - X) / (1.0 - X))), clip(std::min(1.0, T / (1.0 - X)))};
  return b;
}

ProbitGap probit_gap(std::span<const double> pi4, std::span<const double> pi34) {
  if (pi4.size() != pi34.size()) throw InvalidInput("probability vectors differ in length");
  ProbitGap g;
  for (std::size_t j = 0; j < pi4.size(); ++j) {
    const bool inside = pi4[j] > 0.0 && pi4[j] < 1.0 && pi34[j] > 0.0 && pi34[j] < 1.0;
    if (!inside) {
      g.excluded.push_back(j);
      continue;
    }
    const double z4 = num::probit(pi4[j]);
    g.included.push_back(j);
    g.probit4.push_back(z4);
    g.gap.push_back(num::probit(pi34[j]) - z4);
    if (pi4[j] >= pi34[j]) g.flagged.push_back(j);
  }
  if (g.included.size() < 2) throw InvalidInput("probit gap needs two journals with medians inside (0,1)");
  g.fit = stats::ols(g.probit4, g.gap);
  return g;
}

std::vector<ExternalScore> parse_external_scores(const csv::Table& table) {
  const std::string src = "external metrics";
  const auto ck = table.require_column("journal_key", src);
  const auto ci = table.require_column("issn", src);
  const auto cs = table.require_column("score", src);
  std::vector<ExternalScore> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    ExternalScore e;
    e.journal_key = table.rows[r][ck];
    e.issn = table.rows[r][ci];
    e.score = csv::parse_double(table.rows[r][cs], fmt::format("external metrics row {} column score", r + 2));
    out.push_back(std::move(e));
  }
  return out;
}

Correlation metric_correlation(const std::vector<JournalKey>& journals, const std::vector<ExternalScore>& scores,
                               bool log_transform) {
  std::multimap<std::string, std::size_t> by_issn;
  std::multimap<std::string, std::size_t> by_title;
  for (std::size_t j = 0; j < journals.size(); ++j) {
    for (const auto& s : journals[j].issns) {
      if (auto n = ingest::normalize_issn(s)) by_issn.emplace(*n, j);
    }
    try {
      by_title.emplace(ingest::normalize_title(journals[j].title), j);
    } catch (const ingest::UnusableTitle&) {
    }
  }
  const auto unique_match = [](const std::multimap<std::string, std::size_t>& index, const std::string& key,
                               const std::string& label) -> std::optional<std::size_t> {
    const auto [lo, hi] = index.equal_range(key);
    if (lo == hi) return std::nullopt;
    std::vector<std::size_t> hits;
    for (auto it = lo; it != hi; ++it) hits.push_back(it->second);
    std::sort(hits.begin(), hits.end());
    hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
    if (hits.size() > 1) throw DataError(fmt::format("external score '{}' matches {} journals", label, hits.size()));
    return hits.front();
  };

  Correlation out;
  std::vector<std::optional<std::size_t>> row_of_journal(journals.size());
  for (std::size_t r = 0; r < scores.size(); ++r) {
    const auto& e = scores[r];
    std::optional<std::size_t> j;
    if (auto n = ingest::normalize_issn(e.issn)) j = unique_match(by_issn, *n, e.journal_key);
    if (!j && !e.journal_key.empty()) {
      try {
        j = unique_match(by_title, ingest::normalize_title(e.journal_key), e.journal_key);
      } catch (const ingest::UnusableTitle&) {
      }
    }
    if (!j) continue;
    if (row_of_journal[*j]) {
      throw DataError(fmt::format("journal '{}' matches external rows {} and {}", journals[*j].title,
                                  *row_of_journal[*j] + 2, r + 2));
    }
    row_of_journal[*j] = r;
  }
  for (std::size_t j = 0; j < journals.size(); ++j) {
    if (!row_of_journal[j]) {
      out.unmatched_journals.push_back(j);
      continue;
    }
    double score = scores[*row_of_journal[j]].score;
    if (log_transform) {
      if (!(score > 0.0)) throw DataError(fmt::format("cannot take log10 of score {} for '{}'", score, journals[j].title));
      score = std::log10(score);
    }
    out.pairs.push_back({j, *row_of_journal[j], journals[j].value, score});
  }
  if (out.pairs.size() < 3) {
    throw DataError(fmt::format("only {} journals matched external scores; need at least 3", out.pairs.size()));
  }
  std::vector<double> x, y;
  for (const auto& p : out.pairs) {
    x.push_back(p.value);
    y.push_back(p.score);
  }
  out.pearson = stats::pearson(x, y);
  out.spearman = stats::spearman(x, y);
  out.line = stats::ols(x, y);
  return out;
}

}  // namespace refscore::metrics

#include "refscore/ingest.hpp"

#include <algorithm>
#include <atomic>
#include <boost/pending/disjoint_sets.hpp>
#include <cmath>
#include <map>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

namespace refscore::ingest {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto end = s.find(';', start);
    auto piece = trim(s.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (!piece.empty()) out.push_back(std::move(piece));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (const auto& s : v) {
    if (!out.empty()) out += sep;
    out += s;
  }
  return out;
}

}  // namespace

OutputType parse_output_type(std::string_view s) {
  const auto t = lower_ascii(trim(s));
  if (t == "journal-article" || t == "journal article" || t == "d") return OutputType::journal_article;
  if (t == "conference" || t == "conference contribution" || t == "e") return OutputType::conference;
  if (t == "other" || !t.empty()) return OutputType::other;
  throw DataError("empty output_type");
}

const char* to_string(OutputType t) noexcept {
  switch (t) {
    case OutputType::journal_article: return "journal-article";
    case OutputType::conference: return "conference";
    case OutputType::other: return "other";
  }
  return "other";
}

std::string normalize_title(std::string_view title) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfd = icu::Normalizer2::getNFDInstance(status);
  if (U_FAILURE(status)) throw NumericalError("ICU NFD normaliser unavailable");
  const auto src = icu::UnicodeString::fromUTF8(icu::StringPiece(title.data(), static_cast<int32_t>(title.size())));
  const icu::UnicodeString decomposed = nfd->normalize(src, status);
  if (U_FAILURE(status)) throw InvalidInput("title is not valid UTF-8");

  // Lowercase, drop combining marks, and split into alphanumeric tokens.
  std::vector<icu::UnicodeString> tokens;
  icu::UnicodeString current;
  for (int32_t i = 0; i < decomposed.length();) {
    const UChar32 c = decomposed.char32At(i);
    i += U16_LENGTH(c);
    if (u_charType(c) == U_NON_SPACING_MARK) continue;
    if (u_isalnum(c)) {
      current.append(u_tolower(c));
    } else if (u_isspace(c)) {
      if (!current.isEmpty()) tokens.push_back(current);
      current.remove();
    }
    // Punctuation and symbols vanish without splitting a token.
  }
  if (!current.isEmpty()) tokens.push_back(current);
  // A lone "the" is kept, so normalising a key gives the key back.
  if (tokens.size() > 1 && tokens.front() == icu::UnicodeString("the")) tokens.erase(tokens.begin());

  std::string out;
  for (const auto& t : tokens) t.toUTF8String(out);
  if (out.empty()) throw UnusableTitle(fmt::format("title '{}' is empty after normalisation", title));
  return out;
}

std::optional<std::string> normalize_issn(std::string_view issn) {
  std::string core;
  for (char c : issn) {
    if (std::isdigit(static_cast<unsigned char>(c))) {
      core.push_back(c);
    } else if (c == 'x' || c == 'X') {
      core.push_back('X');
    } else if (c != '-' && c != ' ') {
      return std::nullopt;
    }
  }
  if (core.size() != 8 || core.find('X') < 7) return std::nullopt;
  return core.substr(0, 4) + "-" + core.substr(4);
}

std::string normalize_doi(std::string_view doi) {
  auto d = lower_ascii(trim(doi));
  for (std::string_view prefix : {"https://doi.org/", "http://doi.org/", "https://dx.doi.org/", "http://dx.doi.org/",
                                  "doi:"}) {
    if (d.starts_with(prefix)) {
      d.erase(0, prefix.size());
      break;
    }
  }
  return trim(d);
}

std::string normalize_isbn(std::string_view isbn) {
  std::string out;
  for (char c : isbn) {
    if (std::isdigit(static_cast<unsigned char>(c))) out.push_back(c);
    if (c == 'x' || c == 'X') out.push_back('X');
  }
  return out;
}

std::vector<std::string> identifier_keys(const RawOutput& o) {
  std::vector<std::string> keys;
  for (const auto& s : o.issns) {
    if (auto n = normalize_issn(s)) {
      keys.push_back("issn:" + *n);
    } else {
      spdlog::warn("output {}: ignoring malformed ISSN '{}'", o.output_id, s);
    }
  }
  if (const auto isbn = normalize_isbn(o.isbn); !isbn.empty()) keys.push_back("isbn:" + isbn);
  if (const auto doi = normalize_doi(o.doi); !doi.empty()) keys.push_back("doi:" + doi);
  if (!trim(o.volume_title).empty()) {
    try {
      keys.push_back("title:" + normalize_title(o.volume_title));
    } catch (const UnusableTitle&) {
      spdlog::warn("output {}: title '{}' is unusable as an identifier", o.output_id, o.volume_title);
    }
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return keys;
}

std::vector<JournalCluster> cluster_journals(const std::vector<RawOutput>& outputs) {
  std::vector<std::size_t> articles;
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    if (outputs[k].type == OutputType::journal_article) articles.push_back(k);
  }
  const std::size_t n = articles.size();

  // Nodes 0..n-1 are outputs; identifier keys follow.
  std::map<std::string, std::size_t> key_node;
  std::vector<std::vector<std::string>> keys_of(n);
  for (std::size_t a = 0; a < n; ++a) {
    keys_of[a] = identifier_keys(outputs[articles[a]]);
    if (keys_of[a].empty()) spdlog::warn("journal article {} has no identifier; kept as its own journal",
                                         outputs[articles[a]].output_id);
    for (const auto& k : keys_of[a]) key_node.emplace(k, 0);
  }
  std::size_t next = n;
  for (auto& [k, node] : key_node) node = next++;

  std::vector<std::size_t> rank(next), parent(next);
  boost::disjoint_sets<std::size_t*, std::size_t*> sets(rank.data(), parent.data());
  for (std::size_t v = 0; v < next; ++v) sets.make_set(v);
  for (std::size_t a = 0; a < n; ++a) {
    for (const auto& k : keys_of[a]) sets.union_set(a, key_node.at(k));
  }

  std::map<std::size_t, std::vector<std::size_t>> members;  // root -> article indices
  for (std::size_t a = 0; a < n; ++a) members[sets.find_set(a)].push_back(a);

  std::vector<JournalCluster> clusters;
  for (const auto& [root, idx] : members) {
    JournalCluster c;
    std::set<std::string> keys;
    std::map<std::string, int> title_freq;
    for (std::size_t a : idx) {
      const auto& o = outputs[articles[a]];
      c.member_output_ids.push_back(o.output_id);
      keys.insert(keys_of[a].begin(), keys_of[a].end());
      const auto t = trim(o.volume_title);
      if (!t.empty()) ++title_freq[t];
    }
    std::sort(c.member_output_ids.begin(), c.member_output_ids.end());
    c.identifier_keys.assign(keys.begin(), keys.end());
    int best = 0;
    for (const auto& [t, f] : title_freq) {
      if (f > best) {  // map order makes ties go to the lexicographically first title
        best = f;
        c.display_title = t;
      }
    }
    if (c.display_title.empty()) {
      c.display_title = c.identifier_keys.empty() ? c.member_output_ids.front() : c.identifier_keys.front();
    }
    clusters.push_back(std::move(c));
  }
  std::sort(clusters.begin(), clusters.end(), [](const JournalCluster& a, const JournalCluster& b) {
    if (a.member_output_ids.size() != b.member_output_ids.size()) {
      return a.member_output_ids.size() > b.member_output_ids.size();
    }
    if (a.display_title != b.display_title) return a.display_title < b.display_title;
    return a.member_output_ids.front() < b.member_output_ids.front();
  });
  for (std::size_t k = 0; k < clusters.size(); ++k) clusters[k].journal_id = static_cast<int>(k + 1);
  return clusters;
}

EnrichReport enrich_with_doi_metadata(std::vector<RawOutput>& outputs, MetadataResolver& resolver,
                                      std::size_t max_in_flight) {
  std::vector<std::string> dois;
  for (const auto& o : outputs) {
    if (auto d = normalize_doi(o.doi); !d.empty()) dois.push_back(std::move(d));
  }
  std::sort(dois.begin(), dois.end());
  dois.erase(std::unique(dois.begin(), dois.end()), dois.end());

  std::vector<LookupResult> results(dois.size());
  std::atomic<std::size_t> cursor{0};
  const auto worker = [&] {
    for (std::size_t k = cursor++; k < dois.size(); k = cursor++) {
      try {
        results[k] = resolver.lookup(dois[k]);
      } catch (const std::exception& e) {
        results[k].status = LookupStatus::transport_error;
        results[k].error = e.what();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(max_in_flight, 1, std::max<std::size_t>(1, dois.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  EnrichReport report;
  report.dois = dois.size();
  std::map<std::string, const LookupResult*> by_doi;
  for (std::size_t k = 0; k < dois.size(); ++k) {
    by_doi[dois[k]] = &results[k];
    switch (results[k].status) {
      case LookupStatus::found: ++report.resolved; break;
      case LookupStatus::not_found: ++report.not_found; break;
      case LookupStatus::transport_error:
        ++report.failed;
        spdlog::warn("DOI {} unresolved: {}", dois[k], results[k].error);
        break;
    }
  }
  for (auto& o : outputs) {
    const auto d = normalize_doi(o.doi);
    if (d.empty()) continue;
    const auto& r = *by_doi.at(d);
    if (r.status != LookupStatus::found) {
      report.unresolved_output_ids.push_back(o.output_id);
      continue;
    }
    std::vector<std::string> issns;
    for (const auto& s : r.metadata.issns) {
      if (auto n = normalize_issn(s)) issns.push_back(*n);
    }
    std::vector<std::string> old_issns;
    for (const auto& s : o.issns) {
      if (auto n = normalize_issn(s)) old_issns.push_back(*n);
    }
    std::sort(issns.begin(), issns.end());
    std::sort(old_issns.begin(), old_issns.end());
    const bool changed = issns != old_issns || trim(o.volume_title) != trim(r.metadata.container_title);
    if (changed) report.changed_output_ids.push_back(o.output_id);
    o.issns = std::move(issns);
    if (!r.metadata.container_title.empty()) o.volume_title = r.metadata.container_title;
  }
  std::sort(report.unresolved_output_ids.begin(), report.unresolved_output_ids.end());
  std::sort(report.changed_output_ids.begin(), report.changed_output_ids.end());
  return report;
}

Aggregated aggregate(const std::vector<JournalCluster>& clusters, const std::vector<RawOutput>& outputs,
                     int threshold) {
  if (threshold < 1) throw InvalidInput("threshold must be at least 1");
  std::set<std::string> inst_set;
  for (const auto& o : outputs) inst_set.insert(o.institution);

  Aggregated out;
  auto& c = out.counts;
  c.institutions.assign(inst_set.begin(), inst_set.end());
  std::map<std::string, std::size_t> col_of_output;
  for (const auto& cl : clusters) {
    if (static_cast<int>(cl.member_output_ids.size()) < threshold) continue;
    const std::size_t col = c.columns.size();
    c.columns.push_back(cl.display_title);
    out.column_journal_ids.push_back(cl.journal_id);
    for (const auto& id : cl.member_output_ids) col_of_output[id] = col;
  }
  const std::size_t other_j = c.columns.size();
  c.columns.emplace_back(kOtherJournals);
  c.columns.emplace_back(kConferenceProceedings);
  c.columns.emplace_back(kOtherOutputs);
  c.counts.assign(c.rows() * c.cols(), 0);

  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < c.rows(); ++i) row_of[c.institutions[i]] = i;
  std::set<std::string> seen;
  for (const auto& o : outputs) {
    if (!seen.insert(o.output_id).second) throw DataError("duplicate output_id " + o.output_id);
    std::size_t col = 0;
    switch (o.type) {
      case OutputType::journal_article: {
        const auto it = col_of_output.find(o.output_id);
        col = it == col_of_output.end() ? other_j : it->second;
        break;
      }
      case OutputType::conference: col = other_j + 1; break;
      case OutputType::other: col = other_j + 2; break;
    }
    ++c.at(row_of.at(o.institution), col);
  }
  return out;
}

std::vector<InstitutionProfile> build_profiles(const std::vector<ResultRow>& results, const CountsMatrix& counts) {
  std::map<std::string, const ResultRow*> by_inst;
  for (const auto& r : results) {
    if (!by_inst.emplace(r.institution, &r).second) throw DataError("duplicate results row for " + r.institution);
  }
  std::vector<std::string> missing_results, missing_counts;
  for (const auto& inst : counts.institutions) {
    if (!by_inst.contains(inst)) missing_results.push_back(inst);
  }
  const std::set<std::string> in_counts(counts.institutions.begin(), counts.institutions.end());
  for (const auto& [inst, r] : by_inst) {
    if (!in_counts.contains(inst)) missing_counts.push_back(inst);
  }
  if (!missing_results.empty() || !missing_counts.empty()) {
    throw DataError(fmt::format("institution mismatch: without results [{}]; without submissions [{}]",
                                fmt::join(missing_results, ", "), fmt::join(missing_counts, ", ")));
  }

  std::vector<InstitutionProfile> out;
  double envir_sum = 0.0;
  for (std::size_t i = 0; i < counts.rows(); ++i) {
    const auto& r = *by_inst.at(counts.institutions[i]);
    for (double pct : {r.pct4, r.pct3, r.envir_pct4}) {
      if (!(pct >= 0.0 && pct <= 100.0)) throw DataError(fmt::format("{}: percentage {} outside [0,100]", r.institution, pct));
    }
    if (!(r.fte >= 0.0)) throw DataError(r.institution + ": negative FTE");
    InstitutionProfile p;
    p.institution = r.institution;
    p.total_outputs = counts.row_total(i);
    const double n = p.total_outputs;
    // nearbyint rounds half to even in the default rounding mode.
    const auto to_count = [&](double pct) {
      return std::clamp(static_cast<int>(std::nearbyint(n * pct / 100.0)), 0, p.total_outputs);
    };
    p.y4 = to_count(r.pct4);
    p.y34 = std::max(p.y4, to_count(r.pct4 + r.pct3));
    p.fte = r.fte;
    p.envir = r.envir_pct4 / 100.0;
    envir_sum += p.envir;
    out.push_back(p);
  }
  const double mean = out.empty() ? 0.0 : envir_sum / static_cast<double>(out.size());
  for (auto& p : out) p.envir -= mean;
  return out;
}

// ---------------------------------------------------------------------------
// File formats.

std::vector<RawOutput> read_submissions(const csv::Table& t, const std::optional<std::string>& uoa) {
  const std::string src = "submissions";
  const auto c_id = t.require_column("output_id", src);
  const auto c_inst = t.require_column("institution", src);
  const auto c_uoa = t.require_column("uoa", src);
  const auto c_type = t.require_column("output_type", src);
  const auto c_doi = t.require_column("doi", src);
  const auto c_issn = t.require_column("issn_list", src);
  const auto c_isbn = t.require_column("isbn", src);
  const auto c_title = t.require_column("volume_title", src);
  std::vector<RawOutput> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (uoa && trim(row[c_uoa]) != *uoa) continue;
    RawOutput o;
    o.output_id = trim(row[c_id]);
    o.institution = trim(row[c_inst]);
    o.uoa = trim(row[c_uoa]);
    if (o.output_id.empty() || o.institution.empty()) {
      throw DataError(fmt::format("submissions row {}: output_id and institution are required", r + 2));
    }
    try {
      o.type = parse_output_type(row[c_type]);
    } catch (const DataError&) {
      throw DataError(fmt::format("submissions row {}: empty output_type", r + 2));
    }
    o.doi = trim(row[c_doi]);
    o.issns = split_list(row[c_issn]);
    o.isbn = trim(row[c_isbn]);
    o.volume_title = trim(row[c_title]);
    out.push_back(std::move(o));
  }
  if (out.empty()) throw DataError(uoa ? "no submissions for unit of assessment " + *uoa : "no submissions");
  return out;
}

std::vector<ResultRow> read_results(const csv::Table& t, const std::optional<std::string>& uoa) {
  const std::string src = "results";
  const auto c_inst = t.require_column("institution", src);
  const auto c_uoa = t.require_column("uoa", src);
  const auto c_fte = t.require_column("fte", src);
  const std::size_t c_pct[] = {t.require_column("outputs_pct_4", src), t.require_column("outputs_pct_3", src),
                               t.require_column("outputs_pct_2", src), t.require_column("outputs_pct_1", src),
                               t.require_column("outputs_pct_u", src)};
  const auto c_env = t.require_column("envir_pct_4", src);
  std::vector<ResultRow> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (uoa && trim(row[c_uoa]) != *uoa) continue;
    const auto ctx = [&](const char* col) { return fmt::format("results row {} column {}", r + 2, col); };
    ResultRow x;
    x.institution = trim(row[c_inst]);
    x.uoa = trim(row[c_uoa]);
    x.fte = csv::parse_double(row[c_fte], ctx("fte"));
    x.pct4 = csv::parse_double(row[c_pct[0]], ctx("outputs_pct_4"));
    x.pct3 = csv::parse_double(row[c_pct[1]], ctx("outputs_pct_3"));
    x.pct2 = csv::parse_double(row[c_pct[2]], ctx("outputs_pct_2"));
    x.pct1 = csv::parse_double(row[c_pct[3]], ctx("outputs_pct_1"));
    x.pctu = csv::parse_double(row[c_pct[4]], ctx("outputs_pct_u"));
    x.envir_pct4 = csv::parse_double(row[c_env], ctx("envir_pct_4"));
    out.push_back(std::move(x));
  }
  if (out.empty()) throw DataError(uoa ? "no results for unit of assessment " + *uoa : "no results");
  return out;
}

std::string counts_csv(const CountsMatrix& c) {
  std::vector<std::string> header{"institution"};
  header.insert(header.end(), c.columns.begin(), c.columns.end());
  std::string out = csv::format_row(header);
  for (std::size_t i = 0; i < c.rows(); ++i) {
    std::vector<std::string> row{c.institutions[i]};
    for (std::size_t j = 0; j < c.cols(); ++j) row.push_back(std::to_string(c.at(i, j)));
    out += csv::format_row(row);
  }
  return out;
}

CountsMatrix parse_counts(const csv::Table& t) {
  if (t.header.size() < 2 || t.header.front() != "institution") {
    throw DataError("counts file must start with an 'institution' column");
  }
  CountsMatrix c;
  c.columns.assign(t.header.begin() + 1, t.header.end());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    c.institutions.push_back(t.rows[r][0]);
    for (std::size_t j = 1; j < t.header.size(); ++j) {
      c.counts.push_back(static_cast<int>(
          csv::parse_int(t.rows[r][j], fmt::format("counts row {} column '{}'", r + 2, t.header[j]))));
    }
  }
  c.check();
  return c;
}

std::string profiles_csv(const std::vector<InstitutionProfile>& profiles) {
  std::string out = csv::format_row({"institution", "total_outputs", "y4", "y34", "fte", "envir"});
  for (const auto& p : profiles) {
    out += csv::format_row({p.institution, std::to_string(p.total_outputs), std::to_string(p.y4),
                            std::to_string(p.y34), csv::format_double(p.fte), csv::format_double(p.envir)});
  }
  return out;
}

std::vector<InstitutionProfile> parse_profiles(const csv::Table& t) {
  const std::string src = "profiles";
  const auto ci = t.require_column("institution", src);
  const auto cn = t.require_column("total_outputs", src);
  const auto c4 = t.require_column("y4", src);
  const auto c34 = t.require_column("y34", src);
  const auto cf = t.require_column("fte", src);
  const auto ce = t.require_column("envir", src);
  std::vector<InstitutionProfile> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto ctx = [&](const char* col) { return fmt::format("profiles row {} column {}", r + 2, col); };
    InstitutionProfile p;
    p.institution = row[ci];
    p.total_outputs = static_cast<int>(csv::parse_int(row[cn], ctx("total_outputs")));
    p.y4 = static_cast<int>(csv::parse_int(row[c4], ctx("y4")));
    p.y34 = static_cast<int>(csv::parse_int(row[c34], ctx("y34")));
    p.fte = csv::parse_double(row[cf], ctx("fte"));
    p.envir = csv::parse_double(row[ce], ctx("envir"));
    out.push_back(std::move(p));
  }
  return out;
}

std::string clustering_report_csv(const std::vector<JournalCluster>& clusters, const Aggregated& aggregated) {
  std::map<int, std::string> column_of;
  for (std::size_t k = 0; k < aggregated.column_journal_ids.size(); ++k) {
    column_of[aggregated.column_journal_ids[k]] = aggregated.counts.columns[k];
  }
  std::string out = csv::format_row({"journal_id", "display_title", "article_count", "column", "identifier_keys"});
  for (const auto& c : clusters) {
    const auto it = column_of.find(c.journal_id);
    out += csv::format_row({std::to_string(c.journal_id), c.display_title, std::to_string(c.member_output_ids.size()),
                            it == column_of.end() ? std::string(kOtherJournals) : it->second,
                            join(c.identifier_keys, ';')});
  }
  return out;
}

std::string enrichment_report_csv(const EnrichReport& report) {
  std::string out = csv::format_row({"output_id", "status"});
  for (const auto& id : report.unresolved_output_ids) out += csv::format_row({id, "unresolved"});
  for (const auto& id : report.changed_output_ids) out += csv::format_row({id, "corrected"});
  return out;
}

}  // namespace refscore::ingest

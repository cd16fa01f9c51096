#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "ref_fixtures.hpp"
#include "refscore/csv.hpp"
#include "refscore/error.hpp"
#include "refscore/ingest.hpp"
#include "refscore/pipeline.hpp"
#include "refscore/stats.hpp"
#include "synthetic.hpp"

using namespace refscore;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() / fmt::format("refscore-{}-{:x}", tag, rd());
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out[e.path().filename().string()] = slurp(e.path());
  return out;
}

csv::Table table(const fs::path& p) { return csv::parse(slurp(p)); }

// Economics-shaped inputs written to `dir`.
pipeline::RunConfig econ_inputs(const fs::path& dir) {
  const auto fx = testing::make_ref_fixture(testing::economics_shape());
  csv::write_file_atomic(dir / "submissions.csv", testing::submissions_csv(fx.outputs));
  csv::write_file_atomic(dir / "results.csv", testing::results_csv(fx.results));
  csv::write_file_atomic(dir / "doi_cache.tsv", testing::registry_cache(fx.registry));
  pipeline::RunConfig cfg;
  cfg.submissions = dir / "submissions.csv";
  cfg.results = dir / "results.csv";
  cfg.resolver.cache = (dir / "doi_cache.tsv").string();
  cfg.out_dir = dir / "out";
  return cfg;
}

// Synthetic counts and profiles placed where `fit` expects the ingest artifacts.
pipeline::RunConfig synthetic_run(const fs::path& dir, testing::SyntheticData* truth = nullptr) {
  testing::SyntheticSpec spec;
  spec.seed = 5;
  auto d = testing::make_synthetic(spec);
  pipeline::RunConfig cfg;
  cfg.out_dir = dir / "out";
  fs::create_directories(cfg.out_dir);
  csv::write_file_atomic(cfg.out_dir / "counts.csv", ingest::counts_csv(d.counts));
  csv::write_file_atomic(cfg.out_dir / "profiles.csv", ingest::profiles_csv(d.profiles));
  cfg.chains.chains = 2;
  cfg.chains.warmup_iters = 300;
  cfg.chains.sample_iters = 300;
  cfg.index_draws = 200;
  if (truth) *truth = std::move(d);
  return cfg;
}

int run_cli(const std::string& args, std::string* output = nullptr) {
  TempDir tmp("cli");
  const auto log = tmp.path() / "log.txt";
  const std::string cmd = fmt::format("'{}' {} > '{}' 2>&1", REFSCORE_CLI, args, log.string());
  const int status = std::system(cmd.c_str());
  if (output) *output = slurp(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("ingest on the economics fixture") {
  TempDir tmp("ingest");
  auto cfg = econ_inputs(tmp.path());
  const auto before = snapshot(tmp.path());
  const auto s = pipeline::cmd_ingest(cfg);
  CHECK(s.named_columns == 29);
  CHECK(s.institutions == 28);

  // Counts rows add up to each institution's journal-article and other outputs.
  const auto subs = ingest::read_submissions(table(cfg.submissions));
  std::map<std::string, int> per_inst;
  for (const auto& o : subs) ++per_inst[o.institution];
  const auto counts = ingest::parse_counts(table(cfg.out_dir / "counts.csv"));
  for (std::size_t i = 0; i < counts.rows(); ++i) CHECK(counts.row_total(i) == per_inst[counts.institutions[i]]);

  // 29 named rows in the clustering report.
  const auto rep = table(cfg.out_dir / "clustering_report.csv");
  const auto col = rep.require_column("column", "report");
  std::set<std::string> columns;
  for (const auto& r : rep.rows) columns.insert(r[col]);
  for (const char* pooled : {kOtherJournals, kConferenceProceedings, kOtherOutputs}) columns.erase(pooled);
  CHECK(columns.size() == 29);

  // Inputs untouched, and a rerun writes the same bytes.
  auto after = snapshot(tmp.path());
  CHECK(after == before);
  const auto first = snapshot(cfg.out_dir);
  pipeline::cmd_ingest(cfg);
  CHECK(snapshot(cfg.out_dir) == first);
}

TEST_CASE("missing inputs and artifacts are named") {
  TempDir tmp("missing");
  auto cfg = econ_inputs(tmp.path());
  cfg.results = tmp.path() / "nope.csv";
  try {
    pipeline::cmd_ingest(cfg);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("nope.csv") != std::string::npos);
  }
  try {
    pipeline::cmd_fit(cfg);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("counts.csv") != std::string::npos);
    CHECK(std::string(e.what()).find("ingest") != std::string::npos);
  }
  CHECK_THROWS_AS(pipeline::cmd_report(cfg), DataError);
}

TEST_CASE("fit on the synthetic fixture") {
  TempDir tmp("fit");
  testing::SyntheticData truth;
  auto cfg = synthetic_run(tmp.path(), &truth);
  const auto inputs = snapshot(cfg.out_dir);
  const auto s = pipeline::cmd_fit(cfg);

  REQUIRE(s.em_hmc_correlation[0]);
  REQUIRE(s.em_hmc_correlation[1]);
  CHECK(*s.em_hmc_correlation[0] >= 0.95);
  CHECK(*s.em_hmc_correlation[1] >= 0.95);

  // Scatter file agrees with the summary.
  const auto sc = table(cfg.out_dir / "em_vs_hmc.csv");
  const auto ct = sc.require_column("target", "s"), ce = sc.require_column("em_logit", "s"),
             ch = sc.require_column("hmc_median_logit", "s");
  std::vector<double> e, h;
  for (const auto& r : sc.rows)
    if (r[ct] == "four_star") {
      e.push_back(csv::parse_double(r[ce], "s"));
      h.push_back(csv::parse_double(r[ch], "s"));
    }
  CHECK(e.size() == 12);
  CHECK(std::abs(stats::pearson(e, h) - *s.em_hmc_correlation[0]) < 1e-12);

  for (const char* level : {"four_star", "three_plus"}) {
    const auto rh = table(cfg.out_dir / fmt::format("rhat_{}.csv", level));
    const auto c = rh.require_column("rhat", "rhat");
    CHECK(rh.rows.size() >= 13);
    for (const auto& r : rh.rows)
      if (r[c] != "NA") CHECK(csv::parse_double(r[c], "rhat") < 1.05);
  }
  CHECK(s.max_rhat < 1.05);
  for (const char* f : {"league_table.csv", "predictions.csv", "indices.csv", "probit_gap.csv", "three_star.csv",
                        "fit_summary.json", "trace_four_star.csv", "em_fit_three_plus.csv"})
    CHECK(fs::exists(cfg.out_dir / f));
  CHECK(table(cfg.out_dir / "indices.csv").rows.size() == 200);

  // Inputs kept; a rerun with the same seed is byte-identical.
  auto first = snapshot(cfg.out_dir);
  CHECK(first["counts.csv"] == inputs.at("counts.csv"));
  CHECK(first["profiles.csv"] == inputs.at("profiles.csv"));
  pipeline::cmd_fit(cfg);
  CHECK(snapshot(cfg.out_dir) == first);

  // Another seed moves the draws.
  cfg.seed = 2;
  pipeline::cmd_fit(cfg);
  CHECK(slurp(cfg.out_dir / "trace_four_star.csv") != first["trace_four_star.csv"]);
}

TEST_CASE("EM-only fit gives point estimates and a single index row") {
  TempDir tmp("em");
  auto cfg = synthetic_run(tmp.path());
  cfg.method = pipeline::Method::em;
  const auto s = pipeline::cmd_fit(cfg);
  CHECK_FALSE(s.em_hmc_correlation[0]);
  CHECK(s.median_delta);
  CHECK_FALSE(fs::exists(cfg.out_dir / "trace_four_star.csv"));
  const auto lt = table(cfg.out_dir / "league_table.csv");
  CHECK(lt.rows.front()[lt.require_column("lo95", "l")] == "NA");
  CHECK(table(cfg.out_dir / "indices.csv").rows.size() == 1);
}

TEST_CASE("cv table shape and selection") {
  TempDir tmp("cv");
  auto cfg = synthetic_run(tmp.path());
  cfg.cv.grid = {0.5, 1.0, 2.0, 4.0};
  cfg.cv.folds = 5;
  const auto s = pipeline::cmd_cv(cfg);
  const auto t = table(cfg.out_dir / "cv_table.csv");
  CHECK(t.rows.size() == 20);
  const auto sum = table(cfg.out_dir / "cv_summary.csv");
  REQUIRE(sum.rows.size() == 4);
  const auto cm = sum.require_column("mean_delta", "s"), cs = sum.require_column("selected", "s"),
             cg = sum.require_column("pseudo_strength", "s");
  std::size_t argmin = 0;
  for (std::size_t r = 1; r < 4; ++r)
    if (csv::parse_double(sum.rows[r][cm], "s") < csv::parse_double(sum.rows[argmin][cm], "s")) argmin = r;
  for (std::size_t r = 0; r < 4; ++r) CHECK((sum.rows[r][cs] == "1") == (r == argmin));
  CHECK(csv::parse_double(sum.rows[argmin][cg], "s") == s.best);

  // Mean per grid point is the mean of its folds.
  const auto tg = t.require_column("pseudo_strength", "t"), td = t.require_column("delta", "t");
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (const auto& row : t.rows)
      if (row[tg] == sum.rows[r][cg]) total += csv::parse_double(row[td], "t");
    CHECK(std::abs(total / 5.0 - csv::parse_double(sum.rows[r][cm], "s")) < 1e-12);
  }

  cfg.cv.grid = {3.0};
  CHECK(pipeline::cmd_cv(cfg).best == 3.0);
}

TEST_CASE("report") {
  TempDir tmp("report");
  auto cfg = synthetic_run(tmp.path());
  cfg.method = pipeline::Method::em;
  pipeline::cmd_fit(cfg);
  pipeline::cmd_report(cfg);
  const auto text = slurp(cfg.out_dir / "report.txt");
  CHECK(text.find("no external metrics file supplied; block omitted") != std::string::npos);
  CHECK_FALSE(fs::exists(cfg.out_dir / "metric_correlation.csv"));

  // League rows in descending order of median.
  std::vector<double> medians;
  std::istringstream in(text);
  std::string line;
  bool in_four = false;
  while (std::getline(in, line)) {
    if (line.starts_with("League table")) {
      in_four = line.find("a 4* rating") != std::string::npos;
      continue;
    }
    if (line.empty()) in_four = false;
    if (in_four && line.starts_with("  Journal") || (in_four && line.starts_with("  Other"))) {
      std::istringstream ls(line.substr(52));
      double m;
      ls >> m;
      medians.push_back(m);
    }
  }
  CHECK(medians.size() == 12);
  CHECK(std::is_sorted(medians.rbegin(), medians.rend()));

  // Index median line quotes the CSV median verbatim.
  const auto idx = table(cfg.out_dir / "indices.csv");
  std::vector<double> d;
  for (const auto& r : idx.rows) d.push_back(csv::parse_double(r[idx.require_column("delta", "i")], "i"));
  CHECK(text.find(fmt::format("median {} (", csv::format_double(stats::median(d)))) != std::string::npos);

  // External scores keyed by title: block present and a CSV written.
  std::string m = "journal_key,issn,score\n";
  const auto lt = table(cfg.out_dir / "league_table.csv");
  const auto cj = lt.require_column("journal", "l"), cmed = lt.require_column("median", "l"),
             clev = lt.require_column("target", "l");
  for (const auto& r : lt.rows)
    if (r[clev] == "four_star" && r[cj] != kOtherJournals) m += fmt::format("{},,{}\n", r[cj], 2.0 * csv::parse_double(r[cmed], "l") + 1.0);
  csv::write_file_atomic(tmp.path() / "metrics.csv", m);
  cfg.metrics_csv = tmp.path() / "metrics.csv";
  csv::write_file_atomic(cfg.out_dir / "clustering_report.csv",
                         "journal_id,display_title,article_count,column,identifier_keys\n");
  pipeline::cmd_report(cfg);
  const auto text2 = slurp(cfg.out_dir / "report.txt");
  CHECK(text2.find("Journal metric correlation (11 matched") != std::string::npos);
  CHECK(text2.find("Pearson 1.000") != std::string::npos);
  CHECK(fs::exists(cfg.out_dir / "metric_correlation.csv"));
}

TEST_CASE("config files") {
  TempDir tmp("config");
  const auto p = tmp.path() / "run.json";
  csv::write_file_atomic(p, R"({"submissions": "in/s.csv", "out_dir": "o", "seed": 9, "method": "em",
                                "chains": {"chains": 3}, "cv": {"grid": [1, 2]}})");
  const auto cfg = pipeline::load_config(p);
  CHECK(cfg.submissions == tmp.path() / "in/s.csv");
  CHECK(cfg.out_dir == tmp.path() / "o");
  CHECK(cfg.seed == 9);
  CHECK(cfg.method == pipeline::Method::em);
  CHECK(cfg.chains.chains == 3);
  CHECK(cfg.cv.grid == std::vector<double>{1.0, 2.0});

  csv::write_file_atomic(p, R"({"sed": 9})");
  CHECK_THROWS_AS(pipeline::load_config(p), ConfigError);
  csv::write_file_atomic(p, R"({"chains": {"warmpu": 9}})");
  CHECK_THROWS_AS(pipeline::load_config(p), ConfigError);
  csv::write_file_atomic(p, "{not json");
  CHECK_THROWS_AS(pipeline::load_config(p), ConfigError);
  CHECK_THROWS_AS(pipeline::load_config(tmp.path() / "absent.json"), ConfigError);
  CHECK_THROWS_AS(pipeline::parse_method("gibbs"), ConfigError);

  pipeline::RunConfig bad;
  bad.cv.grid = {};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("command line exit codes") {
  TempDir tmp("exit");
  auto cfg = econ_inputs(tmp.path());
  std::string out;
  CHECK(run_cli("--help", &out) == 0);
  CHECK(out.find("ingest") != std::string::npos);
  CHECK(run_cli("fit --no-such-flag") == 1);
  CHECK(run_cli("frobnicate") == 1);
  CHECK(run_cli(fmt::format("fit --method gibbs --out-dir '{}'", (tmp.path() / "x").string())) == 1);

  const auto missing = tmp.path() / "missing_results.csv";
  CHECK(run_cli(fmt::format("ingest --submissions '{}' --results '{}' --out-dir '{}'", cfg.submissions.string(),
                            missing.string(), cfg.out_dir.string()),
                &out) == 2);
  CHECK(out.find(missing.string()) != std::string::npos);

  CHECK(run_cli(fmt::format("ingest --quiet --submissions '{}' --results '{}' --resolver-cache '{}' --out-dir '{}'",
                            cfg.submissions.string(), cfg.results.string(), cfg.resolver.cache, cfg.out_dir.string()),
                &out) == 0);
  CHECK(out.find("29 named columns") != std::string::npos);

  // Numerical failures map to 3.
  CHECK(static_cast<int>(NumericalError("x").kind()) == 3);
  CHECK(static_cast<int>(DataError("x").kind()) == 2);
  CHECK(static_cast<int>(ConfigError("x").kind()) == 1);
}

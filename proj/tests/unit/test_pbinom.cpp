#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "refscore/numeric.hpp"
#include "refscore/pbinom.hpp"

using namespace refscore;
using refscore::testing::enumerate_pmf;

namespace {

std::vector<double> random_probs(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> p(n);
  for (auto& x : p) x = u(rng);
  return p;
}

}  // namespace

TEST_CASE("log_pmf_dp: small cases") {
  SUBCASE("single fair trial") {
    const std::vector<double> p{0.5};
    const auto t = pbinom::log_pmf_dp(p);
    CHECK(std::exp(t[0]) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(std::exp(t[1]) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("all impossible trials") {
    const std::vector<double> p{0.0, 0.0, 0.0};
    const auto t = pbinom::log_pmf_dp(p);
    CHECK(t[0] == 0.0);
    for (std::size_t k = 1; k <= 3; ++k) CHECK(t[k] == num::neg_inf);
  }
  SUBCASE("three trials against enumeration") {
    const std::vector<double> p{0.1, 0.2, 0.3};
    const auto oracle = enumerate_pmf(p);
    const std::vector<double> frozen{0.504, 0.398, 0.092, 0.006};
    const auto t = pbinom::log_pmf_dp(p);
    for (std::size_t k = 0; k <= 3; ++k) {
      CHECK(oracle[k] == doctest::Approx(frozen[k]).epsilon(1e-12));
      CHECK(std::abs(std::exp(t[k]) - frozen[k]) < 1e-15);
    }
  }
  SUBCASE("sure trials shift the support") {
    const std::vector<double> p{1.0, 0.25, 1.0};
    const auto t = pbinom::log_pmf_dp(p);
    CHECK(t[0] == num::neg_inf);
    CHECK(t[1] == num::neg_inf);
    CHECK(std::exp(t[2]) == doctest::Approx(0.75));
    CHECK(std::exp(t[3]) == doctest::Approx(0.25));
  }
}

TEST_CASE("log_pmf_dp rejects invalid probabilities") {
  CHECK_THROWS_AS(pbinom::log_pmf_dp(std::vector<double>{}), InvalidInput);
  CHECK_THROWS_AS(pbinom::log_pmf_dp(std::vector<double>{0.2, 1.5}), InvalidInput);
  CHECK_THROWS_AS(pbinom::log_pmf_dp(std::vector<double>{-0.1}), InvalidInput);
  CHECK_THROWS_AS(pbinom::log_pmf_dp(std::vector<double>{std::nan("")}), InvalidInput);
}

TEST_CASE("log_pmf_shah examples") {
  CHECK(pbinom::log_pmf_shah(std::vector<double>{0.3, 0.6}, 0) == doctest::Approx(std::log(0.28)).epsilon(1e-14));
  CHECK(pbinom::log_pmf_shah(std::vector<double>{0.1, 0.2, 0.3}, 2) ==
        doctest::Approx(std::log(0.092)).epsilon(1e-13));

  const std::vector<double> half(200, 0.5);
  // Binomial(200, 1/2) at its mode: log C(200,100) - 200 log 2.
  const double analytic = std::lgamma(201.0) - 2.0 * std::lgamma(101.0) - 200.0 * std::log(2.0);
  const double shah = pbinom::log_pmf_shah(half, 100);
  const double dp = pbinom::log_pmf_dp(half)[100];
  CHECK(std::abs(shah - dp) < 1e-8);
  CHECK(std::abs(dp - analytic) < 1e-10);
}

TEST_CASE("log_pmf_shah refuses sure trials") {
  CHECK_THROWS_AS(pbinom::log_pmf_shah(std::vector<double>{0.2, 1.0}, 1), pbinom::UnsupportedInput);
  CHECK_THROWS_AS(pbinom::log_pmf_shah(std::vector<double>{0.2}, 2), InvalidInput);
}

TEST_CASE("moments") {
  auto m = pbinom::moments(std::vector<double>{0.5, 0.5});
  CHECK(m.mean == 1.0);
  CHECK(m.variance == 0.5);
  m = pbinom::moments(std::vector<double>{1.0, 1.0});
  CHECK(m.mean == 2.0);
  CHECK(m.variance == 0.0);
  const std::vector<double> p{0.1, 0.2, 0.3};
  m = pbinom::moments(p);
  CHECK(m.mean == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(m.variance == doctest::Approx(0.46).epsilon(1e-15));
  const auto pmf = enumerate_pmf(p);
  double mean = 0.0, second = 0.0;
  for (std::size_t k = 0; k < pmf.size(); ++k) {
    mean += static_cast<double>(k) * pmf[k];
    second += static_cast<double>(k * k) * pmf[k];
  }
  CHECK(mean == doctest::Approx(m.mean).epsilon(1e-14));
  CHECK(second - mean * mean == doctest::Approx(m.variance).epsilon(1e-13));
}

TEST_CASE("grad_log_pmf examples") {
  SUBCASE("single trial") {
    const auto g = pbinom::grad_log_pmf(std::vector<double>{0.8}, 1);
    REQUIRE(g.size() == 1);
    CHECK(g[0] == doctest::Approx(0.2).epsilon(1e-14));
  }
  SUBCASE("finite differences on three trials") {
    const std::vector<double> p{0.1, 0.2, 0.3};
    const auto g = pbinom::grad_log_pmf(p, 1);
    const auto fd = refscore::testing::fd_grad_log_pmf(p, 1, 1e-6);
    for (std::size_t j = 0; j < p.size(); ++j) CHECK(refscore::testing::rel_err(g[j], fd[j]) < 1e-6);
  }
  SUBCASE("equal probabilities give equal components") {
    const std::vector<double> p{0.35, 0.7, 0.35, 0.1};
    const auto g = pbinom::grad_log_pmf(p, 2);
    CHECK(g[0] == g[2]);
  }
  SUBCASE("degenerate inputs") {
    CHECK_THROWS_AS(pbinom::grad_log_pmf(std::vector<double>{0.0, 0.5}, 1), pbinom::DegenerateInput);
    CHECK_THROWS_AS(pbinom::grad_log_pmf(std::vector<double>{1.0, 0.5}, 1), pbinom::DegenerateInput);
  }
}

TEST_CASE("property: normalisation up to n = 2000") {
  std::mt19937_64 rng(11);
  for (std::size_t n : {1u, 7u, 50u, 400u, 2000u}) {
    const auto p = random_probs(rng, n, 0.0, 1.0);
    const auto t = pbinom::log_pmf_dp(p);
    double s = 0.0;
    for (double l : t.log_probs) {
      CHECK(l <= 0.0);
      s += std::exp(l);
    }
    CHECK(std::abs(s - 1.0) < 1e-10);
    CHECK(std::abs(num::log_sum_exp(t.log_probs)) < 1e-10);
  }
}

TEST_CASE("property: DP matches enumeration for n <= 12") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> len(1, 12);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const auto p = random_probs(rng, len(rng), 0.0, 1.0);
    const auto oracle = enumerate_pmf(p);
    const auto t = pbinom::log_pmf_dp(p);
    for (std::size_t k = 0; k < oracle.size(); ++k) worst = std::max(worst, std::abs(std::exp(t[k]) - oracle[k]));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("property: Shah agrees with DP") {
  std::mt19937_64 rng(13);
  for (std::size_t n : {3u, 20u, 60u, 150u}) {
    const auto p = random_probs(rng, n, 0.0, 0.99);
    const auto dp = pbinom::log_pmf_dp(p);
    const auto shah = pbinom::log_pmf_shah_table(p);
    for (std::size_t k = 0; k <= n; ++k) CHECK(std::abs(dp[k] - shah[k]) < 1e-8);
  }
}

TEST_CASE("property: moments of the table") {
  std::mt19937_64 rng(14);
  for (std::size_t n : {5u, 80u, 600u}) {
    const auto p = random_probs(rng, n, 0.0, 1.0);
    const auto t = pbinom::log_pmf_dp(p);
    double mean = 0.0, second = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
      const double w = std::exp(t[k]);
      mean += static_cast<double>(k) * w;
      second += static_cast<double>(k) * static_cast<double>(k) * w;
    }
    const auto m = pbinom::moments(p);
    CHECK(std::abs(mean - m.mean) < 1e-9 * std::max(1.0, m.mean));
    CHECK(std::abs(second - mean * mean - m.variance) < 1e-9 * std::max(1.0, second));
  }
}

TEST_CASE("property: aggregated-multinomial covariance in the no-dispersion limit") {
  // Single institution, grouped trials: x_j articles in journal j with probability pi_j.
  std::mt19937_64 rng(15);
  std::uniform_int_distribution<int> count(0, 9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<int> x(5);
    std::vector<double> pi(5);
    std::vector<double> expanded;
    for (std::size_t j = 0; j < x.size(); ++j) {
      x[j] = count(rng);
      pi[j] = u(rng);
      expanded.insert(expanded.end(), static_cast<std::size_t>(x[j]), pi[j]);
    }
    if (expanded.empty()) continue;
    // w_j = x_j (x_j + a) / (1 + a) tends to x_j as the dispersion a grows.
    const double a = 1e12;
    double diag_term = 0.0, quad_term = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double w = x[j] * (x[j] + a) / (1.0 + a);
      CHECK(w == doctest::Approx(x[j]).epsilon(1e-9));
      diag_term += pi[j] * w;
      quad_term += pi[j] * w * pi[j];
    }
    const auto m = pbinom::moments(expanded);
    CHECK(diag_term - quad_term == doctest::Approx(m.variance).epsilon(1e-9));
  }
}

TEST_CASE("property: gradient matches finite differences for n <= 50") {
  std::mt19937_64 rng(16);
  std::uniform_int_distribution<std::size_t> len(1, 50);
  double worst = 0.0;
  for (int rep = 0; rep < 25; ++rep) {
    const auto p = random_probs(rng, len(rng), 0.01, 0.99);
    for (std::size_t k = 0; k <= p.size(); ++k) {
      const auto g = pbinom::grad_log_pmf(p, k);
      const auto fd = refscore::testing::fd_grad_log_pmf(p, k, 1e-6);
      for (std::size_t j = 0; j < p.size(); ++j) worst = std::max(worst, refscore::testing::rel_err(g[j], fd[j]));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("property: grouped logit kernel agrees with the probability API") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> z(0.0, 2.0);
  std::uniform_int_distribution<int> count(0, 6);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<pbinom::TrialGroup> groups(4);
    std::vector<double> probs;
    for (auto& g : groups) {
      g.logit = z(rng);
      g.count = count(rng);
      probs.insert(probs.end(), static_cast<std::size_t>(g.count), num::sigmoid(g.logit));
    }
    if (probs.empty()) continue;
    const auto table = pbinom::log_pmf_table(groups);
    const auto ref = pbinom::log_pmf_dp(probs);
    for (std::size_t k = 0; k < table.size(); ++k) CHECK(std::abs(table[k] - ref[k]) < 1e-11);
    const int k = static_cast<int>(probs.size() / 2);
    const auto lg = pbinom::log_pmf_and_grad(groups, k);
    CHECK(std::abs(lg.log_pmf - ref[static_cast<std::size_t>(k)]) < 1e-11);
    // The per-trial gradient, checked against a logit-scale difference of the whole group.
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (groups[g].count == 0) continue;
      auto up = groups, dn = groups;
      up[g].logit += 1e-6;
      dn[g].logit -= 1e-6;
      const double fd = (pbinom::log_pmf_table(up)[static_cast<std::size_t>(k)] -
                         pbinom::log_pmf_table(dn)[static_cast<std::size_t>(k)]) / 2e-6;
      CHECK(refscore::testing::rel_err(groups[g].count * lg.dlogit[g], fd) < 1e-6);
    }
  }
}

TEST_CASE("property: extreme logits stay finite") {
  std::vector<pbinom::TrialGroup> groups{{-40.0, 30}, {38.0, 20}, {0.3, 10}};
  const auto lg = pbinom::log_pmf_and_grad(groups, 55);
  CHECK(std::isfinite(lg.log_pmf));
  for (double g : lg.dlogit) CHECK(std::isfinite(g));
}

TEST_CASE("property: permutation invariance is exact") {
  std::mt19937_64 rng(18);
  auto p = random_probs(rng, 40, 0.0, 1.0);
  const auto a = pbinom::log_pmf_dp(p);
  std::shuffle(p.begin(), p.end(), rng);
  const auto b = pbinom::log_pmf_dp(p);
  CHECK(a.log_probs == b.log_probs);
}

TEST_CASE("property: single entries agree with the log-space table on both sides of the floor") {
  std::mt19937_64 rng(19);
  std::normal_distribution<double> z(0.0, 4.0);
  std::uniform_int_distribution<int> count(1, 40);
  for (int rep = 0; rep < 40; ++rep) {
    std::vector<pbinom::TrialGroup> groups(5);
    int n = 0;
    for (auto& g : groups) {
      g.logit = z(rng);
      g.count = count(rng);
      n += g.count;
    }
    const auto table = pbinom::log_pmf_table(groups);
    for (int k = 0; k <= n; ++k) {
      const double ref = table[static_cast<std::size_t>(k)];
      const double got = pbinom::log_pmf_at(groups, k);
      CHECK(std::abs(got - ref) <= 1e-10 * std::max(1.0, std::abs(ref)));
    }
  }
}

TEST_CASE("property: deep-tail gradients match finite differences") {
  // Pr(K = 60) is far below 1e-200 here, so the log-space route is taken.
  std::vector<pbinom::TrialGroup> groups{{-12.0, 50}, {-9.0, 30}, {1.0, 10}};
  const int k = 60;
  const auto lg = pbinom::log_pmf_and_grad(groups, k);
  CHECK(lg.log_pmf < std::log(1e-200));
  CHECK(std::abs(lg.log_pmf - pbinom::log_pmf_table(groups)[k]) < 1e-9 * std::abs(lg.log_pmf));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto up = groups, dn = groups;
    up[g].logit += 1e-5;
    dn[g].logit -= 1e-5;
    const double fd = (pbinom::log_pmf_table(up)[k] - pbinom::log_pmf_table(dn)[k]) / 2e-5;
    CHECK(refscore::testing::rel_err(groups[g].count * lg.dlogit[g], fd) < 1e-5);
  }
}

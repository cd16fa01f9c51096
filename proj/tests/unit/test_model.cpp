#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "refscore/error.hpp"
#include "refscore/model.hpp"
#include "refscore/numeric.hpp"

using namespace refscore;
using refscore::testing::make_counts;
using refscore::testing::make_profiles;
using refscore::testing::oracle_log_posterior;

namespace {

double lbeta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

ModelState state(std::vector<double> theta, double mu, double gamma, double alpha) {
  ModelState s;
  s.theta = std::move(theta);
  s.mu = mu;
  s.gamma = gamma;
  s.alpha = alpha;
  return s;
}

}  // namespace

TEST_CASE("single column collapses to a binomial likelihood") {
  const auto c = make_counts({{12}});
  const auto prof = make_profiles(c, {5}, {9});
  const auto s = state({0.3}, 0.4, 2.5, 0.0);
  const double pi = num::sigmoid(0.3);
  const double a = 2.5 * 0.4;
  const double b = 2.5 * 0.6;
  const double binom = std::lgamma(13.0) - std::lgamma(6.0) - std::lgamma(8.0) + 5 * std::log(pi) + 7 * std::log1p(-pi);
  const double prior_theta = a * std::log(pi) + b * std::log1p(-pi) - lbeta(a, b);
  const double prior_mu = std::log(0.4 * 0.6);
  const double prior_gamma = 0.1 * std::log(0.05) - std::lgamma(0.1) + 0.1 * std::log(2.5) - 0.05 * 2.5;
  const double prior_alpha = -std::log(3.0 * std::sqrt(2.0 * M_PI));
  CHECK(log_posterior(s, c, prof, TargetLevel::four_star) ==
        doctest::Approx(binom + prior_theta + prior_mu + prior_gamma + prior_alpha).epsilon(1e-12));
}

TEST_CASE("log posterior matches brute-force enumeration on tiny fixtures") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> cnt(0, 2);
  std::normal_distribution<double> nrm(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<std::vector<int>> rows(2, std::vector<int>(2));
    for (auto& r : rows) {
      do {
        r = {cnt(rng), cnt(rng)};
      } while (r[0] + r[1] == 0 || r[0] + r[1] > 3);
    }
    const auto c = make_counts(rows);
    std::vector<int> y4, y34;
    for (std::size_t i = 0; i < 2; ++i) {
      const int n = c.row_total(i);
      std::uniform_int_distribution<int> yd(0, n);
      int u = yd(rng), v = yd(rng);
      y4.push_back(std::min(u, v));
      y34.push_back(std::max(u, v));
    }
    const auto prof = make_profiles(c, y4, y34, {-0.1, 0.1});
    const std::vector<double> th{nrm(rng), nrm(rng)};
    const double mu = 0.2 + 0.6 * std::uniform_real_distribution<double>()(rng);
    const double g = 0.5 + 4.0 * std::uniform_real_distribution<double>()(rng);
    const double al = nrm(rng);
    for (auto t : {TargetLevel::four_star, TargetLevel::three_plus}) {
      const double got = log_posterior(state(th, mu, g, al), c, prof, t);
      const double want = oracle_log_posterior(th, mu, g, al, c, prof, t);
      CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero covariate leaves the likelihood independent of alpha") {
  const auto c = make_counts({{3, 2}, {1, 4}});
  const auto prof = make_profiles(c, {2, 1}, {4, 3}, {0.0, 0.0});
  const std::vector<double> th{0.2, -0.5};
  const double prior0 = -std::log(3.0 * std::sqrt(2.0 * M_PI));
  for (double al : {-2.0, 0.5, 4.0}) {
    const double diff = log_posterior(state(th, 0.5, 2.0, al), c, prof, TargetLevel::four_star) -
                        log_posterior(state(th, 0.5, 2.0, 0.0), c, prof, TargetLevel::four_star);
    CHECK(diff == doctest::Approx(-al * al / 18.0).epsilon(1e-12));
    (void)prior0;
  }
  const auto g = grad_log_posterior(state(th, 0.5, 2.0, 0.0), c, prof, TargetLevel::four_star);
  CHECK(g.back() == 0.0);
}

TEST_CASE("gradient matches finite differences") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> cnt(0, 6);
  std::normal_distribution<double> nrm(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t J = 1 + rep % 5;
    const std::size_t I = 1 + rep % 4;
    std::vector<std::vector<int>> rows(I, std::vector<int>(J));
    for (auto& r : rows) {
      for (auto& x : r) x = cnt(rng);
      r[0] += 1;
    }
    const auto c = make_counts(rows);
    std::vector<int> y4, y34;
    std::vector<double> env;
    for (std::size_t i = 0; i < I; ++i) {
      std::uniform_int_distribution<int> yd(0, c.row_total(i));
      int u = yd(rng), v = yd(rng);
      y4.push_back(std::min(u, v));
      y34.push_back(std::max(u, v));
      env.push_back(0.2 * nrm(rng));
    }
    const auto prof = make_profiles(c, y4, y34, env);
    const PoissonBinomialModel model(c, prof, TargetLevel::three_plus, {}, kernels::Exec::serial);
    std::vector<double> x(model.dimension());
    for (auto& v : x) v = nrm(rng);
    std::vector<double> g(x.size());
    model.log_density_gradient(x, g);
    const auto fd = refscore::testing::fd_gradient([&](const std::vector<double>& z) { return model.log_density(z); },
                                                   x, 1e-5);
    for (std::size_t k = 0; k < x.size(); ++k) {
      INFO("rep " << rep << " component " << k);
      CHECK(refscore::testing::rel_err(g[k], fd[k]) < 1e-5);
    }
  }
}

TEST_CASE("identical columns receive identical theta gradients") {
  const auto c = make_counts({{2, 2, 1}, {3, 3, 0}});
  const auto prof = make_profiles(c, {2, 3}, {4, 5}, {0.1, -0.1});
  const auto g = grad_log_posterior(state({0.4, 0.4, -0.3}, 0.3, 1.5, 0.2), c, prof, TargetLevel::four_star);
  CHECK(g[0] == g[1]);
}

TEST_CASE("column permutation permutes gradients and preserves the density") {
  const auto c = make_counts({{2, 0, 3}, {1, 4, 2}, {0, 2, 2}});
  const auto cp = make_counts({{3, 2, 0}, {2, 1, 4}, {2, 0, 2}});  // columns (3, 1, 2)
  const auto prof = make_profiles(c, {2, 3, 1}, {4, 5, 3}, {0.1, -0.2, 0.1});
  const auto profp = make_profiles(cp, {2, 3, 1}, {4, 5, 3}, {0.1, -0.2, 0.1});
  const std::vector<double> th{0.3, -0.7, 1.1};
  const std::vector<double> thp{1.1, 0.3, -0.7};
  const auto s = state(th, 0.35, 3.0, 0.4);
  const auto sp = state(thp, 0.35, 3.0, 0.4);
  CHECK(log_posterior(s, c, prof, TargetLevel::four_star) ==
        doctest::Approx(log_posterior(sp, cp, profp, TargetLevel::four_star)).epsilon(1e-13));
  const auto g = grad_log_posterior(s, c, prof, TargetLevel::four_star);
  const auto gp = grad_log_posterior(sp, cp, profp, TargetLevel::four_star);
  CHECK(gp[0] == doctest::Approx(g[2]).epsilon(1e-12));
  CHECK(gp[1] == doctest::Approx(g[0]).epsilon(1e-12));
  CHECK(gp[2] == doctest::Approx(g[1]).epsilon(1e-12));
  for (std::size_t k = 3; k < 6; ++k) CHECK(gp[k] == doctest::Approx(g[k]).epsilon(1e-12));
}

TEST_CASE("an empty column contributes only its prior term") {
  const auto c = make_counts({{2, 3}, {4, 1}});
  const auto ce = make_counts({{2, 3, 0}, {4, 1, 0}});
  const auto prof = make_profiles(c, {1, 2}, {3, 4}, {0.05, -0.05});
  const auto profe = make_profiles(ce, {1, 2}, {3, 4}, {0.05, -0.05});
  const double mu = 0.4, gamma = 3.0, te = -0.8;
  const double a = gamma * mu, b = gamma * (1.0 - mu);
  const double prior = a * std::log(num::sigmoid(te)) + b * std::log(num::sigmoid(-te)) - lbeta(a, b);
  const double base = log_posterior(state({0.1, 0.5}, mu, gamma, 0.3), c, prof, TargetLevel::four_star);
  const double with = log_posterior(state({0.1, 0.5, te}, mu, gamma, 0.3), ce, profe, TargetLevel::four_star);
  CHECK(with - base == doctest::Approx(prior).epsilon(1e-12));
}

TEST_CASE("merged column with fixed hyperparameters has the conjugate Beta posterior") {
  // Sum over institutions: 11 successes of 30. Posterior on pi is Beta(a + 11, b + 19);
  // on the logit scale that density picks up the Jacobian pi (1 - pi).
  const auto c = make_counts({{10}, {8}, {12}});
  const auto prof = make_profiles(c, {3, 2, 6}, {3, 2, 6});
  const double mu = 0.3, gamma = 4.0;
  const double a = mu * gamma + 11.0, b = (1.0 - mu) * gamma + 19.0;
  const auto conj = [&](double t) {
    const double pi = num::sigmoid(t);
    return a * std::log(pi) + b * std::log1p(-pi);
  };
  const double t0 = -0.4;
  for (double t : {-2.0, -1.0, 0.0, 0.7, 1.5}) {
    const double diff = log_posterior(state({t}, mu, gamma, 0.0), c, prof, TargetLevel::four_star) -
                        log_posterior(state({t0}, mu, gamma, 0.0), c, prof, TargetLevel::four_star);
    CHECK(diff == doctest::Approx(conj(t) - conj(t0)).epsilon(1e-10));
  }
}

TEST_CASE("density is finite at extreme but valid states") {
  const auto c = make_counts({{30, 5}, {2, 40}});
  const auto prof = make_profiles(c, {30, 0}, {35, 42}, {0.3, -0.3});
  for (double t : {-30.0, -8.0, 8.0, 30.0}) {
    const auto s = state({t, -t}, 0.01, 50.0, 5.0);
    CHECK(std::isfinite(log_posterior(s, c, prof, TargetLevel::four_star)));
    for (double g : grad_log_posterior(s, c, prof, TargetLevel::three_plus)) CHECK(std::isfinite(g));
  }
}

TEST_CASE("serial and parallel kernels agree bit for bit") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> cnt(0, 9);
  std::vector<std::vector<int>> rows(25, std::vector<int>(8));
  for (auto& r : rows)
    for (auto& x : r) x = cnt(rng);
  const auto c = make_counts(rows);
  std::vector<int> y4, y34;
  std::vector<double> env;
  for (std::size_t i = 0; i < c.rows(); ++i) {
    y4.push_back(c.row_total(i) / 4);
    y34.push_back(c.row_total(i) / 2);
    env.push_back(0.01 * static_cast<double>(i) - 0.12);
  }
  const auto prof = make_profiles(c, y4, y34, env);
  const PoissonBinomialModel ser(c, prof, TargetLevel::four_star, {}, kernels::Exec::serial);
  const PoissonBinomialModel par(c, prof, TargetLevel::four_star, {}, kernels::Exec::parallel);
  std::vector<double> x(ser.dimension(), 0.1), gs(x.size()), gp(x.size());
  CHECK(ser.log_density_gradient(x, gs) == par.log_density_gradient(x, gp));
  CHECK(gs == gp);
}

TEST_CASE("input validation") {
  const auto c = make_counts({{2, 3}});
  auto prof = make_profiles(c, {1}, {6});
  CHECK_THROWS_AS(PoissonBinomialModel(c, prof, TargetLevel::three_plus), DataError);
  prof = make_profiles(c, {1}, {3});
  const PoissonBinomialModel m(c, prof, TargetLevel::four_star);
  CHECK_THROWS_AS((void)m.log_density(std::vector<double>{0.0}), InvalidInput);
  CHECK_THROWS_AS((void)m.unconstrain(state({0.0, 0.0}, 1.0, 1.0, 0.0)), InvalidInput);
  CHECK_THROWS_AS((void)m.unconstrain(state({0.0}, 0.5, 1.0, 0.0)), InvalidInput);
}

TEST_CASE("constrain inverts unconstrain and initial points are finite") {
  const auto c = make_counts({{2, 3, 1}, {0, 4, 4}});
  const auto prof = make_profiles(c, {1, 2}, {3, 5});
  const PoissonBinomialModel m(c, prof, TargetLevel::four_star);
  const auto s = state({0.2, -1.0, 3.0}, 0.77, 0.4, -1.5);
  const auto back = m.constrain(m.unconstrain(s));
  CHECK(back.mu == doctest::Approx(0.77).epsilon(1e-14));
  CHECK(back.gamma == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(back.theta == s.theta);
  Rng rng(9);
  for (int k = 0; k < 100; ++k) {
    const auto x = m.initial_point(rng);
    const auto st = m.constrain(x);
    CHECK(st.mu >= 0.2);
    CHECK(st.mu <= 0.8);
    CHECK(st.gamma >= 0.1);
    CHECK(st.gamma <= 10.0);
    CHECK(st.alpha == 0.0);
    CHECK(std::isfinite(m.log_density(x)));
  }
}

TEST_CASE("three-star draws are pairwise differences") {
  const std::vector<double> d4{0.4, 0.1};
  const std::vector<double> d34{0.9, 0.3};
  const auto r = derive_three_star(d4, 1, d34, 1, 2);
  CHECK(r.values[0] == doctest::Approx(0.5));
  CHECK(r.values[1] == doctest::Approx(0.2));

  std::vector<double> same(300);
  for (std::size_t k = 0; k < same.size(); ++k) same[k] = 0.001 * static_cast<double>(k);
  const auto z = derive_three_star(same, 100, same, 100, 3);
  for (double v : z.values) CHECK(v == 0.0);
  for (const auto& pj : z.per_journal) CHECK_FALSE(pj.flagged);
}

TEST_CASE("negative three-star mass is flagged and kept") {
  // Journal 0: pi34 below pi4 in 20 of 100 pairs. Journal 1: never.
  std::vector<double> d4(200), d34(200);
  for (std::size_t d = 0; d < 100; ++d) {
    d4[d * 2] = 0.5;
    d34[d * 2] = d < 20 ? 0.45 : 0.7;
    d4[d * 2 + 1] = 0.2;
    d34[d * 2 + 1] = 0.6;
  }
  const auto r = derive_three_star(d4, 100, d34, 100, 2);
  CHECK(r.per_journal[0].flagged);
  CHECK(r.per_journal[0].negative_fraction == doctest::Approx(0.2));
  CHECK(r.per_journal[0].summary.lo95 < 0.0);
  CHECK_FALSE(r.per_journal[1].flagged);
  // Exactly 10% negative is not "more than 10%".
  for (std::size_t d = 0; d < 100; ++d) d34[d * 2] = d < 10 ? 0.45 : 0.7;
  CHECK_FALSE(derive_three_star(d4, 100, d34, 100, 2).per_journal[0].flagged);
}

TEST_CASE("unequal draw counts are thinned to the shorter stream") {
  std::vector<double> d4(10), d34(4);
  for (std::size_t k = 0; k < 10; ++k) d4[k] = static_cast<double>(k);
  for (std::size_t k = 0; k < 4; ++k) d34[k] = 100.0;
  const auto r = derive_three_star(d4, 10, d34, 4, 1);
  CHECK(r.draws == 4);
  CHECK(thin_indices(10, 4) == std::vector<std::size_t>{0, 2, 5, 7});
  CHECK(r.values[2] == 95.0);
  const auto s = r.per_journal[0].summary;
  CHECK(s.lo95 <= s.lo50);
  CHECK(s.lo50 <= s.median);
  CHECK(s.median <= s.hi50);
  CHECK(s.hi50 <= s.hi95);
}

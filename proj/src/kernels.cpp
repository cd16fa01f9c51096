#include "refscore/kernels.hpp"

#include <limits>

#include <fmt/format.h>

#include "refscore/em.hpp"
#include "refscore/error.hpp"
#include "refscore/metrics.hpp"
#include "refscore/parallel.hpp"
#include "refscore/pbinom.hpp"

namespace refscore::kernels {

void pb_likelihood_terms(const PbData& data, std::span<const double> theta, double alpha, bool with_gradient,
                         Exec exec, PbTerms& out) {
  const std::size_t I = data.institutions;
  const std::size_t J = data.journals;
  if (theta.size() != J) throw InvalidInput("theta length does not match the number of journals");
  out.loglik.assign(I, 0.0);
  if (with_gradient) {
    out.dtheta.assign(I * J, 0.0);
    out.dalpha.assign(I, 0.0);
  }

  parallel_for(I, exec, [&](std::size_t i) {
    std::vector<pbinom::TrialGroup> groups;
    std::vector<std::size_t> cols;
    const double shift = alpha * data.envir[i];
    for (std::size_t j = 0; j < J; ++j) {
      const int x = data.counts[i * J + j];
      if (x > 0) {
        groups.push_back({theta[j] + shift, x});
        cols.push_back(j);
      }
    }
    const int y = data.successes[i];
    if (groups.empty()) {
      out.loglik[i] = y == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
      return;
    }
    if (!with_gradient) {
      out.loglik[i] = pbinom::log_pmf_at(groups, y);
      return;
    }
    const auto lg = pbinom::log_pmf_and_grad(groups, y);
    out.loglik[i] = lg.log_pmf;
    double da = 0.0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const double d = static_cast<double>(groups[g].count) * lg.dlogit[g];
      out.dtheta[i * J + cols[g]] = d;
      da += d;
    }
    out.dalpha[i] = da * data.envir[i];
  });
}

void impute_successes(const CountsMatrix& counts, std::span<const int> successes, std::span<const double> log_odds,
                      Exec exec, std::vector<double>& imputed) {
  const std::size_t I = counts.rows();
  const std::size_t J = counts.cols();
  if (successes.size() != I || log_odds.size() != J) throw InvalidInput("imputation inputs do not match the matrix");
  imputed.assign(I * J, 0.0);
  parallel_for(I, exec, [&](std::size_t i) {
    const std::span<const int> row(counts.counts.data() + i * J, J);
    if (successes[i] < 0 || successes[i] > counts.row_total(i)) {
      throw InvalidInput(fmt::format("institution '{}': {} successes from {} outputs", counts.institutions[i],
                                     successes[i], counts.row_total(i)));
    }
    em::mvh_approx_expectation_log(row, log_odds, successes[i], std::span(imputed).subspan(i * J, J));
  });
}

void draw_indices(const CountsMatrix& counts, const std::vector<InstitutionProfile>& profiles,
                  std::span<const double> draws4, std::span<const double> draws34, std::size_t n_draws, double r3,
                  Exec exec, std::vector<double>& delta, std::vector<double>& money) {
  const std::size_t J = counts.cols();
  if (draws4.size() != n_draws * J || draws34.size() != n_draws * J) {
    throw InvalidInput("draw matrices do not match the number of columns");
  }
  delta.assign(n_draws, 0.0);
  money.assign(n_draws, 0.0);
  parallel_for(n_draws, exec, [&](std::size_t d) {
    const auto pred = metrics::predict(counts, draws4.subspan(d * J, J), draws34.subspan(d * J, J));
    delta[d] = metrics::dissimilarity(profiles, pred);
    money[d] = metrics::money_redistribution(profiles, pred, metrics::FundingConfig{r3});
  });
}

}  // namespace refscore::kernels

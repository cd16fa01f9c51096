#include "refscore/model.hpp"

#include <algorithm>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "refscore/error.hpp"
#include "refscore/numeric.hpp"
#include "refscore/stats.hpp"

namespace refscore {
namespace {

using num::log_sigmoid;
using num::logit;
using num::sigmoid;

double lgam(double x) { return boost::math::lgamma(x); }
double digam(double x) { return boost::math::digamma(x); }

kernels::PbData make_data(const CountsMatrix& counts, const std::vector<InstitutionProfile>& profiles,
                          TargetLevel target) {
  counts.check();
  check_alignment(counts, profiles);
  kernels::PbData d;
  d.institutions = counts.rows();
  d.journals = counts.cols();
  d.counts = counts.counts;
  for (const auto& p : profiles) {
    const int y = observed(p, target);
    if (y < 0 || y > p.total_outputs) {
      throw InvalidInput(fmt::format("institution '{}': target count {} outside [0, {}]", p.institution, y,
                                     p.total_outputs));
    }
    d.successes.push_back(y);
    d.envir.push_back(p.envir);
  }
  return d;
}

}  // namespace

PoissonBinomialModel::PoissonBinomialModel(const CountsMatrix& counts,
                                           const std::vector<InstitutionProfile>& profiles, TargetLevel target,
                                           Hyperpriors hyper, kernels::Exec exec)
    : journals_(counts.cols()), hyper_(hyper), exec_(exec), data_(make_data(counts, profiles, target)) {
  if (journals_ == 0) throw InvalidInput("model needs at least one column");
}

std::vector<std::string> PoissonBinomialModel::parameter_names() const {
  std::vector<std::string> names;
  names.reserve(dimension());
  for (std::size_t j = 0; j < journals_; ++j) names.push_back(fmt::format("theta[{}]", j + 1));
  names.emplace_back("logit_mu");
  names.emplace_back("log_gamma");
  names.emplace_back("alpha");
  return names;
}

double PoissonBinomialModel::log_density(std::span<const double> x) const {
  return evaluate(x, {}, false);
}

double PoissonBinomialModel::log_density_gradient(std::span<const double> x, std::span<double> grad) const {
  if (grad.size() != dimension()) throw InvalidInput("gradient buffer has the wrong size");
  return evaluate(x, grad, true);
}

double PoissonBinomialModel::evaluate(std::span<const double> x, std::span<double> grad, bool with_gradient) const {
  const std::size_t J = journals_;
  if (x.size() != dimension()) {
    throw InvalidInput(fmt::format("parameter vector has length {}, expected {}", x.size(), dimension()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) return -std::numeric_limits<double>::infinity();
  }
  const std::span<const double> theta = x.first(J);
  const double u = x[J];
  const double v = x[J + 1];
  const double alpha = x[J + 2];
  const double mu = sigmoid(u);
  const double gamma = std::exp(v);
  const double a = gamma * mu;
  const double b = gamma * (1.0 - mu);
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(gamma)) return -std::numeric_limits<double>::infinity();

  kernels::PbTerms terms;
  kernels::pb_likelihood_terms(data_, theta, alpha, with_gradient, exec_, terms);

  double lp = 0.0;
  for (double t : terms.loglik) lp += t;

  // Beta prior on sigmoid(theta_j), including the logit Jacobian.
  const double lbeta = lgam(a) + lgam(b) - lgam(a + b);
  double sum_lp = 0.0;
  double sum_l1m = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    const double l = log_sigmoid(theta[j]);
    const double m = log_sigmoid(-theta[j]);
    sum_lp += l;
    sum_l1m += m;
    lp += a * l + b * m - lbeta;
  }

  // mu ~ Uniform(0,1) on the logit scale.
  lp += log_sigmoid(u) + log_sigmoid(-u);

  // gamma ~ Gamma(shape, rate) on the log scale.
  const double k = hyper_.gamma_shape;
  const double r = hyper_.gamma_rate;
  lp += k * std::log(r) - lgam(k) + k * v - r * gamma;

  // alpha ~ Normal(0, sd).
  const double sd = hyper_.alpha_sd;
  lp += -0.5 * (alpha / sd) * (alpha / sd) - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);

  if (!with_gradient) return lp;

  std::fill(grad.begin(), grad.end(), 0.0);
  const std::size_t I = data_.institutions;
  for (std::size_t i = 0; i < I; ++i) {
    for (std::size_t j = 0; j < J; ++j) grad[j] += terms.dtheta[i * J + j];
  }
  double dalpha = 0.0;
  for (std::size_t i = 0; i < I; ++i) dalpha += terms.dalpha[i];

  for (std::size_t j = 0; j < J; ++j) {
    const double pi = sigmoid(theta[j]);
    grad[j] += a * (1.0 - pi) - b * pi;
  }
  const double Jd = static_cast<double>(J);
  const double psi_ab = digam(a + b);
  const double d_a = sum_lp - Jd * (digam(a) - psi_ab);
  const double d_b = sum_l1m - Jd * (digam(b) - psi_ab);
  grad[J] = gamma * mu * (1.0 - mu) * (d_a - d_b) + (1.0 - 2.0 * mu);
  grad[J + 1] = a * d_a + b * d_b + k - r * gamma;
  grad[J + 2] = dalpha - alpha / (sd * sd);
  return lp;
}

std::vector<double> PoissonBinomialModel::unconstrain(const ModelState& s) const {
  if (s.theta.size() != journals_) {
    throw InvalidInput(fmt::format("state has {} journals, model has {}", s.theta.size(), journals_));
  }
  if (!(s.mu > 0.0 && s.mu < 1.0)) throw InvalidInput("mu must lie in (0,1)");
  if (!(s.gamma > 0.0)) throw InvalidInput("gamma must be positive");
  for (double t : s.theta) {
    if (!std::isfinite(t)) throw InvalidInput("theta must be finite");
  }
  std::vector<double> x(s.theta);
  x.push_back(logit(s.mu));
  x.push_back(std::log(s.gamma));
  x.push_back(s.alpha);
  return x;
}

ModelState PoissonBinomialModel::constrain(std::span<const double> x) const {
  if (x.size() != dimension()) throw InvalidInput("parameter vector has the wrong length");
  ModelState s;
  s.theta.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(journals_));
  s.mu = sigmoid(x[journals_]);
  s.gamma = std::exp(x[journals_ + 1]);
  s.alpha = x[journals_ + 2];
  return s;
}

std::vector<double> PoissonBinomialModel::initial_point(Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  ModelState s;
  s.theta.resize(journals_);
  for (auto& t : s.theta) t = normal(rng);
  s.mu = 0.2 + 0.6 * unif(rng);
  const boost::math::gamma_distribution<double> prior(hyper_.gamma_shape, 1.0 / hyper_.gamma_rate);
  const double lo = boost::math::cdf(prior, 0.1);
  const double hi = boost::math::cdf(prior, 10.0);
  s.gamma = boost::math::quantile(prior, lo + (hi - lo) * unif(rng));
  s.gamma = std::clamp(s.gamma, 0.1, 10.0);
  s.alpha = 0.0;
  return unconstrain(s);
}

double log_posterior(const ModelState& state, const CountsMatrix& counts,
                     const std::vector<InstitutionProfile>& profiles, TargetLevel target) {
  const PoissonBinomialModel model(counts, profiles, target, {}, kernels::Exec::serial);
  return model.log_density(model.unconstrain(state));
}

std::vector<double> grad_log_posterior(const ModelState& state, const CountsMatrix& counts,
                                       const std::vector<InstitutionProfile>& profiles, TargetLevel target) {
  const PoissonBinomialModel model(counts, profiles, target, {}, kernels::Exec::serial);
  std::vector<double> g(model.dimension());
  model.log_density_gradient(model.unconstrain(state), g);
  return g;
}

IntervalSummary summarize_sample(std::vector<double> values) {
  if (values.empty()) throw InvalidInput("cannot summarise an empty sample");
  std::sort(values.begin(), values.end());
  IntervalSummary s;
  s.median = stats::quantile_sorted(values, 0.5);
  s.lo50 = stats::quantile_sorted(values, 0.25);
  s.hi50 = stats::quantile_sorted(values, 0.75);
  s.lo95 = stats::quantile_sorted(values, 0.025);
  s.hi95 = stats::quantile_sorted(values, 0.975);
  return s;
}

std::vector<std::size_t> thin_indices(std::size_t n_from, std::size_t n_to) {
  if (n_to > n_from) throw InvalidInput("cannot thin to more draws than available");
  std::vector<std::size_t> idx(n_to);
  for (std::size_t k = 0; k < n_to; ++k) idx[k] = k * n_from / n_to;
  return idx;
}

ThreeStarResult derive_three_star(std::span<const double> draws4, std::size_t n4, std::span<const double> draws34,
                                  std::size_t n34, std::size_t journals) {
  if (draws4.size() != n4 * journals || draws34.size() != n34 * journals) {
    throw InvalidInput("draw matrices do not match their stated shapes");
  }
  if (n4 == 0 || n34 == 0) throw InvalidInput("no draws to pair");
  const std::size_t n = std::min(n4, n34);
  const auto idx4 = thin_indices(n4, n);
  const auto idx34 = thin_indices(n34, n);

  ThreeStarResult out;
  out.draws = n;
  out.journals = journals;
  out.values.resize(n * journals);
  for (std::size_t d = 0; d < n; ++d) {
    for (std::size_t j = 0; j < journals; ++j) {
      out.values[d * journals + j] = draws34[idx34[d] * journals + j] - draws4[idx4[d] * journals + j];
    }
  }
  out.per_journal.resize(journals);
  std::vector<double> col(n);
  for (std::size_t j = 0; j < journals; ++j) {
    std::size_t neg = 0;
    for (std::size_t d = 0; d < n; ++d) {
      col[d] = out.values[d * journals + j];
      if (col[d] < 0.0) ++neg;
    }
    auto& pj = out.per_journal[j];
    pj.negative_fraction = static_cast<double>(neg) / static_cast<double>(n);
    pj.flagged = pj.negative_fraction > 0.10;
    pj.summary = summarize_sample(col);
  }
  return out;
}

}  // namespace refscore

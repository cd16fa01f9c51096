#include "refscore/em.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "refscore/metrics.hpp"
#include "refscore/numeric.hpp"
#include "refscore/parallel.hpp"
#include "refscore/rng.hpp"

namespace refscore::em {
namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double lchoose(int n, int k) {
  return boost::math::lgamma(n + 1.0) - boost::math::lgamma(k + 1.0) - boost::math::lgamma(n - k + 1.0);
}

}  // namespace

void HypergeometricUrn::validate() const {
  if (m.size() != omega.size()) throw InvalidInput("urn: m and omega differ in length");
  if (m.empty()) throw InvalidInput("urn: no colours");
  long long total = 0;
  for (std::size_t j = 0; j < m.size(); ++j) {
    if (m[j] < 0) throw InvalidInput("urn: negative ball count");
    if (!(omega[j] > 0.0) || !std::isfinite(omega[j])) throw InvalidInput("urn: weights must be positive and finite");
    total += m[j];
  }
  if (n < 0 || n > total) throw InvalidInput(fmt::format("urn: cannot draw {} of {} balls", n, total));
}

std::size_t mvh_support_size(const HypergeometricUrn& urn, std::size_t cap) {
  urn.validate();
  const auto n = static_cast<std::size_t>(urn.n);
  std::vector<std::size_t> ways(n + 1, 0), next(n + 1);
  ways[0] = 1;
  for (int mj : urn.m) {
    for (std::size_t k = 0; k <= n; ++k) {
      std::size_t s = 0;
      for (std::size_t y = 0; y <= std::min<std::size_t>(static_cast<std::size_t>(mj), k); ++y) {
        s = std::min(cap, s + ways[k - y]);
      }
      next[k] = s;
    }
    std::swap(ways, next);
  }
  return ways[n];
}

std::vector<double> mvh_exact_expectation(const HypergeometricUrn& urn, std::size_t support_limit) {
  const std::size_t size = mvh_support_size(urn, support_limit + 1);
  if (size > support_limit) {
    throw SupportTooLarge(fmt::format("urn support exceeds {} compositions", support_limit));
  }
  const std::size_t J = urn.m.size();
  std::vector<std::vector<double>> lw(J);  // log C(m_j, y) + y log omega_j
  for (std::size_t j = 0; j < J; ++j) {
    const double lo = std::log(urn.omega[j]);
    for (int y = 0; y <= urn.m[j]; ++y) lw[j].push_back(lchoose(urn.m[j], y) + y * lo);
  }
  std::vector<int> suffix(J + 1, 0);  // balls available from colour j onwards
  for (std::size_t j = J; j-- > 0;) suffix[j] = suffix[j + 1] + urn.m[j];

  // Streaming sums scaled by the running maximum log weight.
  double top = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  std::vector<double> weighted(J, 0.0);
  std::vector<int> y(J, 0);
  const auto visit = [&](double w) {
    if (w > top) {
      const double scale = std::exp(top - w);
      total *= scale;
      for (auto& v : weighted) v *= scale;
      top = w;
    }
    const double e = std::exp(w - top);
    total += e;
    for (std::size_t j = 0; j < J; ++j) weighted[j] += y[j] * e;
  };
  const auto recurse = [&](auto&& self, std::size_t j, int remaining, double w) -> void {
    if (j + 1 == J) {
      y[j] = remaining;
      visit(w + lw[j][static_cast<std::size_t>(remaining)]);
      return;
    }
    const int lo = std::max(0, remaining - suffix[j + 1]);
    const int hi = std::min(urn.m[j], remaining);
    for (int v = lo; v <= hi; ++v) {
      y[j] = v;
      self(self, j + 1, remaining - v, w + lw[j][static_cast<std::size_t>(v)]);
    }
  };
  recurse(recurse, 0, urn.n, 0.0);
  std::vector<double> out(J);
  for (std::size_t j = 0; j < J; ++j) out[j] = weighted[j] / total;
  return out;
}

void mvh_approx_expectation_log(std::span<const int> m, std::span<const double> log_omega, int n,
                                std::span<double> out) {
  const std::size_t J = m.size();
  long long total = 0;
  double lmin = std::numeric_limits<double>::infinity();
  double lmax = -lmin;
  for (std::size_t j = 0; j < J; ++j) {
    total += m[j];
    if (m[j] > 0) {
      lmin = std::min(lmin, log_omega[j]);
      lmax = std::max(lmax, log_omega[j]);
    }
  }
  if (n <= 0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  if (n >= total) {
    for (std::size_t j = 0; j < J; ++j) out[j] = m[j];
    return;
  }
  // t = log r solves f(t) = sum_j m_j sigmoid(l_j + t) - n = 0; f is increasing.
  const double base = num::logit(static_cast<double>(n) / static_cast<double>(total));
  double lo = base - lmax;  // f(lo) <= 0
  double hi = base - lmin;  // f(hi) >= 0
  double t = lo;
  if (hi > lo) {
    t = 0.5 * (lo + hi);
    const double ftol = 1e-13 * std::max(1.0, static_cast<double>(n));
    for (int it = 0; it < 200; ++it) {
      double f = -static_cast<double>(n);
      double fp = 0.0;
      for (std::size_t j = 0; j < J; ++j) {
        if (m[j] == 0) continue;
        const double s = num::sigmoid(log_omega[j] + t);
        f += m[j] * s;
        fp += m[j] * s * (1.0 - s);
      }
      if (std::abs(f) <= ftol) break;
      if (f > 0.0) {
        hi = t;
      } else {
        lo = t;
      }
      double next = fp > 0.0 ? t - f / fp : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (next == t || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t))) break;
      t = next;
    }
  }
  for (std::size_t j = 0; j < J; ++j) out[j] = m[j] == 0 ? 0.0 : m[j] * num::sigmoid(log_omega[j] + t);
}

std::vector<double> mvh_approx_expectation(const HypergeometricUrn& urn) {
  urn.validate();
  std::vector<double> lo(urn.omega.size());
  for (std::size_t j = 0; j < lo.size(); ++j) lo[j] = std::log(urn.omega[j]);
  std::vector<double> out(lo.size());
  mvh_approx_expectation_log(urn.m, lo, urn.n, out);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> RaschFit::log_odds() const {
  std::vector<double> out(beta_hat.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = mu_hat + beta_hat[j];
  return out;
}

std::vector<double> RaschFit::probabilities() const {
  auto out = log_odds();
  for (auto& v : out) v = num::sigmoid(v);
  return out;
}

std::size_t reference_column(const CountsMatrix& counts) {
  if (counts.cols() == 0) throw InvalidInput("counts matrix has no columns");
  const auto it = std::find(counts.columns.begin(), counts.columns.end(), kOtherJournals);
  return it == counts.columns.end() ? counts.cols() - 1 : static_cast<std::size_t>(it - counts.columns.begin());
}

RaschFit fit_rasch(std::span<const double> imputed, const CountsMatrix& trials, double pseudo_strength,
                   int max_iters) {
  const std::size_t I = trials.rows();
  const std::size_t J = trials.cols();
  if (imputed.size() != I * J) throw InvalidInput("imputed matrix does not match the counts matrix");
  if (!(pseudo_strength >= 0.0) || !std::isfinite(pseudo_strength)) {
    throw InvalidInput("pseudo_strength must be non-negative");
  }
  std::vector<double> S(J, 0.0), T(J, 0.0);
  for (std::size_t i = 0; i < I; ++i) {
    for (std::size_t j = 0; j < J; ++j) {
      const double x = trials.at(i, j);
      const double s = imputed[i * J + j];
      if (!(s >= -1e-9 && s <= x + 1e-9)) {
        throw InvalidInput(fmt::format("imputed successes {} outside [0, {}] at ({}, {})", s, x, i, j));
      }
      S[j] += std::clamp(s, 0.0, x);
      T[j] += x;
    }
  }

  RaschFit fit;
  fit.reference = reference_column(trials);
  const bool pseudo = pseudo_strength > 0.0;
  if (T[fit.reference] == 0.0 && !pseudo) {
    throw DataError(fmt::format("reference column '{}' has no articles", trials.columns[fit.reference]));
  }
  fit.identified.assign(J, 0);
  // Parameter layout: mu, [alpha], free betas.
  std::vector<std::ptrdiff_t> beta_index(J, -1);
  std::ptrdiff_t P = pseudo ? 2 : 1;
  for (std::size_t j = 0; j < J; ++j) {
    fit.identified[j] = T[j] > 0.0 || pseudo ? 1 : 0;
    if (j != fit.reference && fit.identified[j]) beta_index[j] = P++;
  }

  struct Cell {
    std::size_t column;
    bool pseudo;
    double successes;
    double trials;
  };
  std::vector<Cell> cells;
  for (std::size_t j = 0; j < J; ++j) {
    if (T[j] > 0.0) cells.push_back({j, false, S[j], T[j]});
    if (pseudo) cells.push_back({j, true, 0.5 * pseudo_strength, pseudo_strength});
  }
  double s_all = 0.0, t_all = 0.0;
  for (const auto& c : cells) {
    s_all += c.successes;
    t_all += c.trials;
  }

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(P);
  theta[0] = num::logit(std::clamp(s_all / t_all, 1e-6, 1.0 - 1e-6));
  const auto eta = [&](const Eigen::VectorXd& th, const Cell& c) {
    double e = th[0];
    if (c.pseudo) e += th[1];
    if (beta_index[c.column] >= 0) e += th[beta_index[c.column]];
    return e;
  };
  const auto objective = [&](const Eigen::VectorXd& th) {
    double ll = 0.0;
    for (const auto& c : cells) {
      const double e = eta(th, c);
      ll += c.successes * e - c.trials * softplus(e);
    }
    return ll;
  };

  double ll = objective(theta);
  fit.objective_trace.push_back(ll);
  Eigen::VectorXd grad(P);
  Eigen::MatrixXd hess(P, P);
  for (fit.iterations = 0;; ++fit.iterations) {
    grad.setZero();
    hess.setZero();
    for (const auto& c : cells) {
      const double p = num::sigmoid(eta(theta, c));
      const double r = c.successes - c.trials * p;
      const double w = c.trials * p * (1.0 - p);
      std::ptrdiff_t idx[3];
      int k = 0;
      idx[k++] = 0;
      if (c.pseudo) idx[k++] = 1;
      if (beta_index[c.column] >= 0) idx[k++] = beta_index[c.column];
      for (int a = 0; a < k; ++a) {
        grad[idx[a]] += r;
        for (int b = 0; b < k; ++b) hess(idx[a], idx[b]) += w;
      }
    }
    fit.gradient_norm = grad.norm();
    if (fit.gradient_norm < 1e-8) {
      fit.converged = true;
      break;
    }
    if (fit.iterations >= max_iters) break;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    if (!step.allFinite()) break;
    double scale = 1.0;
    Eigen::VectorXd trial = theta + step;
    double ll_trial = objective(trial);
    for (int halving = 0; halving < 40 && !(ll_trial >= ll); ++halving) {
      scale *= 0.5;
      trial = theta + scale * step;
      ll_trial = objective(trial);
    }
    if (!(ll_trial >= ll)) break;  // no ascent direction left at working precision
    theta = trial;
    ll = ll_trial;
    fit.objective_trace.push_back(ll);
  }

  fit.mu_hat = theta[0];
  fit.alpha_hat = pseudo ? theta[1] : 0.0;
  fit.beta_hat.assign(J, 0.0);
  for (std::size_t j = 0; j < J; ++j) {
    if (beta_index[j] >= 0) fit.beta_hat[j] = theta[beta_index[j]];
  }
  fit.log_likelihood = ll;
  return fit;
}

// ---------------------------------------------------------------------------

void EmConfig::validate() const {
  if (!(pseudo_strength > 0.0) || !std::isfinite(pseudo_strength)) throw ConfigError("pseudo_strength must be positive");
  if (!(tol > 0.0)) throw ConfigError("EM tolerance must be positive");
  if (max_iters < 1) throw ConfigError("EM max_iters must be at least 1");
}

EmResult em_run(const CountsMatrix& counts, const std::vector<InstitutionProfile>& profiles, TargetLevel target,
                const EmConfig& config) {
  config.validate();
  counts.check();
  check_alignment(counts, profiles);
  const std::size_t J = counts.cols();
  const std::size_t ref = reference_column(counts);
  std::vector<int> y;
  for (const auto& p : profiles) y.push_back(observed(p, target));

  Rng rng = make_rng(config.init_seed, "em.init");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> log_odds(J);
  for (auto& v : log_odds) v = normal(rng);
  std::vector<double> beta_prev(J);
  for (std::size_t j = 0; j < J; ++j) beta_prev[j] = log_odds[j] - log_odds[ref];

  EmResult res;
  constexpr int kPatience = 50;
  double best_delta = std::numeric_limits<double>::infinity();
  int best_iter = 0;
  for (int it = 1; it <= config.max_iters; ++it) {
    kernels::impute_successes(counts, y, log_odds, config.exec, res.imputed);
    res.fit = fit_rasch(res.imputed, counts, config.pseudo_strength);
    log_odds = res.fit.log_odds();
    double delta = 0.0;
    for (std::size_t j = 0; j < J; ++j) delta = std::max(delta, std::abs(res.fit.beta_hat[j] - beta_prev[j]));
    beta_prev = res.fit.beta_hat;
    res.max_delta_trace.push_back(delta);
    res.iterations = it;
    if (delta < config.tol) {
      res.converged = true;
      break;
    }
    if (delta < best_delta) {
      best_delta = delta;
      best_iter = it;
    } else if (it - best_iter >= kPatience) {
      res.oscillating = true;
      break;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------

CvTarget parse_cv_target(std::string_view s) {
  if (s == "four_star" || s == "4") return CvTarget::four_star;
  if (s == "three_plus" || s == "34") return CvTarget::three_plus;
  if (s == "both") return CvTarget::both;
  throw ConfigError(fmt::format("unknown target '{}' (four_star, three_plus, both)", s));
}

const char* to_string(CvTarget t) noexcept {
  switch (t) {
    case CvTarget::four_star: return "four_star";
    case CvTarget::three_plus: return "three_plus";
    case CvTarget::both: return "both";
  }
  return "both";
}

void CvConfig::validate() const {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (grid.empty()) throw ConfigError("cross-validation grid is empty");
  for (double g : grid) {
    if (!(g > 0.0) || !std::isfinite(g)) throw ConfigError("grid values must be positive");
  }
  em.validate();
}

CountsMatrix select_rows(const CountsMatrix& counts, std::span<const std::size_t> rows) {
  CountsMatrix out;
  out.columns = counts.columns;
  for (std::size_t i : rows) {
    out.institutions.push_back(counts.institutions.at(i));
    for (std::size_t j = 0; j < counts.cols(); ++j) out.counts.push_back(counts.at(i, j));
  }
  return out;
}

CvResult cross_validate(const CountsMatrix& counts, const std::vector<InstitutionProfile>& profiles, CvTarget target,
                        const CvConfig& cv) {
  cv.validate();
  counts.check();
  check_alignment(counts, profiles);
  const std::size_t I = counts.rows();
  const std::size_t J = counts.cols();
  const auto K = static_cast<std::size_t>(cv.folds);
  if (I < K) throw ConfigError(fmt::format("{} institutions cannot fill {} folds", I, K));
  const std::size_t ref = reference_column(counts);

  CvResult out;
  out.grid = cv.grid;
  std::vector<std::size_t> perm(I);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_rng(cv.seed, "cv.folds");
  std::shuffle(perm.begin(), perm.end(), rng);
  out.fold_of.assign(I, 0);
  for (std::size_t k = 0; k < I; ++k) out.fold_of[perm[k]] = static_cast<int>(k % K) + 1;

  const std::size_t G = cv.grid.size();
  out.rows.resize(G * K);
  parallel_for(G * K, cv.em.exec, [&](std::size_t task) {
    const std::size_t g = task / K;
    const int fold = static_cast<int>(task % K) + 1;
    std::vector<std::size_t> train, held;
    for (std::size_t i = 0; i < I; ++i) (out.fold_of[i] == fold ? held : train).push_back(i);
    const auto c_train = select_rows(counts, train);
    const auto c_held = select_rows(counts, held);
    std::vector<InstitutionProfile> p_train, p_held;
    for (std::size_t i : train) p_train.push_back(profiles[i]);
    for (std::size_t i : held) p_held.push_back(profiles[i]);

    EmConfig ec = cv.em;
    ec.pseudo_strength = cv.grid[g];
    ec.init_seed = substream_seed(cv.seed, "cv.em", task);
    ec.exec = kernels::Exec::serial;

    std::vector<std::uint8_t> seen(J, 0);
    for (std::size_t j = 0; j < J; ++j) seen[j] = c_train.col_total(j) > 0 ? 1 : 0;
    int unseen = 0;
    for (std::size_t j = 0; j < J; ++j) {
      if (!seen[j] && c_held.col_total(j) > 0) ++unseen;
    }
    const auto probs = [&](TargetLevel level) {
      const auto fit = em_run(c_train, p_train, level, ec).fit;
      auto p = fit.probabilities();
      for (std::size_t j = 0; j < J; ++j) {
        if (!seen[j]) p[j] = num::sigmoid(fit.mu_hat + fit.beta_hat[ref]);
      }
      return p;
    };

    double delta = 0.0;
    if (target == CvTarget::both) {
      const auto pi4 = probs(TargetLevel::four_star);
      const auto pi34 = probs(TargetLevel::three_plus);
      delta = metrics::dissimilarity(p_held, metrics::predict(c_held, pi4, pi34));
    } else {
      const TargetLevel level = target == CvTarget::four_star ? TargetLevel::four_star : TargetLevel::three_plus;
      const auto pi = probs(level);
      const auto pred = metrics::predict(c_held, pi, pi);
      std::vector<int> obs, tot;
      std::vector<double> hat;
      for (std::size_t k = 0; k < held.size(); ++k) {
        obs.push_back(observed(p_held[k], level));
        tot.push_back(p_held[k].total_outputs);
        hat.push_back(pred[k].yhat4);
      }
      delta = metrics::dissimilarity_binary(obs, hat, tot);
    }
    out.rows[task] = CvRow{cv.grid[g], fold, delta, unseen};
  });

  out.mean_delta.assign(G, 0.0);
  for (const auto& r : out.rows) {
    out.unseen_total += r.unseen_columns;
  }
  for (std::size_t g = 0; g < G; ++g) {
    double s = 0.0;
    for (std::size_t f = 0; f < K; ++f) s += out.rows[g * K + f].delta;
    out.mean_delta[g] = s / static_cast<double>(K);
  }
  const auto best = std::min_element(out.mean_delta.begin(), out.mean_delta.end()) - out.mean_delta.begin();
  out.best = cv.grid[static_cast<std::size_t>(best)];
  return out;
}

}  // namespace refscore::em

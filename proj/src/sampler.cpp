#include "refscore/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "refscore/csv.hpp"
#include "refscore/error.hpp"
#include "refscore/numeric.hpp"
#include "refscore/parallel.hpp"
#include "refscore/stats.hpp"

namespace refscore::sampler {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMaxDeltaH = 1000.0;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool finite_all(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// Nesterov dual averaging of log step size toward a target acceptance rate.
class DualAveraging {
 public:
  explicit DualAveraging(double delta) : delta_(delta) {}

  void restart(double eps) {
    mu_ = std::log(10.0 * eps);
    counter_ = 0.0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }

  double learn(double accept) {
    counter_ += 1.0;
    accept = std::min(1.0, accept);
    const double eta = 1.0 / (counter_ + kT0);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept);
    const double x = mu_ - s_bar_ * std::sqrt(counter_) / kGamma;
    const double x_eta = std::pow(counter_, -kKappa);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }

  [[nodiscard]] double final_step() const { return std::exp(x_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
  double delta_;
  double mu_ = 0.0;
  double counter_ = 0.0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
};

struct TransitionStats {
  double accept = 0.0;
  bool divergent = false;
  int depth = 0;
  int n_leapfrog = 0;
};

class Chain {
 public:
  Chain(const LogDensity& target, const ChainConfig& cfg, Rng rng, std::vector<double> q0)
      : target_(target),
        cfg_(cfg),
        rng_(std::move(rng)),
        dim_(q0.size()),
        inv_metric_(dim_, 1.0),
        z_(make_phase_point(target, std::move(q0), std::vector<double>(dim_, 0.0))),
        adapt_(cfg.target_accept) {}

  void find_reasonable_step() {
    const PhasePoint start = z_;
    sample_momentum(z_);
    double h0 = hamiltonian(z_, inv_metric_);
    leapfrog(target_, z_, inv_metric_, eps_);
    double h = energy(z_);
    double delta = h0 - h;
    const int direction = delta > std::log(0.8) ? 1 : -1;
    for (;;) {
      z_ = start;
      sample_momentum(z_);
      h0 = hamiltonian(z_, inv_metric_);
      leapfrog(target_, z_, inv_metric_, eps_);
      h = energy(z_);
      delta = h0 - h;
      if (direction == 1 && !(delta > std::log(0.8))) break;
      if (direction == -1 && !(delta < std::log(0.8))) break;
      eps_ = direction == 1 ? 2.0 * eps_ : 0.5 * eps_;
      if (eps_ > 1e7) throw NumericalError("step size search diverged: posterior looks improper");
      if (eps_ == 0.0) throw NumericalError("step size search collapsed to zero: density is not smooth");
    }
    z_ = start;
  }

  void warmup_and_sample(int warmup, int kept, std::span<double> out_values, std::span<double> out_accept,
                         std::span<std::uint8_t> out_div, std::span<int> out_depth, std::span<int> out_leap) {
    find_reasonable_step();
    adapt_.restart(eps_);

    const int metric_begin = warmup / 2;
    const int metric_end = warmup * 9 / 10;
    std::vector<double> sum(dim_, 0.0), sumsq(dim_, 0.0);
    std::vector<double> shift;
    int n_window = 0;

    for (int it = 0; it < warmup; ++it) {
      const auto st = transition();
      eps_ = adapt_.learn(st.accept);
      if (it >= metric_begin && it < metric_end) {
        if (shift.empty()) shift = z_.q;
        for (std::size_t k = 0; k < dim_; ++k) {
          const double d = z_.q[k] - shift[k];
          sum[k] += d;
          sumsq[k] += d * d;
        }
        ++n_window;
      }
      if (it + 1 == metric_end && n_window >= 3) {
        const double n = n_window;
        for (std::size_t k = 0; k < dim_; ++k) {
          const double var = (sumsq[k] - sum[k] * sum[k] / n) / (n - 1.0);
          inv_metric_[k] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
        }
        find_reasonable_step();
        adapt_.restart(eps_);
      }
    }
    if (warmup > 0) eps_ = adapt_.final_step();

    for (int it = 0; it < kept; ++it) {
      const auto st = transition();
      const auto t = static_cast<std::size_t>(it);
      std::copy(z_.q.begin(), z_.q.end(), out_values.begin() + static_cast<std::ptrdiff_t>(t * dim_));
      out_accept[t] = st.accept;
      out_div[t] = st.divergent ? 1 : 0;
      out_depth[t] = st.depth;
      out_leap[t] = st.n_leapfrog;
    }
  }

  [[nodiscard]] double step_size() const { return eps_; }
  [[nodiscard]] const std::vector<double>& inv_metric() const { return inv_metric_; }

 private:
  double energy(const PhasePoint& z) const {
    const double h = hamiltonian(z, inv_metric_);
    return std::isnan(h) ? kInf : h;
  }

  void sample_momentum(PhasePoint& z) {
    for (std::size_t k = 0; k < dim_; ++k) z.p[k] = normal_(rng_) / std::sqrt(inv_metric_[k]);
  }

  void sharp(std::span<const double> p, std::vector<double>& out) const {
    out.resize(dim_);
    for (std::size_t k = 0; k < dim_; ++k) out[k] = inv_metric_[k] * p[k];
  }

  static bool criterion(std::span<const double> p_sharp_minus, std::span<const double> p_sharp_plus,
                        std::span<const double> rho) {
    return dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0;
  }

  static void add(std::vector<double>& out, std::span<const double> a, std::span<const double> b) {
    out.resize(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] + b[k];
  }

  TransitionStats transition() {
    sample_momentum(z_);
    const double h0 = hamiltonian(z_, inv_metric_);

    PhasePoint z_fwd = z_;
    PhasePoint z_bck = z_;
    PhasePoint z_sample = z_;
    PhasePoint z_propose = z_;

    std::vector<double> p_sharp;
    sharp(z_.p, p_sharp);
    std::vector<double> p_fwd_fwd = z_.p, p_sharp_fwd_fwd = p_sharp;
    std::vector<double> p_fwd_bck = z_.p, p_sharp_fwd_bck = p_sharp;
    std::vector<double> p_bck_fwd = z_.p, p_sharp_bck_fwd = p_sharp;
    std::vector<double> p_bck_bck = z_.p, p_sharp_bck_bck = p_sharp;
    std::vector<double> rho = z_.p;
    std::vector<double> rho_ext;

    double log_sum_weight = 0.0;
    depth_ = 0;
    n_leapfrog_ = 0;
    sum_metro_prob_ = 0.0;
    divergent_ = false;

    while (depth_ < cfg_.max_leapfrog_depth) {
      std::vector<double> rho_fwd(dim_, 0.0), rho_bck(dim_, 0.0);
      bool valid = false;
      double log_sum_weight_subtree = -kInf;
      if (uniform_(rng_) > 0.5) {
        z_ = z_fwd;
        rho_bck = rho;
        p_bck_fwd = p_fwd_fwd;
        p_sharp_bck_fwd = p_sharp_fwd_fwd;
        valid = build_tree(depth_, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd, h0,
                           1.0, log_sum_weight_subtree);
        z_fwd = z_;
      } else {
        z_ = z_bck;
        rho_fwd = rho;
        p_fwd_bck = p_bck_bck;
        p_sharp_fwd_bck = p_sharp_bck_bck;
        valid = build_tree(depth_, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd, p_bck_bck, h0,
                           -1.0, log_sum_weight_subtree);
        z_bck = z_;
      }
      if (!valid) break;
      ++depth_;

      if (log_sum_weight_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (uniform_(rng_) < std::exp(log_sum_weight_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = num::log_add_exp(log_sum_weight, log_sum_weight_subtree);

      add(rho, rho_bck, rho_fwd);
      bool persist = criterion(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      add(rho_ext, rho_bck, p_fwd_bck);
      persist = persist && criterion(p_sharp_bck_bck, p_sharp_fwd_bck, rho_ext);
      add(rho_ext, rho_fwd, p_bck_fwd);
      persist = persist && criterion(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_ext);
      if (!persist) break;
    }

    z_ = z_sample;
    TransitionStats st;
    st.accept = n_leapfrog_ > 0 ? sum_metro_prob_ / n_leapfrog_ : 0.0;
    st.divergent = divergent_;
    st.depth = depth_;
    st.n_leapfrog = n_leapfrog_;
    return st;
  }

  bool build_tree(int depth, PhasePoint& z_propose, std::vector<double>& p_sharp_beg,
                  std::vector<double>& p_sharp_end, std::vector<double>& rho, std::vector<double>& p_beg,
                  std::vector<double>& p_end, double h0, double sign, double& log_sum_weight) {
    if (depth == 0) {
      leapfrog(target_, z_, inv_metric_, sign * eps_);
      ++n_leapfrog_;
      const double h = energy(z_);
      if (h - h0 > kMaxDeltaH) divergent_ = true;
      log_sum_weight = num::log_add_exp(log_sum_weight, h0 - h);
      sum_metro_prob_ += h0 - h > 0.0 ? 1.0 : std::exp(h0 - h);
      z_propose = z_;
      sharp(z_.p, p_sharp_beg);
      p_sharp_end = p_sharp_beg;
      for (std::size_t k = 0; k < dim_; ++k) rho[k] += z_.p[k];
      p_beg = z_.p;
      p_end = p_beg;
      return !divergent_;
    }

    double log_sum_weight_init = -kInf;
    std::vector<double> p_init_end(dim_), p_sharp_init_end(dim_), rho_init(dim_, 0.0);
    if (!build_tree(depth - 1, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg, p_init_end, h0, sign,
                    log_sum_weight_init)) {
      return false;
    }

    PhasePoint z_propose_final = z_;
    double log_sum_weight_final = -kInf;
    std::vector<double> p_final_beg(dim_), p_sharp_final_beg(dim_), rho_final(dim_, 0.0);
    if (!build_tree(depth - 1, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final, p_final_beg, p_end, h0,
                    sign, log_sum_weight_final)) {
      return false;
    }

    const double log_sum_weight_subtree = num::log_add_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = num::log_add_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = z_propose_final;
    } else if (uniform_(rng_) < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
      z_propose = z_propose_final;
    }

    std::vector<double> rho_subtree;
    add(rho_subtree, rho_init, rho_final);
    for (std::size_t k = 0; k < dim_; ++k) rho[k] += rho_subtree[k];

    bool persist = criterion(p_sharp_beg, p_sharp_end, rho_subtree);
    std::vector<double> rho_ext;
    add(rho_ext, rho_init, p_final_beg);
    persist = persist && criterion(p_sharp_beg, p_sharp_final_beg, rho_ext);
    add(rho_ext, rho_final, p_init_end);
    persist = persist && criterion(p_sharp_init_end, p_sharp_end, rho_ext);
    return persist;
  }

  const LogDensity& target_;
  const ChainConfig& cfg_;
  Rng rng_;
  std::size_t dim_;
  std::vector<double> inv_metric_;
  PhasePoint z_;
  DualAveraging adapt_;
  double eps_ = 1.0;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};

  int depth_ = 0;
  int n_leapfrog_ = 0;
  double sum_metro_prob_ = 0.0;
  bool divergent_ = false;
};

std::vector<double> initialise(const LogDensity& target, const InitStrategy& init, Rng& rng) {
  std::vector<double> grad(target.dimension());
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto q = init(rng);
    if (q.size() != target.dimension()) throw InvalidInput("initial point has the wrong dimension");
    const double lp = target.log_density_gradient(q, grad);
    if (std::isfinite(lp) && finite_all(grad)) return q;
  }
  throw NumericalError("no finite initial point after 100 attempts");
}

}  // namespace

void ChainConfig::validate() const {
  if (chains < 1) throw ConfigError("chains must be at least 1");
  if (warmup_iters < 0) throw ConfigError("warmup_iters must be non-negative");
  if (sample_iters < 1) throw ConfigError("sample_iters must be at least 1");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw ConfigError("target_accept must lie in (0,1)");
  if (max_leapfrog_depth < 1) throw ConfigError("max_leapfrog_depth must be at least 1");
}

PhasePoint make_phase_point(const LogDensity& target, std::vector<double> q, std::vector<double> p) {
  PhasePoint z;
  z.q = std::move(q);
  z.p = std::move(p);
  z.grad.resize(z.q.size());
  z.logp = target.log_density_gradient(z.q, z.grad);
  return z;
}

void leapfrog(const LogDensity& target, PhasePoint& z, std::span<const double> inv_metric, double eps) {
  const std::size_t n = z.q.size();
  for (std::size_t k = 0; k < n; ++k) z.p[k] += 0.5 * eps * z.grad[k];
  for (std::size_t k = 0; k < n; ++k) z.q[k] += eps * inv_metric[k] * z.p[k];
  z.logp = target.log_density_gradient(z.q, z.grad);
  for (std::size_t k = 0; k < n; ++k) z.p[k] += 0.5 * eps * z.grad[k];
}

double hamiltonian(const PhasePoint& z, std::span<const double> inv_metric) {
  double kinetic = 0.0;
  for (std::size_t k = 0; k < z.p.size(); ++k) kinetic += inv_metric[k] * z.p[k] * z.p[k];
  return -z.logp + 0.5 * kinetic;
}

PosteriorDraws run_chains(const LogDensity& target, const InitStrategy& init, const ChainConfig& config) {
  config.validate();
  const std::size_t dim = target.dimension();
  const auto C = static_cast<std::size_t>(config.chains);
  const auto T = static_cast<std::size_t>(config.sample_iters);

  PosteriorDraws out;
  out.names = target.parameter_names();
  out.chains = C;
  out.iterations = T;
  out.values.resize(C * T * dim);
  out.accept_stat.resize(C * T);
  out.divergent.resize(C * T);
  out.tree_depth.resize(C * T);
  out.n_leapfrog.resize(C * T);
  out.step_size.resize(C);
  out.inv_metric.resize(C * dim);

  auto run_one = [&](std::size_t c) {
    Rng rng = make_rng(config.seed, "sampler.chain", c);
    auto q0 = initialise(target, init, rng);
    Chain chain(target, config, std::move(rng), std::move(q0));
    const auto span_of = [&](auto& v, std::size_t width) {
      return std::span(v).subspan(c * T * width, T * width);
    };
    chain.warmup_and_sample(config.warmup_iters, config.sample_iters, span_of(out.values, dim),
                            span_of(out.accept_stat, 1), span_of(out.divergent, 1), span_of(out.tree_depth, 1),
                            span_of(out.n_leapfrog, 1));
    out.step_size[c] = chain.step_size();
    std::copy(chain.inv_metric().begin(), chain.inv_metric().end(),
              out.inv_metric.begin() + static_cast<std::ptrdiff_t>(c * dim));
  };

  parallel_for(C, config.exec, run_one);
  if (!finite_all(out.values)) throw NumericalError("sampler produced non-finite draws");
  return out;
}

std::vector<std::vector<double>> PosteriorDraws::by_chain(std::size_t param) const {
  std::vector<std::vector<double>> out(chains, std::vector<double>(iterations));
  for (std::size_t c = 0; c < chains; ++c) {
    for (std::size_t t = 0; t < iterations; ++t) out[c][t] = at(c, t, param);
  }
  return out;
}

std::vector<double> PosteriorDraws::pooled(std::size_t param) const {
  std::vector<double> out;
  out.reserve(chains * iterations);
  for (std::size_t c = 0; c < chains; ++c) {
    for (std::size_t t = 0; t < iterations; ++t) out.push_back(at(c, t, param));
  }
  return out;
}

std::size_t PosteriorDraws::divergences() const {
  return static_cast<std::size_t>(std::count(divergent.begin(), divergent.end(), std::uint8_t{1}));
}

double PosteriorDraws::divergent_fraction() const {
  return divergent.empty() ? 0.0 : static_cast<double>(divergences()) / static_cast<double>(divergent.size());
}

// ---------------------------------------------------------------------------
// Diagnostics.

namespace {

std::vector<std::vector<double>> split(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

std::vector<std::vector<double>> rank_normalize(const std::vector<std::vector<double>>& chains) {
  std::vector<double> pooled;
  for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
  const auto ranks = stats::average_ranks(pooled);
  const double S = static_cast<double>(pooled.size());
  std::vector<std::vector<double>> out;
  std::size_t k = 0;
  for (const auto& c : chains) {
    std::vector<double> z(c.size());
    for (auto& v : z) v = num::probit((ranks[k++] - 0.375) / (S + 0.25));
    out.push_back(std::move(z));
  }
  return out;
}

double rhat_basic(const std::vector<std::vector<double>>& chains) {
  const double m = static_cast<double>(chains.size());
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(stats::mean(c));
    vars.push_back(stats::variance(c));
  }
  const double W = stats::mean(vars);
  const double B = n * stats::variance(means);
  (void)m;
  return std::sqrt(((n - 1.0) / n * W + B / n) / W);
}

double ess_geyer(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  std::vector<double> means(m);
  std::vector<double> chain_var(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = stats::mean(chains[c]);
    chain_var[c] = stats::variance(chains[c]);
  }
  const double nd = static_cast<double>(n);
  const double mean_var = stats::mean(chain_var);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) var_plus += stats::variance(means);

  // Mean over chains of the biased autocovariance at lag t.
  const auto acov = [&](std::size_t t) {
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i + t < n; ++i) s += (chains[c][i] - means[c]) * (chains[c][i + t] - means[c]);
      total += s / nd;
    }
    return total / static_cast<double>(m);
  };
  const auto rho_at = [&](std::size_t t) { return 1.0 - (mean_var - acov(t)) / var_plus; };

  std::vector<double> rho(n, 0.0);
  double even = 1.0;
  double odd = rho_at(1);
  rho[0] = even;
  rho[1] = odd;
  std::size_t t = 1;
  while (t + 5 < n && even + odd > 0.0) {
    even = rho_at(t + 1);
    odd = rho_at(t + 2);
    if (even + odd >= 0.0) {
      rho[t + 1] = even;
      rho[t + 2] = odd;
    }
    t += 2;
  }
  const std::size_t max_t = t;
  if (even > 0.0 && max_t + 1 < n) rho[max_t + 1] = even;
  for (std::size_t u = 1; u + 2 <= max_t; u += 2) {
    if (rho[u + 1] + rho[u + 2] > rho[u - 1] + rho[u]) {
      rho[u + 1] = 0.5 * (rho[u - 1] + rho[u]);
      rho[u + 2] = rho[u + 1];
    }
  }
  const double total = static_cast<double>(m) * nd;
  double tau = -1.0;
  for (std::size_t u = 0; u <= max_t && u < n; ++u) tau += 2.0 * rho[u];
  if (max_t + 1 < n) tau += rho[max_t + 1];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

bool is_constant(const std::vector<std::vector<double>>& chains) {
  const double first = chains.front().front();
  for (const auto& c : chains) {
    for (double v : c) {
      if (v != first) return false;
    }
  }
  return true;
}

void require_shape(const std::vector<std::vector<double>>& chains) {
  if (chains.empty() || chains.front().size() < 4) throw InvalidInput("need at least 4 draws per chain");
  for (const auto& c : chains) {
    if (c.size() != chains.front().size()) throw InvalidInput("chains have unequal lengths");
  }
}

}  // namespace

double split_rhat(const std::vector<std::vector<double>>& chains) {
  require_shape(chains);
  const auto s = split(chains);
  const double bulk = rhat_basic(rank_normalize(s));
  std::vector<double> pooled;
  for (const auto& c : s) pooled.insert(pooled.end(), c.begin(), c.end());
  const double med = stats::median(pooled);
  auto folded = s;
  for (auto& c : folded) {
    for (auto& v : c) v = std::abs(v - med);
  }
  const double tail = rhat_basic(rank_normalize(folded));
  return std::max(bulk, tail);
}

double ess_bulk(const std::vector<std::vector<double>>& chains) {
  require_shape(chains);
  return ess_geyer(rank_normalize(split(chains)));
}

double ess_basic(const std::vector<std::vector<double>>& chains) {
  require_shape(chains);
  return ess_geyer(split(chains));
}

const char* to_string(DiagnosticStatus s) noexcept {
  switch (s) {
    case DiagnosticStatus::ok: return "ok";
    case DiagnosticStatus::not_applicable_constant: return "not_applicable_constant";
    case DiagnosticStatus::too_few_draws: return "too_few_draws";
  }
  return "unknown";
}

std::vector<ParameterSummary> summarize(const PosteriorDraws& draws) {
  if (draws.chains == 0 || draws.iterations == 0) throw InvalidInput("no draws to summarise");
  std::vector<ParameterSummary> out;
  for (std::size_t p = 0; p < draws.parameters(); ++p) {
    ParameterSummary s;
    s.name = draws.names[p];
    auto pooled = draws.pooled(p);
    s.mean = stats::mean(pooled);
    s.sd = pooled.size() > 1 ? std::sqrt(stats::variance(pooled)) : 0.0;
    const auto iv = summarize_sample(std::move(pooled));
    s.median = iv.median;
    s.lo50 = iv.lo50;
    s.hi50 = iv.hi50;
    s.lo95 = iv.lo95;
    s.hi95 = iv.hi95;
    const auto chains = draws.by_chain(p);
    if (is_constant(chains)) {
      s.status = DiagnosticStatus::not_applicable_constant;
    } else if (draws.chains < 2 || draws.iterations < kMinDrawsForRhat) {
      s.status = DiagnosticStatus::too_few_draws;
    } else {
      s.rhat = split_rhat(chains);
      s.ess_bulk = ess_bulk(chains);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string draws_csv(const PosteriorDraws& draws) {
  std::string out = "chain,iteration,parameter,value\n";
  for (std::size_t c = 0; c < draws.chains; ++c) {
    for (std::size_t t = 0; t < draws.iterations; ++t) {
      for (std::size_t p = 0; p < draws.parameters(); ++p) {
        out += fmt::format("{},{},{},{}\n", c + 1, t + 1, csv::escape(draws.names[p]),
                           csv::format_double(draws.at(c, t, p)));
      }
    }
  }
  return out;
}

}  // namespace refscore::sampler

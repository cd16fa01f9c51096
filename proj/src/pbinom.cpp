#include "refscore/pbinom.hpp"

#include <fmt/format.h>
#include <mpfr.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "refscore/numeric.hpp"

namespace refscore::pbinom {

namespace {

using num::log_add_exp;
using num::log_sub_exp;
using num::neg_inf;

struct LogTrial {
  double lp = 0.0;   // log p
  double l1m = 0.0;  // log(1 - p)
  int count = 0;
};

int total_count(std::span<const LogTrial> trials) {
  int n = 0;
  for (const auto& t : trials) n += t.count;
  return n;
}

// Log-space convolution of all trials, optionally with one trial of group `skip` removed.
std::vector<double> convolve(std::span<const LogTrial> trials, std::ptrdiff_t skip = -1) {
  int n = total_count(trials) - (skip >= 0 ? 1 : 0);
  std::vector<double> table(static_cast<std::size_t>(n) + 1, neg_inf);
  table[0] = 0.0;
  int m = 0;
  for (std::size_t g = 0; g < trials.size(); ++g) {
    const auto& t = trials[g];
    const int reps = t.count - (static_cast<std::ptrdiff_t>(g) == skip ? 1 : 0);
    for (int r = 0; r < reps; ++r) {
      ++m;
      for (int k = m; k >= 1; --k) table[k] = log_add_exp(table[k] + t.l1m, table[k - 1] + t.lp);
      table[0] += t.l1m;
    }
  }
  return table;
}

// Removes one trial (lp, l1m) from the full table `full` (length n+1). Runs the
// forward recursion while its cancellation ratio p*Q[k-1]/P[k] stays <= 1/2 and
// the backward recursion for the rest, where the complementary ratio is <= 1/2.
// Returns nullopt when the result fails the normalisation check.
std::optional<std::vector<double>> deconvolve(const std::vector<double>& full, double lp, double l1m) {
  const std::size_t n = full.size() - 1;
  std::vector<double> q(n, neg_inf);
  q[0] = full[0] - l1m;
  std::size_t split = n;
  for (std::size_t k = 1; k < n; ++k) {
    const double carried = lp + q[k - 1];
    if (carried - full[k] > -std::log(2.0)) {
      split = k;
      break;
    }
    q[k] = log_sub_exp(full[k], carried) - l1m;
  }
  if (split < n) {
    q[n - 1] = full[n] - lp;
    for (std::size_t k = n - 1; k > split; --k) q[k - 1] = log_sub_exp(full[k], l1m + q[k]) - lp;
  }
  for (double v : q)
    if (std::isnan(v) || v == neg_inf || v > 1e-12) return std::nullopt;
  if (std::abs(num::log_sum_exp(q)) > 1e-8) return std::nullopt;
  return q;
}

struct GradResult {
  double log_pmf = 0.0;
  std::vector<double> dlogit;
};

// Linear-space twins of convolve/deconvolve. Every intermediate table is a pmf,
// so nothing overflows; far tails may underflow to zero, and callers only use
// these when the entries they read are comfortably normal.
constexpr double kLinearFloor = 1e-200;

std::vector<double> convolve_linear(std::span<const LogTrial> trials, std::ptrdiff_t skip = -1) {
  int n = total_count(trials) - (skip >= 0 ? 1 : 0);
  std::vector<double> table(static_cast<std::size_t>(n) + 1, 0.0);
  table[0] = 1.0;
  int m = 0;
  for (std::size_t g = 0; g < trials.size(); ++g) {
    const auto& t = trials[g];
    const double p = std::exp(t.lp);
    const double q = std::exp(t.l1m);
    const int reps = t.count - (static_cast<std::ptrdiff_t>(g) == skip ? 1 : 0);
    for (int r = 0; r < reps; ++r) {
      ++m;
      for (int k = m; k >= 1; --k) table[k] = table[k] * q + table[k - 1] * p;
      table[0] *= q;
    }
  }
  return table;
}

std::optional<std::vector<double>> deconvolve_linear(const std::vector<double>& full, double p, double q) {
  const std::size_t n = full.size() - 1;
  std::vector<double> out(n, 0.0);
  out[0] = full[0] / q;
  std::size_t split = n;
  for (std::size_t k = 1; k < n; ++k) {
    const double carried = p * out[k - 1];
    if (carried > 0.5 * full[k]) {
      split = k;
      break;
    }
    out[k] = (full[k] - carried) / q;
  }
  if (split < n) {
    out[n - 1] = full[n] / p;
    for (std::size_t k = n - 1; k > split; --k) out[k - 1] = (full[k] - q * out[k]) / p;
  }
  double sum = 0.0;
  for (double v : out) {
    if (!std::isfinite(v) || v < 0.0) return std::nullopt;
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-8) return std::nullopt;
  return out;
}

std::optional<GradResult> grad_linear(std::span<const LogTrial> trials, int k) {
  const int n = total_count(trials);
  const auto full = convolve_linear(trials);
  const auto kk = static_cast<std::size_t>(k);
  if (!(full[kk] > kLinearFloor)) return std::nullopt;
  GradResult out;
  out.log_pmf = std::log(full[kk]);
  out.dlogit.assign(trials.size(), 0.0);
  for (std::size_t idx = 0; idx < trials.size(); ++idx) {
    const auto& t = trials[idx];
    if (t.count == 0) continue;
    bool seen = false;
    for (std::size_t j = 0; j < idx; ++j)
      if (trials[j].count > 0 && trials[j].lp == t.lp) {
        out.dlogit[idx] = out.dlogit[j];
        seen = true;
        break;
      }
    if (seen) continue;
    const double p = std::exp(t.lp);
    const double q = std::exp(t.l1m);
    std::vector<double> loo;
    if (auto d = deconvolve_linear(full, p, q)) {
      loo = std::move(*d);
    } else {
      loo = convolve_linear(trials, static_cast<std::ptrdiff_t>(idx));
    }
    const double below = k >= 1 ? loo[kk - 1] : 0.0;
    const double here = k < n ? loo[kk] : 0.0;
    out.dlogit[idx] = p * q * (below - here) / full[kk];
  }
  return out;
}

GradResult grad_core(std::span<const LogTrial> trials, int k) {
  const int n = total_count(trials);
  if (k < 0 || k > n) throw InvalidInput(fmt::format("success count {} outside [0, {}]", k, n));
  if (auto fast = grad_linear(trials, k)) return std::move(*fast);
  const auto full = convolve(trials);
  GradResult out;
  out.log_pmf = full[static_cast<std::size_t>(k)];
  out.dlogit.assign(trials.size(), 0.0);

  // Groups with identical (lp, l1m) share one leave-one-out table.
  std::vector<std::size_t> order(trials.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return trials[a].lp < trials[b].lp; });

  std::optional<double> prev_lp;
  double prev_grad = 0.0;
  for (std::size_t idx : order) {
    const auto& t = trials[idx];
    if (t.count == 0) continue;
    if (prev_lp && *prev_lp == t.lp) {
      out.dlogit[idx] = prev_grad;
      continue;
    }
    std::vector<double> q;
    if (auto d = deconvolve(full, t.lp, t.l1m)) {
      q = std::move(*d);
    } else {
      q = convolve(trials, static_cast<std::ptrdiff_t>(idx));
    }
    // Pr(k) = p Q(k-1) + (1-p) Q(k); dPr/dp = Q(k-1) - Q(k); dp/dlogit = p(1-p).
    const double scale = t.lp + t.l1m - full[static_cast<std::size_t>(k)];
    const double below = k >= 1 ? q[static_cast<std::size_t>(k - 1)] : neg_inf;
    const double here = k < n ? q[static_cast<std::size_t>(k)] : neg_inf;
    const double g = std::exp(scale + below) - std::exp(scale + here);
    out.dlogit[idx] = g;
    prev_lp = t.lp;
    prev_grad = g;
  }
  return out;
}

// Minimal RAII holder for an MPFR value.
class Mp {
 public:
  explicit Mp(mpfr_prec_t prec) { mpfr_init2(v_, prec); }
  Mp(const Mp&) = delete;
  Mp& operator=(const Mp&) = delete;
  Mp(Mp&& o) noexcept {
    mpfr_init2(v_, mpfr_get_prec(o.v_));
    mpfr_swap(v_, o.v_);
  }
  ~Mp() { mpfr_clear(v_); }
  mpfr_ptr get() noexcept { return v_; }
  mpfr_srcptr get() const noexcept { return v_; }

 private:
  mpfr_t v_;
};

struct ShahPass {
  std::vector<double> log_probs;
  bool sign_failure = false;
};

// One pass of the recursion at fixed precision over trials with 0 < p < 1.
ShahPass shah_pass(std::span<const double> probs, std::size_t kmax, mpfr_prec_t prec) {
  const std::size_t n = probs.size();
  std::vector<Mp> odds;
  std::vector<Mp> power;
  odds.reserve(n);
  power.reserve(n);
  Mp pm(prec);
  Mp one_minus(prec);
  Mp base(prec);
  mpfr_set_ui(base.get(), 1, MPFR_RNDN);
  for (double p : probs) {
    mpfr_set_d(pm.get(), p, MPFR_RNDN);
    mpfr_ui_sub(one_minus.get(), 1, pm.get(), MPFR_RNDN);
    mpfr_mul(base.get(), base.get(), one_minus.get(), MPFR_RNDN);
    Mp o(prec);
    mpfr_div(o.get(), pm.get(), one_minus.get(), MPFR_RNDN);
    Mp w(prec);
    mpfr_set(w.get(), o.get(), MPFR_RNDN);
    odds.push_back(std::move(o));
    power.push_back(std::move(w));
  }

  // Power sums S_j = sum_l odds_l^j, j = 1..kmax. All terms positive.
  std::vector<Mp> power_sum;
  power_sum.reserve(kmax + 1);
  power_sum.emplace_back(prec);
  for (std::size_t j = 1; j <= kmax; ++j) {
    Mp s(prec);
    mpfr_set_ui(s.get(), 0, MPFR_RNDN);
    for (std::size_t l = 0; l < n; ++l) {
      if (j > 1) mpfr_mul(power[l].get(), power[l].get(), odds[l].get(), MPFR_RNDN);
      mpfr_add(s.get(), s.get(), power[l].get(), MPFR_RNDN);
    }
    power_sum.push_back(std::move(s));
  }

  // Pr(m) = (1/m) sum_{j=1..m} (-1)^(j-1) Pr(m-j) S_j
  std::vector<Mp> pr;
  pr.reserve(kmax + 1);
  pr.emplace_back(prec);
  mpfr_set(pr[0].get(), base.get(), MPFR_RNDN);
  ShahPass pass;
  Mp term(prec);
  for (std::size_t m = 1; m <= kmax; ++m) {
    Mp sum(prec);
    mpfr_set_ui(sum.get(), 0, MPFR_RNDN);
    for (std::size_t j = 1; j <= m; ++j) {
      mpfr_mul(term.get(), pr[m - j].get(), power_sum[j].get(), MPFR_RNDN);
      if (j % 2 == 1)
        mpfr_add(sum.get(), sum.get(), term.get(), MPFR_RNDN);
      else
        mpfr_sub(sum.get(), sum.get(), term.get(), MPFR_RNDN);
    }
    if (mpfr_sgn(sum.get()) <= 0) {
      pass.sign_failure = true;
      return pass;
    }
    mpfr_div_ui(sum.get(), sum.get(), static_cast<unsigned long>(m), MPFR_RNDN);
    pr.push_back(std::move(sum));
  }
  pass.log_probs.resize(kmax + 1);
  Mp lg(prec);
  for (std::size_t m = 0; m <= kmax; ++m) {
    mpfr_log(lg.get(), pr[m].get(), MPFR_RNDN);
    pass.log_probs[m] = mpfr_get_d(lg.get(), MPFR_RNDN);
  }
  return pass;
}

// Raises the working precision geometrically until two consecutive passes agree
// to 1e-13 in every log-probability. A pass whose partial sum loses its sign has
// run out of digits outright.
std::vector<double> shah_prefix(std::span<const double> probs, std::size_t kmax) {
  validate(probs);
  std::vector<double> active;
  for (double p : probs) {
    if (p == 1.0)
      throw UnsupportedInput("Shah recursion divides by 1 - p; condition on sure trials before calling");
    if (p > 0.0) active.push_back(p);
  }
  std::vector<double> out(kmax + 1, neg_inf);
  const std::size_t reachable = std::min(kmax, active.size());
  if (active.empty()) {
    out[0] = 0.0;
    return out;
  }
  constexpr mpfr_prec_t max_prec = mpfr_prec_t{1} << 22;
  std::optional<std::vector<double>> previous;
  for (mpfr_prec_t prec = 96; prec <= max_prec; prec += prec / 2) {
    auto pass = shah_pass(active, reachable, prec);
    if (pass.sign_failure) {
      previous.reset();
      continue;
    }
    if (previous) {
      double gap = 0.0;
      for (std::size_t m = 0; m <= reachable; ++m)
        gap = std::max(gap, std::abs(pass.log_probs[m] - (*previous)[m]));
      if (gap <= 1e-13) {
        std::copy(pass.log_probs.begin(), pass.log_probs.end(), out.begin());
        return out;
      }
    }
    previous = std::move(pass.log_probs);
  }
  throw NumericalError("Shah recursion did not stabilise below the precision cap");
}

}  // namespace

void validate(std::span<const double> probs) {
  if (probs.empty()) throw InvalidInput("Bernoulli vector must contain at least one trial");
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (!(p >= 0.0 && p <= 1.0))
      throw InvalidInput(fmt::format("probability {} at position {} outside [0,1]", p, i));
  }
}

LogPmfTable log_pmf_dp(std::span<const double> probs) {
  validate(probs);
  std::size_t sure = 0;
  std::vector<double> interior;
  for (double p : probs) {
    if (p == 1.0)
      ++sure;
    else if (p > 0.0)
      interior.push_back(p);
  }
  std::sort(interior.begin(), interior.end());
  std::vector<LogTrial> trials;
  trials.reserve(interior.size());
  for (double p : interior) trials.push_back({std::log(p), std::log1p(-p), 1});
  const auto core = convolve(trials);

  LogPmfTable out;
  out.log_probs.assign(probs.size() + 1, neg_inf);
  std::copy(core.begin(), core.end(), out.log_probs.begin() + static_cast<std::ptrdiff_t>(sure));
  return out;
}

double log_pmf_shah(std::span<const double> probs, std::size_t k) {
  if (k > probs.size()) throw InvalidInput(fmt::format("k = {} exceeds n = {}", k, probs.size()));
  return shah_prefix(probs, k)[k];
}

LogPmfTable log_pmf_shah_table(std::span<const double> probs) {
  return LogPmfTable{shah_prefix(probs, probs.size())};
}

Moments moments(std::span<const double> probs) {
  validate(probs);
  Moments m;
  for (double p : probs) {
    m.mean += p;
    m.variance += p * (1.0 - p);
  }
  return m;
}

std::vector<double> grad_log_pmf(std::span<const double> probs, std::size_t k) {
  validate(probs);
  if (k > probs.size()) throw InvalidInput(fmt::format("k = {} exceeds n = {}", k, probs.size()));
  for (double p : probs)
    if (p == 0.0 || p == 1.0) throw DegenerateInput("gradient on the logit scale needs 0 < p < 1");

  std::vector<double> distinct(probs.begin(), probs.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<LogTrial> groups;
  groups.reserve(distinct.size());
  for (double p : distinct) {
    const auto c = std::count(probs.begin(), probs.end(), p);
    groups.push_back({std::log(p), std::log1p(-p), static_cast<int>(c)});
  }
  const auto g = grad_core(groups, static_cast<int>(k));
  std::vector<double> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto pos = std::lower_bound(distinct.begin(), distinct.end(), probs[i]) - distinct.begin();
    out[i] = g.dlogit[static_cast<std::size_t>(pos)];
  }
  return out;
}

std::vector<double> log_pmf_table(std::span<const TrialGroup> groups) {
  std::vector<LogTrial> trials;
  trials.reserve(groups.size());
  for (const auto& g : groups) {
    if (g.count < 0) throw InvalidInput("trial group count must be non-negative");
    trials.push_back({num::log_sigmoid(g.logit), num::log_sigmoid(-g.logit), g.count});
  }
  return convolve(trials);
}

LogPmfGrad log_pmf_and_grad(std::span<const TrialGroup> groups, int k) {
  std::vector<LogTrial> trials;
  trials.reserve(groups.size());
  for (const auto& g : groups) {
    if (g.count < 0) throw InvalidInput("trial group count must be non-negative");
    if (!std::isfinite(g.logit)) throw DegenerateInput("trial logit must be finite");
    trials.push_back({num::log_sigmoid(g.logit), num::log_sigmoid(-g.logit), g.count});
  }
  auto r = grad_core(trials, k);
  return {r.log_pmf, std::move(r.dlogit)};
}

double log_pmf_at(std::span<const TrialGroup> groups, int k) {
  std::vector<LogTrial> trials;
  trials.reserve(groups.size());
  for (const auto& g : groups) {
    if (g.count < 0) throw InvalidInput("trial group count must be non-negative");
    trials.push_back({num::log_sigmoid(g.logit), num::log_sigmoid(-g.logit), g.count});
  }
  const int n = total_count(trials);
  if (k < 0 || k > n) throw InvalidInput(fmt::format("success count {} outside [0, {}]", k, n));
  const auto lin = convolve_linear(trials);
  const auto kk = static_cast<std::size_t>(k);
  if (lin[kk] > kLinearFloor) return std::log(lin[kk]);
  return convolve(trials)[kk];
}

}  // namespace refscore::pbinom

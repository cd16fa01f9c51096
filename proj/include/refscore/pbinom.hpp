#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "refscore/error.hpp"

/// Poisson-binomial distribution: the law of a sum of independent, non-identical
/// Bernoulli trials. Everything here works on the natural-log scale.
namespace refscore::pbinom {

/// The Shah recursion was asked to divide by 1 - p with p == 1.
class UnsupportedInput : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// A gradient was requested at p == 0 or p == 1, where the logit is infinite.
class DegenerateInput : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// Natural-log probabilities for K = 0..n.
struct LogPmfTable {
  std::vector<double> log_probs;

  [[nodiscard]] std::size_t trials() const noexcept { return log_probs.size() - 1; }
  [[nodiscard]] double operator[](std::size_t k) const { return log_probs.at(k); }
};

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Throws InvalidInput unless `probs` is non-empty and every entry lies in [0,1].
void validate(std::span<const double> probs);

/// Exact PMF by iterative convolution in log space. Trials with p == 0 or 1 shift
/// the support instead of entering the recursion, so impossible counts come out
/// as exactly -inf. Trials are sorted first, which makes the table independent of
/// input order bit for bit.
LogPmfTable log_pmf_dp(std::span<const double> probs);

/// log Pr(K = k) through Shah's power-sum recursion. Cross-check oracle only: the
/// alternating sums cancel badly, so the recursion runs in MPFR and the working
/// precision grows until two consecutive passes agree to 1e-13.
double log_pmf_shah(std::span<const double> probs, std::size_t k);

/// All of log Pr(K = 0..n) through the same recursion; one pass instead of n+1 calls.
LogPmfTable log_pmf_shah_table(std::span<const double> probs);

Moments moments(std::span<const double> probs);

/// d log Pr(K = k) / d logit(p_j) for every trial j. Probabilities must be strictly
/// inside (0,1). Equal probabilities share one leave-one-out table.
std::vector<double> grad_log_pmf(std::span<const double> probs, std::size_t k);

// ---------------------------------------------------------------------------
// Grouped, logit-parameterised kernels for the posterior. A group is `count`
// trials sharing one success logit, which keeps p from rounding to 0 or 1.

struct TrialGroup {
  double logit = 0.0;
  int count = 0;
};

/// Same table as log_pmf_dp, built from logits.
std::vector<double> log_pmf_table(std::span<const TrialGroup> groups);

/// One entry of that table. Runs in linear space and drops to the log-space
/// table only when the entry is below 1e-200.
double log_pmf_at(std::span<const TrialGroup> groups, int k);

struct LogPmfGrad {
  double log_pmf = 0.0;
  /// Per group: derivative with respect to the logit of ONE trial of that group.
  std::vector<double> dlogit;
};

/// log Pr(K = k) and its per-group logit derivatives. Leave-one-out tables come
/// from deconvolving the full table, falling back to recomputation when the
/// deconvolved table's normalisation error exceeds 1e-8. Linear space is used
/// unless Pr(K = k) is below 1e-200, in which case everything runs in logs.
LogPmfGrad log_pmf_and_grad(std::span<const TrialGroup> groups, int k);

}  // namespace refscore::pbinom

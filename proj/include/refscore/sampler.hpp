#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "refscore/kernels.hpp"
#include "refscore/model.hpp"
#include "refscore/rng.hpp"

namespace refscore::sampler {

struct ChainConfig {
  int chains = 4;
  int warmup_iters = 1000;
  int sample_iters = 1000;
  std::uint64_t seed = 1;
  double target_accept = 0.8;
  int max_leapfrog_depth = 10;
  /// Whether chains run on separate OpenMP threads. Draws are identical either way.
  kernels::Exec exec = kernels::Exec::parallel;

  void validate() const;
};

/// Returns a starting point; called again with the same generator after a failure.
using InitStrategy = std::function<std::vector<double>(Rng&)>;

/// Kept (post-warmup) draws on the sampler's unconstrained scale.
struct PosteriorDraws {
  std::vector<std::string> names;
  std::size_t chains = 0;
  std::size_t iterations = 0;  // kept iterations per chain
  std::vector<double> values;  // (chain, iteration, parameter), parameter fastest

  std::vector<double> accept_stat;  // (chain, iteration)
  std::vector<std::uint8_t> divergent;
  std::vector<int> tree_depth;
  std::vector<int> n_leapfrog;
  std::vector<double> step_size;    // per chain, after adaptation
  std::vector<double> inv_metric;   // (chain, parameter)

  [[nodiscard]] std::size_t parameters() const noexcept { return names.size(); }
  [[nodiscard]] double at(std::size_t chain, std::size_t iter, std::size_t param) const {
    return values[(chain * iterations + iter) * parameters() + param];
  }
  /// One parameter's draws, split by chain.
  [[nodiscard]] std::vector<std::vector<double>> by_chain(std::size_t param) const;
  /// One parameter's draws with the chains concatenated.
  [[nodiscard]] std::vector<double> pooled(std::size_t param) const;
  [[nodiscard]] std::size_t divergences() const;
  [[nodiscard]] double divergent_fraction() const;
  /// More than 1% of kept transitions diverged.
  [[nodiscard]] bool unreliable() const { return divergent_fraction() > 0.01; }
};

/// Multinomial No-U-Turn sampling with diagonal-metric warmup.
///
/// Warmup: dual-averaging step-size adaptation throughout; draws from 50% to 90%
/// of warmup estimate the diagonal inverse metric, after which the step size is
/// re-initialised and adaptation restarts for the final 10%.
PosteriorDraws run_chains(const LogDensity& target, const InitStrategy& init, const ChainConfig& config);

/// Position, momentum and cached log density / gradient.
struct PhasePoint {
  std::vector<double> q;
  std::vector<double> p;
  std::vector<double> grad;
  double logp = 0.0;
};

PhasePoint make_phase_point(const LogDensity& target, std::vector<double> q, std::vector<double> p);
/// One leapfrog step of size eps under the diagonal inverse metric.
void leapfrog(const LogDensity& target, PhasePoint& z, std::span<const double> inv_metric, double eps);
double hamiltonian(const PhasePoint& z, std::span<const double> inv_metric);

// ---------------------------------------------------------------------------
// Diagnostics and summaries.

enum class DiagnosticStatus { ok, not_applicable_constant, too_few_draws };
[[nodiscard]] const char* to_string(DiagnosticStatus s) noexcept;

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double median = 0.0;
  double lo50 = 0.0, hi50 = 0.0;
  double lo95 = 0.0, hi95 = 0.0;
  std::optional<double> rhat;
  std::optional<double> ess_bulk;
  DiagnosticStatus status = DiagnosticStatus::ok;
};

inline constexpr std::size_t kMinDrawsForRhat = 100;

/// Median, 50% and 95% central intervals (type-7 quantiles), split-Rhat and
/// bulk-ESS per parameter. Rhat needs at least two chains and 100 kept
/// iterations; otherwise the status says why it is absent.
std::vector<ParameterSummary> summarize(const PosteriorDraws& draws);

/// Rank-normalised split-Rhat: the larger of the bulk and folded-tail values.
double split_rhat(const std::vector<std::vector<double>>& chains);
/// Bulk effective sample size: Geyer's initial monotone sequence estimator on
/// rank-normalised split chains.
double ess_bulk(const std::vector<std::vector<double>>& chains);
/// Same estimator on the raw split chains; the denominator of the mean's MCSE.
double ess_basic(const std::vector<std::vector<double>>& chains);

/// Long CSV: chain, iteration, parameter, value.
std::string draws_csv(const PosteriorDraws& draws);

}  // namespace refscore::sampler

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "refscore/data.hpp"
#include "refscore/kernels.hpp"
#include "refscore/rng.hpp"

namespace refscore {

/// Anything the sampler can explore: a log density on R^d with its gradient.
class LogDensity {
 public:
  virtual ~LogDensity() = default;
  [[nodiscard]] virtual std::size_t dimension() const = 0;
  /// Returns log p(x) and writes d log p / dx into `grad` (size dimension()).
  virtual double log_density_gradient(std::span<const double> x, std::span<double> grad) const = 0;
  [[nodiscard]] virtual std::vector<std::string> parameter_names() const = 0;
};

/// Model parameters on their natural scale.
struct ModelState {
  std::vector<double> theta;  // logit of each journal's success probability
  double mu = 0.5;            // prior mean success probability, in (0,1)
  double gamma = 2.0;         // prior concentration, > 0
  double alpha = 0.0;         // environment coefficient
};

/// Fixed hyperparameters of the priors on (mu, gamma, alpha).
struct Hyperpriors {
  double gamma_shape = 0.1;
  double gamma_rate = 0.05;  // mean 2, variance 40
  double alpha_sd = 3.0;
};

/// Posterior of the hierarchical Poisson-binomial model for one target level:
///
///   Y_i ~ PoissonBinomial(sigmoid(theta_j + alpha * envir_i), each repeated x_ij times)
///   sigmoid(theta_j) ~ Beta(gamma * mu, gamma * (1 - mu))
///   mu ~ Uniform(0, 1),  gamma ~ Gamma(shape 1/10, rate 1/20),  alpha ~ Normal(0, 3)
///
/// The sampler sees the unconstrained vector (theta_1..theta_J, logit mu, log gamma,
/// alpha); the density includes the Jacobians of all three transforms.
class PoissonBinomialModel final : public LogDensity {
 public:
  PoissonBinomialModel(const CountsMatrix& counts, const std::vector<InstitutionProfile>& profiles,
                       TargetLevel target, Hyperpriors hyper = {}, kernels::Exec exec = kernels::Exec::parallel);

  [[nodiscard]] std::size_t dimension() const override { return journals_ + 3; }
  [[nodiscard]] std::size_t journals() const noexcept { return journals_; }
  double log_density_gradient(std::span<const double> x, std::span<double> grad) const override;
  [[nodiscard]] double log_density(std::span<const double> x) const;
  [[nodiscard]] std::vector<std::string> parameter_names() const override;

  [[nodiscard]] std::vector<double> unconstrain(const ModelState& s) const;
  [[nodiscard]] ModelState constrain(std::span<const double> x) const;

  /// Overdispersed start: theta_j ~ N(0,1), mu ~ U(0.2, 0.8), gamma from its prior
  /// truncated to (0.1, 10), alpha = 0.
  [[nodiscard]] std::vector<double> initial_point(Rng& rng) const;

  [[nodiscard]] const kernels::PbData& data() const noexcept { return data_; }

 private:
  double evaluate(std::span<const double> x, std::span<double> grad, bool with_gradient) const;

  std::size_t journals_;
  Hyperpriors hyper_;
  kernels::Exec exec_;
  kernels::PbData data_;
};

/// log posterior density at `state` (unconstrained parameterisation, Jacobians included).
double log_posterior(const ModelState& state, const CountsMatrix& counts,
                     const std::vector<InstitutionProfile>& profiles, TargetLevel target);

/// Gradient over (theta, logit mu, log gamma, alpha).
std::vector<double> grad_log_posterior(const ModelState& state, const CountsMatrix& counts,
                                       const std::vector<InstitutionProfile>& profiles, TargetLevel target);

struct IntervalSummary {
  double median = 0.0;
  double lo50 = 0.0, hi50 = 0.0;
  double lo95 = 0.0, hi95 = 0.0;
};

IntervalSummary summarize_sample(std::vector<double> values);

struct ThreeStarJournal {
  IntervalSummary summary;
  double negative_fraction = 0.0;
  bool flagged = false;  // more than 10% of paired draws negative
};

struct ThreeStarResult {
  std::size_t draws = 0;
  std::size_t journals = 0;
  std::vector<double> values;  // draws x journals, pi34 - pi4, negatives kept
  std::vector<ThreeStarJournal> per_journal;
};

/// pi3 = pi34 - pi4 drawwise. The fits are independent, so draws pair in their
/// stored order; when the streams differ in length the longer one is thinned to
/// evenly spaced draws.
ThreeStarResult derive_three_star(std::span<const double> draws4, std::size_t n4, std::span<const double> draws34,
                                  std::size_t n34, std::size_t journals);

/// Indices of `n_to` evenly spaced draws out of `n_from`.
std::vector<std::size_t> thin_indices(std::size_t n_from, std::size_t n_to);

}  // namespace refscore

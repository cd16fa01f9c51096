#pragma once

// Data-parallel inner loops. Every kernel has a serial reference path and an
// OpenMP path; both write per-item results into caller buffers and any reduction
// happens afterwards in a fixed order, so the two paths agree bit for bit.

#include <span>
#include <vector>

#include "refscore/data.hpp"

namespace refscore::kernels {

enum class Exec { serial, parallel };

/// Flattened view of the Poisson-binomial likelihood inputs.
struct PbData {
  std::size_t institutions = 0;
  std::size_t journals = 0;
  std::vector<int> counts;      // institutions x journals
  std::vector<int> successes;   // observed target count per institution
  std::vector<double> envir;    // covariate per institution
};

struct PbTerms {
  std::vector<double> loglik;  // per institution
  std::vector<double> dtheta;  // institutions x journals, d loglik_i / d theta_j
  std::vector<double> dalpha;  // per institution
};

/// Per-institution log Poisson-binomial likelihood (and gradient) with trial
/// logits theta_j + alpha * envir_i repeated counts_ij times.
void pb_likelihood_terms(const PbData& data, std::span<const double> theta, double alpha, bool with_gradient,
                         Exec exec, PbTerms& out);

/// E-step: for every institution, the approximate noncentral hypergeometric
/// expectation of per-journal successes given the row's counts, the observed
/// successes, and shared journal log-odds. Output is institutions x journals.
void impute_successes(const CountsMatrix& counts, std::span<const int> successes, std::span<const double> log_odds,
                      Exec exec, std::vector<double>& imputed);

/// Dissimilarity and money-redistribution indices for each posterior draw.
/// draws4 / draws34 are draws x journals success probabilities.
void draw_indices(const CountsMatrix& counts, const std::vector<InstitutionProfile>& profiles,
                  std::span<const double> draws4, std::span<const double> draws34, std::size_t n_draws, double r3,
                  Exec exec, std::vector<double>& delta, std::vector<double>& money);

}  // namespace refscore::kernels

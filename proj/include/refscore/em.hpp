#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "refscore/data.hpp"
#include "refscore/error.hpp"
#include "refscore/kernels.hpp"

namespace refscore::em {

/// Balls of J colours, m_j of colour j with weight omega_j; n drawn without replacement.
struct HypergeometricUrn {
  std::vector<int> m;
  std::vector<double> omega;
  int n = 0;

  void validate() const;
};

/// The exact support is too large to enumerate; use the approximation instead.
class SupportTooLarge : public Error {
 public:
  explicit SupportTooLarge(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

inline constexpr std::size_t kDefaultSupportLimit = 2'000'000;

/// Number of compositions y with 0 <= y_j <= m_j and sum y = n, saturating at cap.
std::size_t mvh_support_size(const HypergeometricUrn& urn, std::size_t cap = kDefaultSupportLimit + 1);

/// Exact mean of Fisher's noncentral multivariate hypergeometric distribution by
/// enumerating the support in log space.
std::vector<double> mvh_exact_expectation(const HypergeometricUrn& urn,
                                          std::size_t support_limit = kDefaultSupportLimit);

/// Approximate mean m_j omega_j r / (omega_j r + 1), where r > 0 solves
/// sum_j m_j omega_j r / (omega_j r + 1) = n.
std::vector<double> mvh_approx_expectation(const HypergeometricUrn& urn);

/// Same approximation with log weights, writing into `out`; no validation.
void mvh_approx_expectation_log(std::span<const int> m, std::span<const double> log_omega, int n,
                                std::span<double> out);

struct RaschFit {
  double mu_hat = 0.0;
  double alpha_hat = 0.0;          // pseudo-institution coefficient (0 without pseudo-data)
  std::vector<double> beta_hat;    // per column; the reference column is exactly 0
  std::size_t reference = 0;
  std::vector<std::uint8_t> identified;  // 0 where a column had no data and no pseudo-data
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  double log_likelihood = 0.0;
  std::vector<double> objective_trace;  // per accepted Newton step

  [[nodiscard]] std::vector<double> log_odds() const;        // mu + beta_j
  [[nodiscard]] std::vector<double> probabilities() const;   // sigmoid(mu + beta_j)
};

/// "Other journals" when present, otherwise the last column.
std::size_t reference_column(const CountsMatrix& counts);

/// Weighted logistic regression logit p_ij = mu + alpha z_i + beta_j with
/// fractional successes, plus one pseudo-institution (z = 1) submitting
/// pseudo_strength articles per column at 50% success. Newton-Raphson with step
/// halving until the gradient norm drops below 1e-8.
RaschFit fit_rasch(std::span<const double> imputed, const CountsMatrix& trials, double pseudo_strength,
                   int max_iters = 100);

struct EmConfig {
  double pseudo_strength = 1.0;
  double tol = 1e-6;
  int max_iters = 500;
  std::uint64_t init_seed = 1;
  kernels::Exec exec = kernels::Exec::parallel;

  void validate() const;
};

struct EmResult {
  RaschFit fit;
  std::vector<double> imputed;  // institutions x columns
  int iterations = 0;
  bool converged = false;
  bool oscillating = false;
  std::vector<double> max_delta_trace;
};

/// Alternates urn-mean imputation of per-column successes with fit_rasch until
/// max |delta beta| < tol. Starting log-odds are standard normal draws.
EmResult em_run(const CountsMatrix& counts, const std::vector<InstitutionProfile>& profiles, TargetLevel target,
                const EmConfig& config);

enum class CvTarget { four_star, three_plus, both };
CvTarget parse_cv_target(std::string_view s);
[[nodiscard]] const char* to_string(CvTarget t) noexcept;

struct CvConfig {
  int folds = 10;
  std::vector<double> grid{0.25, 0.5, 1.0, 2.0, 4.0};
  std::uint64_t seed = 1;
  EmConfig em;  // pseudo_strength is overridden by the grid

  void validate() const;
};

struct CvRow {
  double pseudo_strength = 0.0;
  int fold = 0;
  double delta = 0.0;
  int unseen_columns = 0;  // held-out columns absent from training
};

struct CvResult {
  double best = 0.0;
  std::vector<double> grid;
  std::vector<double> mean_delta;  // per grid value
  std::vector<CvRow> rows;         // grid-major, then fold
  std::vector<int> fold_of;        // per institution, 1-based
  int unseen_total = 0;
};

/// K-fold cross-validation of the pseudo-data strength. Held-out profiles are
/// predicted from the training fit; a single target scores with sum |y - yhat| / N,
/// both targets with the full three-term index. Columns with no training
/// articles are predicted with the reference column's probability.
CvResult cross_validate(const CountsMatrix& counts, const std::vector<InstitutionProfile>& profiles, CvTarget target,
                        const CvConfig& cv);

/// Subset of rows, in the given order.
CountsMatrix select_rows(const CountsMatrix& counts, std::span<const std::size_t> rows);

}  // namespace refscore::em

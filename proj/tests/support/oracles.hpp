#pragma once

// Independent reference computations used by the test suites. Nothing here calls
// into the code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace refscore::testing {

/// Poisson-binomial PMF by summing over all 2^n outcome vectors.
inline std::vector<double> enumerate_pmf(std::span<const double> p) {
  const std::size_t n = p.size();
  std::vector<double> pmf(n + 1, 0.0);
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    double prod = 1.0;
    std::size_t k = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask >> j & 1U) {
        prod *= p[j];
        ++k;
      } else {
        prod *= 1.0 - p[j];
      }
    }
    pmf[k] += prod;
  }
  return pmf;
}

/// Relative error with a floor of 1e-2 on the scale, so components near zero are
/// judged on an absolute 1e-8-ish footing rather than a meaningless ratio.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-2});
}

/// Central differences of log Pr(K = k) on the logit scale, through enumeration
/// for small n and through an independent linear-space convolution otherwise.
inline std::vector<double> fd_grad_log_pmf(std::span<const double> p, std::size_t k, double h) {
  auto log_pmf_at = [&](const std::vector<double>& q) {
    std::vector<double> table{1.0};
    for (double x : q) {
      std::vector<double> next(table.size() + 1, 0.0);
      for (std::size_t i = 0; i < table.size(); ++i) {
        next[i] += table[i] * (1.0 - x);
        next[i + 1] += table[i] * x;
      }
      table = std::move(next);
    }
    return std::log(table[k]);
  };
  std::vector<double> out(p.size());
  std::vector<double> q(p.begin(), p.end());
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double z = std::log(p[j] / (1.0 - p[j]));
    q[j] = 1.0 / (1.0 + std::exp(-(z + h)));
    const double up = log_pmf_at(q);
    q[j] = 1.0 / (1.0 + std::exp(-(z - h)));
    const double dn = log_pmf_at(q);
    q[j] = p[j];
    out[j] = (up - dn) / (2.0 * h);
  }
  return out;
}

/// Central-difference gradient of an arbitrary scalar function.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double up = f(x);
    x[i] = x0 - h;
    const double dn = f(x);
    x[i] = x0;
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

}  // namespace refscore::testing

#include <numbers>
#include <string>

#include "refscore/data.hpp"

namespace refscore::testing {

/// Unconstrained-scale log posterior written directly from the model definition:
/// trial-level enumeration (or linear convolution) for the likelihood and
/// std::lgamma for the densities. Shares no code with the library.
inline double oracle_log_posterior(const std::vector<double>& theta, double mu, double gamma, double alpha,
                                   const CountsMatrix& c, const std::vector<InstitutionProfile>& prof,
                                   TargetLevel target) {
  const auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  double lp = 0.0;
  for (std::size_t i = 0; i < c.rows(); ++i) {
    std::vector<double> p;
    for (std::size_t j = 0; j < c.cols(); ++j) {
      for (int r = 0; r < c.at(i, j); ++r) p.push_back(sig(theta[j] + alpha * prof[i].envir));
    }
    const int y = target == TargetLevel::four_star ? prof[i].y4 : prof[i].y34;
    if (p.empty()) continue;
    std::vector<double> pmf;
    if (p.size() <= 16) {
      pmf = enumerate_pmf(p);
    } else {
      pmf = {1.0};
      for (double q : p) {
        std::vector<double> next(pmf.size() + 1, 0.0);
        for (std::size_t k = 0; k < pmf.size(); ++k) {
          next[k] += pmf[k] * (1.0 - q);
          next[k + 1] += pmf[k] * q;
        }
        pmf = std::move(next);
      }
    }
    lp += std::log(pmf[static_cast<std::size_t>(y)]);
  }
  const double a = gamma * mu;
  const double b = gamma * (1.0 - mu);
  for (double t : theta) {
    const double pi = sig(t);
    // Beta density of pi times the Jacobian d pi / d theta = pi (1 - pi).
    lp += (a - 1.0) * std::log(pi) + (b - 1.0) * std::log1p(-pi) - std::lgamma(a) - std::lgamma(b) +
          std::lgamma(a + b) + std::log(pi * (1.0 - pi));
  }
  lp += std::log(mu * (1.0 - mu));  // uniform prior, logit Jacobian
  const double shape = 0.1;
  const double rate = 0.05;
  lp += shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(gamma) - rate * gamma +
        std::log(gamma);  // log Jacobian
  lp += -0.5 * alpha * alpha / 9.0 - std::log(3.0 * std::sqrt(2.0 * std::numbers::pi));
  return lp;
}

}  // namespace refscore::testing

namespace refscore::testing {

/// Mean of Fisher's noncentral multivariate hypergeometric distribution by
/// listing every n-subset of individual balls, each weighted by the product of
/// its balls' weights.
inline std::vector<double> enumerate_urn_mean(const std::vector<int>& m, const std::vector<double>& omega, int n) {
  std::vector<std::size_t> colour;
  for (std::size_t j = 0; j < m.size(); ++j)
    for (int b = 0; b < m[j]; ++b) colour.push_back(j);
  const std::size_t balls = colour.size();
  std::vector<double> mean(m.size(), 0.0);
  double total = 0.0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << balls); ++mask) {
    if (static_cast<int>(__builtin_popcountll(mask)) != n) continue;
    double w = 1.0;
    std::vector<int> y(m.size(), 0);
    for (std::size_t b = 0; b < balls; ++b) {
      if (mask >> b & 1U) {
        w *= omega[colour[b]];
        ++y[colour[b]];
      }
    }
    total += w;
    for (std::size_t j = 0; j < m.size(); ++j) mean[j] += w * y[j];
  }
  for (auto& v : mean) v /= total;
  return mean;
}

}  // namespace refscore::testing

#pragma once

#include <span>
#include <vector>

namespace refscore::stats {

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double prob);
double quantile(std::vector<double> values, double prob);
double median(std::vector<double> values);

double mean(std::span<const double> x);
/// Unbiased (n - 1) sample variance.
double variance(std::span<const double> x);

double pearson(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of mid-ranks.
double spearman(std::span<const double> x, std::span<const double> y);
/// 1-based ranks; ties share their average rank.
std::vector<double> average_ranks(std::span<const double> x);

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
};
/// Ordinary least squares of y on x.
LineFit ols(std::span<const double> x, std::span<const double> y);

}  // namespace refscore::stats

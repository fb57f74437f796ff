#pragma once

#include <span>
#include <vector>

namespace tpp::stats {

struct KsResult {
  double statistic = 0.0;  // sup |F_n - F|
  double p_value = 1.0;
  std::size_t n = 0;
};

/// One-sample Kolmogorov-Smirnov test against the unit exponential law.
KsResult ks_test_exp1(std::span<const double> samples);

/// Asymptotic Kolmogorov survival function Q(lambda) = P(K > lambda).
double kolmogorov_q(double lambda);

struct Moments {
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  std::size_t n = 0;
  double std_error() const;
};

Moments moments(std::span<const double> xs);

/// log Phi(x) for the standard normal CDF, stable in both tails.
double log_normal_cdf(double x);

}  // namespace tpp::stats

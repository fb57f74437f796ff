#include "tpp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tpp::stats {

double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_test_exp1(std::span<const double> samples) {
  std::vector<double> xs(samples.begin(), samples.end());
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double cdf = xs[i] > 0.0 ? -std::expm1(-xs[i]) : 0.0;
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - cdf, cdf - static_cast<double>(i) / n});
  }
  KsResult r;
  r.statistic = d;
  r.n = xs.size();
  if (!xs.empty()) {
    // Stephens' small-sample correction.
    const double sn = std::sqrt(n);
    r.p_value = kolmogorov_q((sn + 0.12 + 0.11 / sn) * d);
  }
  return r;
}

double Moments::std_error() const {
  return n > 0 ? std::sqrt(variance / static_cast<double>(n)) : 0.0;
}

Moments moments(std::span<const double> xs) {
  Moments m;
  m.n = xs.size();
  if (xs.empty()) return m;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  m.mean = mean;
  m.variance = xs.size() > 1 ? ss / static_cast<double>(xs.size() - 1) : 0.0;
  return m;
}

double log_normal_cdf(double x) {
  if (x > -30.0) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
  // Asymptotic series for the far left tail.
  const double x2 = x * x;
  const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

}  // namespace tpp::stats

#include "tpp/metrics.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "tpp/error.hpp"

namespace tpp {

namespace {

void check_aligned(std::size_t n, std::size_t m, std::size_t mask) {
  if (n != m || (mask != 0 && mask != n)) {
    throw Error(ErrorCode::ShapeMismatch, "predictions, truths and mask must align");
  }
}

struct Cost {
  double matched = 0.0;
  std::size_t deletions = 0;
  double total(double c) const { return matched + c * static_cast<double>(deletions); }
};

bool better(const Cost& x, const Cost& y, double c) {
  const double tx = x.total(c), ty = y.total(c);
  if (tx != ty) return tx < ty;
  if (x.deletions != y.deletions) return x.deletions < y.deletions;
  return x.matched < y.matched;
}

}  // namespace

double rmse_time(std::span<const double> pred, std::span<const double> truth,
                 std::span<const std::uint8_t> mask) {
  check_aligned(pred.size(), truth.size(), mask.size());
  double ss = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask.empty() && mask[i] == 0) continue;
    const double e = pred[i] - truth[i];
    ss += e * e;
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::NoEvents, "rmse over zero events");
  return std::sqrt(ss / static_cast<double>(n));
}

double error_rate_type(std::span<const int> pred, std::span<const int> truth,
                       std::span<const std::uint8_t> mask) {
  check_aligned(pred.size(), truth.size(), mask.size());
  std::size_t wrong = 0, n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask.empty() && mask[i] == 0) continue;
    wrong += pred[i] != truth[i] ? 1 : 0;
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::NoEvents, "error rate over zero events");
  return static_cast<double>(wrong) / static_cast<double>(n);
}

double otd(const EventSequence& a, const EventSequence& b, const OTDParams& p) {
  const double c = p.delete_cost;
  const std::size_t n = a.size(), m = b.size();
  std::vector<Cost> dp((n + 1) * (m + 1));
  auto at = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
  for (std::size_t i = 0; i <= n; ++i) {
    for (std::size_t j = 0; j <= m; ++j) {
      if (i == 0 && j == 0) continue;
      Cost best{0.0, std::numeric_limits<std::size_t>::max() / 2};
      bool have = false;
      auto offer = [&](const Cost& cand) {
        if (!have || better(cand, best, c)) {
          best = cand;
          have = true;
        }
      };
      if (i > 0) {
        Cost x = dp[at(i - 1, j)];
        ++x.deletions;
        offer(x);
      }
      if (j > 0) {
        Cost x = dp[at(i, j - 1)];
        ++x.deletions;
        offer(x);
      }
      if (i > 0 && j > 0 && a.types[i - 1] == b.types[j - 1]) {
        Cost x = dp[at(i - 1, j - 1)];
        x.matched += std::abs(a.times[i - 1] - b.times[j - 1]);
        offer(x);
      }
      dp[at(i, j)] = best;
    }
  }
  return dp[at(n, m)].total(c);
}

double otd_bruteforce(const EventSequence& a, const EventSequence& b, const OTDParams& p) {
  constexpr std::size_t kMax = 6;
  if (a.size() > kMax || b.size() > kMax) {
    throw Error(ErrorCode::TooLarge, "brute-force OTD is limited to 6 events per side");
  }
  const double c = p.delete_cost;
  const std::size_t n = a.size(), m = b.size();
  Cost best{0.0, n + m};  // delete everything
  // Walk a's events in order; each either stays unmatched or matches a later b event.
  std::function<void(std::size_t, std::size_t, double, std::size_t)> rec =
      [&](std::size_t i, std::size_t next_j, double matched, std::size_t pairs) {
        if (i == n) {
          const Cost cand{matched, n + m - 2 * pairs};
          if (better(cand, best, c)) best = cand;
          return;
        }
        rec(i + 1, next_j, matched, pairs);
        for (std::size_t j = next_j; j < m; ++j) {
          if (a.types[i] != b.types[j]) continue;
          rec(i + 1, j + 1, matched + std::abs(a.times[i] - b.times[j]), pairs + 1);
        }
      };
  rec(0, 0, 0.0, 0);
  return best.total(c);
}

}  // namespace tpp

#pragma once

#include <cstdint>
#include <vector>

#include "tpp/data.hpp"

namespace tpp {

/// Exponential-kernel multivariate Hawkes parameters. alpha and beta are K x K,
/// row-major and indexed (target, source); alpha is the branching weight, so
/// one kernel alpha*beta*exp(-beta*t) integrates to alpha.
struct HawkesParams {
  int num_types = 1;
  std::vector<double> mu;
  std::vector<double> alpha;
  std::vector<double> beta;

  static HawkesParams univariate(double mu, double alpha, double beta);
  double a(int target, int source) const { return alpha[static_cast<std::size_t>(target * num_types + source)]; }
  double b(int target, int source) const { return beta[static_cast<std::size_t>(target * num_types + source)]; }
  double mu_total() const;

  /// Throws InvalidParams on wrong sizes, non-finite, negative or non-positive-beta entries.
  void validate() const;
  /// Spectral radius of alpha; the process is stationary when < 1.
  double spectral_radius() const;
};

/// Per-type intensities at t given events strictly before t. Throws
/// TimeBeforeHistory when t does not lie after the last history event.
std::vector<double> hawkes_intensity(const HawkesParams& p, const EventSequence& history, double t);

/// Intensities just after t0, counting history events at times <= t0.
std::vector<double> hawkes_intensity_right(const HawkesParams& p, const EventSequence& history, double t0);

/// Log-likelihood on [0, seq.t_end] in nats via the decay recursion.
/// Throws ZeroIntensityAtEvent.
double hawkes_loglik(const HawkesParams& p, const EventSequence& seq);

/// Closed-form integral of the total intensity over [0, seq.t_end].
double hawkes_compensator(const HawkesParams& p, const EventSequence& seq);

/// Closed-form integral of the total intensity over [lo, hi] (history is the whole sequence).
double hawkes_compensator_between(const HawkesParams& p, const EventSequence& seq, double lo, double hi);

/// Intensity of the observed type at each event, via the recursion.
std::vector<double> hawkes_event_intensities(const HawkesParams& p, const EventSequence& seq);

/// sum_k lambda_k(t0+); valid for all t >= t0 until the next event.
double hawkes_upper_bound(const HawkesParams& p, const EventSequence& history, double t0);

/// Compensator increments between consecutive events (unit-exponential under
/// the true model).
std::vector<double> hawkes_rescaled_intervals(const HawkesParams& p, const EventSequence& seq);

/// Event cap per generated sequence: 10 * mu_total * t_end / (1 - rho) when rho < 1, else 1e4.
std::size_t hawkes_event_cap(const HawkesParams& p, double t_end);

/// i.i.d. sequences on [0, t_end] by exact thinning, one PRNG stream per
/// (seed, sequence index). Throws ExplosiveParams when a sequence exceeds the cap.
std::vector<EventSequence> generate_hawkes(const HawkesParams& p, double t_end, std::size_t n_seqs,
                                           std::uint64_t seed);

/// Incremental intensity state: decayed kernel sums per (target, source).
class HawkesState {
 public:
  explicit HawkesState(const HawkesParams& p);

  /// Adds an event; t must not precede the last observed event.
  void observe(double t, int type);
  /// Intensities at t >= last event time (right limit at the last event).
  std::vector<double> intensities(double t) const;
  double total(double t) const;
  double last_time() const { return last_t_; }

 private:
  HawkesParams p_;
  std::vector<double> r_;  // K x K, decayed to last_t_
  double last_t_ = 0.0;
};

}  // namespace tpp

#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "tpp/data.hpp"
#include "tpp/hawkes.hpp"
#include "tpp/random.hpp"

namespace tpp {

struct ThinningConfig {
  std::size_t num_samples = 100;  // draws per MBR expectation
  std::size_t num_exp = 1;        // candidate exponential increments proposed per round
  std::size_t max_rounds = 1000;
  double over_sample_factor = 2.0;
  std::uint64_t rng_seed = 0;
  std::size_t probe_points = 100;
  /// Probe window is (t0, t0 + probe_span_factor * expected_dtime].
  double probe_span_factor = 10.0;
  double expected_dtime = 1.0;
  std::size_t max_rollout_events = 1000;

  void validate() const;
};

/// Dominating rate for thinning, valid on [from, valid_until].
struct IntensityBound {
  double rate = 0.0;
  double valid_until = std::numeric_limits<double>::infinity();
  bool exact = true;  // false for probe-grid estimates
};

/// A conditional intensity conditioned on some history, queryable after the
/// last conditioning event. Implemented by Hawkes states and neural models.
class IntensitySource {
 public:
  virtual ~IntensitySource() = default;
  virtual int num_types() const = 0;
  /// Time after which queries are allowed (last event or prefix end).
  virtual double anchor_time() const = 0;
  /// Per-type intensities at each time (rows), times >= anchor_time().
  virtual std::vector<std::vector<double>> intensities(const std::vector<double>& times) const = 0;
  /// Bound on the total intensity from t0 on.
  virtual IntensityBound upper_bound(double t0, const ThinningConfig& cfg) const = 0;
  /// True when the bound may be refreshed after each rejected candidate.
  virtual bool refresh_bound_each_round() const { return false; }
  /// Conditions on a new event at t >= anchor_time().
  virtual void observe(double t, int type) = 0;
  virtual std::unique_ptr<IntensitySource> clone() const = 0;

  std::vector<double> intensities_at(double t) const { return intensities({t})[0]; }
};

/// Hawkes process as an intensity source; the bound is exact.
class HawkesSource final : public IntensitySource {
 public:
  HawkesSource(const HawkesParams& p, const EventSequence& history, double anchor);
  explicit HawkesSource(const HawkesParams& p) : HawkesSource(p, {}, 0.0) {}

  int num_types() const override { return params_.num_types; }
  double anchor_time() const override { return anchor_; }
  std::vector<std::vector<double>> intensities(const std::vector<double>& times) const override;
  IntensityBound upper_bound(double t0, const ThinningConfig& cfg) const override;
  bool refresh_bound_each_round() const override { return true; }
  void observe(double t, int type) override;
  std::unique_ptr<IntensitySource> clone() const override;

 private:
  HawkesParams params_;
  HawkesState state_;
  double anchor_;
};

/// Constant per-type rates; useful as a reference process.
class ConstantSource final : public IntensitySource {
 public:
  explicit ConstantSource(std::vector<double> rates, double anchor = 0.0, double bound_rate = -1.0);

  int num_types() const override { return static_cast<int>(rates_.size()); }
  double anchor_time() const override { return anchor_; }
  std::vector<std::vector<double>> intensities(const std::vector<double>& times) const override;
  IntensityBound upper_bound(double t0, const ThinningConfig& cfg) const override;
  void observe(double t, int) override { anchor_ = t; }
  std::unique_ptr<IntensitySource> clone() const override;

 private:
  std::vector<double> rates_;
  double anchor_;
  double bound_rate_;
};

/// Probe-grid bound for sources without an analytic one: max of the total
/// intensity over a grid on (t0, t0 + span], times over_sample_factor.
IntensityBound probe_grid_bound(const IntensitySource& src, double t0, const ThinningConfig& cfg);

struct ThinningDraw {
  double time = 0.0;
  int type = -1;
  bool censored = false;
  std::size_t rounds = 0;
  std::size_t bound_violations = 0;
  double max_ratio = 0.0;  // largest observed intensity / bound ratio
};

/// Ogata thinning for the next event after t0.
ThinningDraw thinning_sample_next(const IntensitySource& src, double t0, const ThinningConfig& cfg, Rng& rng);

struct TimePrediction {
  double time = 0.0;
  double censor_rate = 0.0;
  std::size_t accepted = 0;
  std::size_t bound_violations = 0;
};

/// Mean of cfg.num_samples independent thinning draws from src.anchor_time().
/// Draw d uses substream (cfg.rng_seed, stream_key..., d). Throws AllDrawsCensored.
TimePrediction mbr_predict_time(const IntensitySource& src, const ThinningConfig& cfg,
                                std::uint64_t seq_key = 0, std::uint64_t pos_key = 0);

/// argmax_k lambda_k(t_true); ties go to the smallest id.
int mbr_predict_type(const IntensitySource& src, double t_true);
int argmax_type(const std::vector<double>& intensities);

struct Rollout {
  EventSequence events;  // t_end = horizon end
  bool censored = false;
  bool capped = false;
  std::size_t bound_violations = 0;
};

/// Autoregressive sampling on (anchor, horizon_end]. The source is copied.
Rollout rollout_horizon(const IntensitySource& src, double horizon_end, const ThinningConfig& cfg,
                        std::uint64_t seq_key = 0);

}  // namespace tpp

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tpp/autodiff.hpp"
#include "tpp/data.hpp"
#include "tpp/random.hpp"

namespace tpp {

class TppModel;
struct ModelState;

struct MCConfig {
  std::size_t samples_per_event_train = 1;
  std::size_t samples_per_event_eval = 10;
  std::uint64_t rng_seed = 0;
  /// Split each interval into log-spaced cells (finest right after the anchor,
  /// where intensities move fastest) holding antithetic pairs, weighted by
  /// cell width. Still unbiased. Off means i.i.d. uniform draws.
  bool stratified = true;

  void validate() const;
};

/// Sample locations for the stratified estimator: for every anchor interval
/// of every row, `per_interval` points on that interval with integration
/// weights (the weights of one interval sum to its length).
struct SampleGrid {
  std::size_t batch_size = 0;
  std::size_t num_anchors = 0;
  std::size_t per_interval = 0;
  std::vector<double> times;    // [a][b][s]
  std::vector<double> lengths;  // [a][b], zero for anchors past a row's end
  std::vector<double> weights;  // [a][b][s]

  double time(std::size_t a, std::size_t b, std::size_t s) const {
    return times[(a * batch_size + b) * per_interval + s];
  }
  double length(std::size_t a, std::size_t b) const { return lengths[a * batch_size + b]; }
  double weight(std::size_t a, std::size_t b, std::size_t s) const {
    return weights[(a * batch_size + b) * per_interval + s];
  }
  std::span<const double> anchor_times(std::size_t a) const {
    return {times.data() + a * batch_size * per_interval, batch_size * per_interval};
  }
};

SampleGrid draw_sample_grid(const PaddedBatch& batch, std::size_t per_interval, Rng& rng,
                            bool stratified = true);

/// Differentiable per-sequence estimate (B x 1) of the integral of the total
/// intensity over [0, t_end]: sum over intervals of length * mean intensity.
ad::Tensor mc_integral(const TppModel& model, const ModelState& state, const PaddedBatch& batch,
                       const SampleGrid& grid);

/// The same estimator for a plain total-intensity function f(row, t).
std::vector<double> mc_integral(const std::function<double(std::size_t, double)>& total_intensity,
                                const PaddedBatch& batch, const SampleGrid& grid);

struct LoglikReport {
  double total_loglik = 0.0;
  double time_loglik = 0.0;
  double type_loglik = 0.0;
  std::size_t num_events = 0;
  std::size_t num_sequences = 0;
  double per_event() const { return num_events ? total_loglik / static_cast<double>(num_events) : 0.0; }
  double time_per_event() const { return num_events ? time_loglik / static_cast<double>(num_events) : 0.0; }
  double type_per_event() const { return num_events ? type_loglik / static_cast<double>(num_events) : 0.0; }
};

/// Held-out log-likelihood with the eval MC multiplier (analytic models ignore MC).
/// Throws EmptyDataset.
LoglikReport eval_loglik(const TppModel& model, const Dataset& dataset, const MCConfig& cfg,
                         std::size_t batch_size = 256);

}  // namespace tpp

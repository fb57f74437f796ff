#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tpp/autodiff.hpp"
#include "tpp/data.hpp"
#include "tpp/hawkes.hpp"
#include "tpp/likelihood.hpp"
#include "tpp/sampler.hpp"

namespace tpp {

struct ModelConfig {
  std::string model_id = "rmtpp";  // hawkes | rmtpp | nhp_lite | odetpp | iftpp
  int hidden_size = 32;
  int time_emb_size = 16;
  int num_layers = 2;
  int num_event_types = 1;
  int num_mixtures = 8;  // iftpp
  int ode_steps = 10;    // odetpp, RK4 steps per integrated segment
  std::uint64_t seed = 0;

  /// Throws BadConfig.
  void validate() const;
  /// Defaults per model family (hidden 64 for nhp_lite, 32 otherwise).
  static ModelConfig defaults_for(const std::string& model_id, int num_event_types);
};

struct NamedParameter {
  std::string name;
  ad::Tensor tensor;
};

/// Parameters in declaration order; the order defines the checkpoint layout.
class ParameterSet {
 public:
  ad::Tensor add(std::string name, std::size_t rows, std::size_t cols, std::vector<double> init);
  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  ad::Tensor add_uniform(std::string name, std::size_t rows, std::size_t cols, Rng& rng);
  ad::Tensor add_zeros(std::string name, std::size_t rows, std::size_t cols);

  const std::vector<NamedParameter>& items() const { return items_; }
  std::vector<ad::Tensor> tensors() const;
  std::size_t total_size() const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
  void zero_grad();
  const ad::Tensor& get(const std::string& name) const;

 private:
  std::vector<NamedParameter> items_;
};

/// Per-batch model state. Anchor a is the state after event a (a = 0 is the
/// start of the window); each vector holds one B x D tensor per anchor.
struct ModelState {
  std::size_t batch_size = 0;
  std::size_t num_anchors = 0;
  std::vector<ad::Tensor> hidden;     // h_a, post-update
  std::vector<ad::Tensor> target;     // nhp_lite: decay target
  std::vector<ad::Tensor> decay;      // nhp_lite: decay rate
  std::vector<ad::Tensor> embedding;  // e_i per event position
  std::vector<ad::Tensor> kernel;     // hawkes: decayed kernel sums per anchor
  std::vector<ad::Tensor> left;       // odetpp: state just before the next event
};

struct LossOptions {
  MCConfig mc;
  bool training = true;          // selects the MC multiplier
  std::uint64_t sample_seed = 0; // MC sample locations
  bool prefer_analytic = true;   // use closed-form compensators when a model has one
  const SampleGrid* grid = nullptr;  // frozen sample locations; overrides sample_seed
};

struct LossResult {
  ad::Tensor nll;                  // 1x1, summed NLL divided by the batch's event count
  std::vector<double> seq_loglik;  // per sequence, nats
  std::vector<double> time_loglik; // time part of seq_loglik
  std::vector<double> type_loglik; // type part of seq_loglik
  std::size_t num_events = 0;
};

/// Common interface: forward, intensities at sample times, and the
/// log-likelihood loss. Attention models would implement the same three.
class TppModel {
 public:
  explicit TppModel(ModelConfig cfg) : cfg_(std::move(cfg)) {}
  virtual ~TppModel() = default;

  const std::string& id() const { return cfg_.model_id; }
  const ModelConfig& config() const { return cfg_; }
  int num_types() const { return cfg_.num_event_types; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Strictly causal: anchor a depends on events 1..a only. Throws TypeOutOfRange.
  virtual ModelState forward(const PaddedBatch& batch) const = 0;

  /// Intensities for the interval after `anchor`, at `samples_per_row` times per
  /// row (times laid out row-major [b][s]). Returns (B*S) x K.
  /// Throws SampleTimeBeforeAnchor for a valid row whose time precedes the anchor.
  virtual ad::Tensor intensities_at(const ModelState& state, const PaddedBatch& batch, std::size_t anchor,
                                    std::span<const double> times, std::size_t samples_per_row = 1) const = 0;

  virtual bool has_analytic_compensator() const { return false; }
  /// Integral of the total intensity over the interval after `anchor` (B x 1).
  virtual ad::Tensor compensator(const ModelState& state, const PaddedBatch& batch, std::size_t anchor) const;

  /// Whether thinning-based prediction applies.
  virtual bool is_intensity_based() const { return true; }

  /// Negative log-likelihood of the batch (the default integrates the
  /// intensity by Monte Carlo unless a closed form exists).
  virtual LossResult loglike_loss(const PaddedBatch& batch, const LossOptions& opts) const;

 protected:
  void check_batch(const PaddedBatch& batch) const;
  /// Intensities at the event closing the interval after `anchor` (B x K);
  /// rows without such an event are evaluated at the anchor.
  virtual ad::Tensor event_intensities(const ModelState& state, const PaddedBatch& batch, std::size_t anchor) const;
  ModelConfig cfg_;
  ParameterSet params_;
};

std::unique_ptr<TppModel> make_model(const ModelConfig& cfg);

/// Non-differentiable B x A x S x K intensities for a sample-time grid laid
/// out [b][a][s] with A = max_len + 1 anchors.
std::vector<double> compute_intensities_at_sample_times(const TppModel& model, const PaddedBatch& batch,
                                                        std::span<const double> sample_times,
                                                        std::size_t samples_per_anchor);

/// Trainable exponential-kernel Hawkes process (log-parameterized).
class HawkesModel final : public TppModel {
 public:
  explicit HawkesModel(ModelConfig cfg);
  HawkesModel(ModelConfig cfg, const HawkesParams& init);

  ModelState forward(const PaddedBatch& batch) const override;
  ad::Tensor intensities_at(const ModelState& state, const PaddedBatch& batch, std::size_t anchor,
                            std::span<const double> times, std::size_t samples_per_row) const override;
  bool has_analytic_compensator() const override { return true; }
  ad::Tensor compensator(const ModelState& state, const PaddedBatch& batch, std::size_t anchor) const override;

  HawkesParams hawkes_params() const;
  void set_hawkes_params(const HawkesParams& p);

 private:
  ad::Tensor log_mu_, log_alpha_, log_beta_;
  ad::Tensor group_;  // KK x K, sums source columns into targets
};

/// Type embedding plus sinusoidal encoding of the inter-event gap, projected to D.
class EventEmbedding {
 public:
  EventEmbedding() = default;
  EventEmbedding(ParameterSet& ps, const ModelConfig& cfg, Rng& rng);
  /// Rows: types (pad id K allowed) and gaps.
  ad::Tensor operator()(std::span<const int> types, std::span<const double> dtimes) const;
  std::vector<double> time_encoding(double dt) const;

 private:
  ad::Tensor type_table_, proj_w_, proj_b_;
  int num_types_ = 0;
  std::size_t emb_ = 0;
  std::vector<double> freqs_;
};

/// Stacked tanh recurrence shared by RMTPP and the IFTPP history encoder.
class StackedRnn {
 public:
  StackedRnn() = default;
  StackedRnn(ParameterSet& ps, const ModelConfig& cfg, Rng& rng, const std::string& prefix);
  /// Returns the per-layer states after consuming x (B x D).
  std::vector<ad::Tensor> step(const ad::Tensor& x, const std::vector<ad::Tensor>& prev) const;
  std::vector<ad::Tensor> zeros(std::size_t batch) const;

 private:
  std::vector<ad::Tensor> w_, u_, b_;
  std::size_t d_ = 0;
};

class RmtppModel final : public TppModel {
 public:
  explicit RmtppModel(ModelConfig cfg);
  ModelState forward(const PaddedBatch& batch) const override;
  ad::Tensor intensities_at(const ModelState& state, const PaddedBatch& batch, std::size_t anchor,
                            std::span<const double> times, std::size_t samples_per_row) const override;
  bool has_analytic_compensator() const override { return true; }
  ad::Tensor compensator(const ModelState& state, const PaddedBatch& batch, std::size_t anchor) const override;

 private:
  ad::Tensor head_logits(const ModelState& state, std::size_t anchor) const;
  EventEmbedding embed_;
  StackedRnn rnn_;
  ad::Tensor v_, vb_, w_;
};

/// Continuous-decay recurrent TPP: between events the state relaxes
/// exponentially from h_i toward a target state at a learned rate.
class NhpLiteModel final : public TppModel {
 public:
  explicit NhpLiteModel(ModelConfig cfg);
  ModelState forward(const PaddedBatch& batch) const override;
  ad::Tensor intensities_at(const ModelState& state, const PaddedBatch& batch, std::size_t anchor,
                            std::span<const double> times, std::size_t samples_per_row) const override;
  /// h(t) = h_a + (target - h_a)(1 - exp(-decay (t - t_a))), rows laid out like intensities_at.
  ad::Tensor decayed_state(const ModelState& state, const PaddedBatch& batch, std::size_t anchor,
                           std::span<const double> times, std::size_t samples_per_row = 1) const;

 private:
  EventEmbedding embed_;
  std::vector<ad::Tensor> layer_w_, layer_b_;
  ad::Tensor target_w_, target_b_, decay_w_, decay_b_, out_w_, out_b_, out_scale_;
};

/// Neural-ODE state TPP: dh/dt = tanh(tanh(h W1 + b1) W2 + b2), integrated with RK4.
class OdeTppModel final : public TppModel {
 public:
  explicit OdeTppModel(ModelConfig cfg);
  ModelState forward(const PaddedBatch& batch) const override;
  ad::Tensor intensities_at(const ModelState& state, const PaddedBatch& batch, std::size_t anchor,
                            std::span<const double> times, std::size_t samples_per_row) const override;
  /// Integrates every row of h over its own duration with `steps` RK4 steps.
  ad::Tensor integrate(const ad::Tensor& h, std::span<const double> durations, int steps) const;
  void set_ode_steps(int steps) { cfg_.ode_steps = steps; }

 protected:
  ad::Tensor event_intensities(const ModelState& state, const PaddedBatch& batch, std::size_t anchor) const override;

 private:
  ad::Tensor head(const ad::Tensor& h) const;
  EventEmbedding embed_;
  std::vector<ad::Tensor> layer_w_, layer_b_;
  ad::Tensor f_w1_, f_b1_, f_w2_, f_b2_, out_w_, out_b_, out_scale_;
};

/// Intensity-free TPP: log-normal mixture over inter-event gaps plus a
/// categorical type head, both conditioned on an RNN history encoding.
class IftppModel final : public TppModel {
 public:
  explicit IftppModel(ModelConfig cfg);
  ModelState forward(const PaddedBatch& batch) const override;
  /// Hazard-based intensities p(tau)/S(tau) * P(k).
  ad::Tensor intensities_at(const ModelState& state, const PaddedBatch& batch, std::size_t anchor,
                            std::span<const double> times, std::size_t samples_per_row) const override;
  bool is_intensity_based() const override { return false; }
  LossResult loglike_loss(const PaddedBatch& batch, const LossOptions& opts) const override;

  struct Mixture {
    std::vector<double> log_weights, means, log_scales;
  };
  /// Mixture parameters of the gap distribution after `anchor` for row b.
  Mixture mixture(const ModelState& state, std::size_t anchor, std::size_t row) const;
  /// Log density of the gap tau > 0 under a mixture.
  static double log_density(const Mixture& m, double tau);

 private:
  struct Heads {
    ad::Tensor log_weights, means, log_scales, type_logp;
  };
  Heads heads(const ModelState& state, std::size_t anchor) const;
  EventEmbedding embed_;
  StackedRnn rnn_;
  ad::Tensor mix_w_, mix_b_, mean_w_, mean_b_, scale_w_, scale_b_, type_w_, type_b_;
};

/// Intensity source backed by a model, conditioned on a history prefix.
class ModelSource final : public IntensitySource {
 public:
  /// Conditions on the first `anchor` events of `seq`; queries start at
  /// max(t_anchor, start_time).
  ModelSource(const TppModel& model, const EventSequence& seq, std::size_t anchor, double start_time = 0.0);
  /// Reuses a forward pass over the full sequence.
  ModelSource(const TppModel& model, std::shared_ptr<const PaddedBatch> batch,
              std::shared_ptr<const ModelState> state, std::size_t anchor, double start_time = 0.0);

  int num_types() const override { return model_->num_types(); }
  double anchor_time() const override { return start_; }
  std::vector<std::vector<double>> intensities(const std::vector<double>& times) const override;
  IntensityBound upper_bound(double t0, const ThinningConfig& cfg) const override;
  void observe(double t, int type) override;
  std::unique_ptr<IntensitySource> clone() const override;

 private:
  void refresh();
  const TppModel* model_;
  EventSequence history_;
  std::shared_ptr<const PaddedBatch> batch_;
  std::shared_ptr<const ModelState> state_;
  std::size_t anchor_ = 0;
  double start_ = 0.0;
  // Repeated draws from the same anchor reuse one probe-grid bound.
  mutable std::vector<double> bound_key_;
  mutable IntensityBound bound_;
};

struct CheckpointInfo {
  ModelConfig config;
  std::uint64_t step = 0;
  std::size_t num_params = 0;
};

/// Writes `<prefix>.json` (config, seed, step, layout) and `<prefix>.bin`
/// (little-endian float64 parameters in declaration order).
void save_checkpoint(const TppModel& model, const std::filesystem::path& prefix, std::uint64_t step);
CheckpointInfo read_checkpoint_manifest(const std::filesystem::path& prefix);
std::unique_ptr<TppModel> load_checkpoint(const std::filesystem::path& prefix);
/// Loads parameters into an existing model; throws IncompatibleCheckpoint.
void load_checkpoint_into(TppModel& model, const std::filesystem::path& prefix);

}  // namespace tpp

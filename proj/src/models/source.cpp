#include <algorithm>

#include "tpp/error.hpp"
#include "tpp/models.hpp"

namespace tpp {

ModelSource::ModelSource(const TppModel& model, const EventSequence& seq, std::size_t anchor, double start_time)
    : model_(&model), history_(seq.prefix(anchor)) {
  start_ = std::max(history_.last_time(), start_time);
  refresh();
}

ModelSource::ModelSource(const TppModel& model, std::shared_ptr<const PaddedBatch> batch,
                         std::shared_ptr<const ModelState> state, std::size_t anchor, double start_time)
    : model_(&model), batch_(std::move(batch)), state_(std::move(state)), anchor_(anchor) {
  if (batch_->batch_size != 1) throw Error(ErrorCode::ShapeMismatch, "model source needs a single-row batch");
  if (anchor_ > batch_->seq_lens[0]) throw Error(ErrorCode::ShapeMismatch, "anchor past the end of the sequence");
  history_ = unpad(*batch_)[0].prefix(anchor_);
  start_ = std::max(history_.last_time(), start_time);
}

void ModelSource::refresh() {
  ad::NoGradGuard guard;
  history_.t_end = std::max(history_.last_time(), start_);
  auto batch = std::make_shared<PaddedBatch>(pad_batch({history_}, model_->num_types()));
  state_ = std::make_shared<ModelState>(model_->forward(*batch));
  batch_ = std::move(batch);
  anchor_ = history_.size();
  bound_key_.clear();
}

std::vector<std::vector<double>> ModelSource::intensities(const std::vector<double>& times) const {
  if (times.empty()) return {};
  ad::NoGradGuard guard;
  const ad::Tensor lam = model_->intensities_at(*state_, *batch_, anchor_, times, times.size());
  const auto k = static_cast<std::size_t>(model_->num_types());
  std::vector<std::vector<double>> out(times.size(), std::vector<double>(k));
  for (std::size_t i = 0; i < times.size(); ++i) {
    for (std::size_t j = 0; j < k; ++j) out[i][j] = lam.at(i, j);
  }
  return out;
}

IntensityBound ModelSource::upper_bound(double t0, const ThinningConfig& cfg) const {
  const std::vector<double> key = {t0, static_cast<double>(cfg.probe_points), cfg.probe_span_factor,
                                   cfg.expected_dtime, cfg.over_sample_factor};
  if (key != bound_key_) {
    bound_ = probe_grid_bound(*this, t0, cfg);
    bound_key_ = key;
  }
  return bound_;
}

void ModelSource::observe(double t, int type) {
  if (t < start_) throw Error(ErrorCode::TimeBeforeHistory, "observed event precedes the current time");
  if (type < 0 || type >= model_->num_types()) throw Error(ErrorCode::TypeOutOfRange, "event type out of range");
  history_.times.push_back(t);
  history_.types.push_back(type);
  start_ = t;
  refresh();
}

std::unique_ptr<IntensitySource> ModelSource::clone() const { return std::make_unique<ModelSource>(*this); }

}  // namespace tpp

#include <cmath>

#include "internal.hpp"
#include "tpp/error.hpp"
#include "tpp/models.hpp"

namespace tpp {

namespace {

HawkesParams default_init(int k) {
  HawkesParams p;
  p.num_types = k;
  const auto kk = static_cast<std::size_t>(k);
  p.mu.assign(kk, 0.5);
  p.alpha.assign(kk * kk, 0.5 / k);
  p.beta.assign(kk * kk, 2.0);
  return p;
}

std::vector<double> logs(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::log(v[i]);
  return out;
}

}  // namespace

HawkesModel::HawkesModel(ModelConfig cfg) : HawkesModel(cfg, default_init(cfg.num_event_types)) {}

HawkesModel::HawkesModel(ModelConfig cfg, const HawkesParams& init) : TppModel(std::move(cfg)) {
  const auto k = static_cast<std::size_t>(num_types());
  if (init.num_types != num_types()) throw Error(ErrorCode::InvalidParams, "parameter dimension mismatch");
  init.validate();
  log_mu_ = params_.add("log_mu", 1, k, logs(init.mu));
  log_alpha_ = params_.add("log_alpha", 1, k * k, logs(init.alpha));
  log_beta_ = params_.add("log_beta", 1, k * k, logs(init.beta));
  std::vector<double> g(k * k * k, 0.0);
  for (std::size_t tgt = 0; tgt < k; ++tgt) {
    for (std::size_t src = 0; src < k; ++src) g[(tgt * k + src) * k + tgt] = 1.0;
  }
  group_ = ad::Tensor::constant(k * k, k, std::move(g));
}

ModelState HawkesModel::forward(const PaddedBatch& batch) const {
  check_batch(batch);
  const std::size_t bsz = batch.batch_size, k = static_cast<std::size_t>(num_types());
  ModelState st;
  st.batch_size = bsz;
  st.num_anchors = batch.max_len + 1;
  const ad::Tensor beta = ad::exp(log_beta_);
  st.kernel.push_back(ad::Tensor::full(bsz, k * k, 0.0));
  for (std::size_t j = 0; j < batch.max_len; ++j) {
    const auto dts = detail::column_dtimes(batch, j);
    const ad::Tensor decay = ad::exp(ad::neg(ad::mul(ad::Tensor::constant(bsz, 1, dts), beta)));
    std::vector<double> jump(bsz * k * k, 0.0);
    for (std::size_t b = 0; b < bsz; ++b) {
      if (!batch.mask(b, j)) continue;
      const auto src = static_cast<std::size_t>(batch.type(b, j));
      for (std::size_t tgt = 0; tgt < k; ++tgt) jump[b * k * k + tgt * k + src] = 1.0;
    }
    st.kernel.push_back(ad::mul(st.kernel.back(), decay) + ad::Tensor::constant(bsz, k * k, std::move(jump)));
  }
  return st;
}

ad::Tensor HawkesModel::intensities_at(const ModelState& state, const PaddedBatch& batch, std::size_t anchor,
                                       std::span<const double> times, std::size_t samples_per_row) const {
  const ad::Tensor el = detail::elapsed_since_anchor(batch, anchor, times, samples_per_row);
  const ad::Tensor r = detail::expand_rows(state.kernel.at(anchor), samples_per_row);
  const ad::Tensor beta = ad::exp(log_beta_);
  const ad::Tensor ab = ad::exp(log_alpha_ + log_beta_);
  const ad::Tensor excite = ad::mul(ad::mul(r, ab), ad::exp(ad::neg(ad::mul(el, beta))));
  return ad::matmul(excite, group_) + ad::exp(log_mu_);
}

ad::Tensor HawkesModel::compensator(const ModelState& state, const PaddedBatch& batch, std::size_t anchor) const {
  const ad::Tensor tau = detail::interval_lengths(batch, anchor);
  const ad::Tensor beta = ad::exp(log_beta_);
  const ad::Tensor base = ad::mul(tau, ad::sum_cols(ad::exp(log_mu_)));
  const ad::Tensor frac = ad::add_scalar(ad::neg(ad::exp(ad::neg(ad::mul(tau, beta)))), 1.0);
  const ad::Tensor excite = ad::sum_cols(ad::mul(ad::mul(state.kernel.at(anchor), ad::exp(log_alpha_)), frac));
  return base + excite;
}

HawkesParams HawkesModel::hawkes_params() const {
  HawkesParams p;
  p.num_types = num_types();
  for (double v : log_mu_.values()) p.mu.push_back(std::exp(v));
  for (double v : log_alpha_.values()) p.alpha.push_back(std::exp(v));
  for (double v : log_beta_.values()) p.beta.push_back(std::exp(v));
  return p;
}

void HawkesModel::set_hawkes_params(const HawkesParams& p) {
  if (p.num_types != num_types()) throw Error(ErrorCode::InvalidParams, "parameter dimension mismatch");
  p.validate();
  auto copy = [](ad::Tensor& t, const std::vector<double>& v) {
    auto dst = t.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) dst[i] = std::log(v[i]);
  };
  copy(log_mu_, p.mu);
  copy(log_alpha_, p.alpha);
  copy(log_beta_, p.beta);
}

}  // namespace tpp

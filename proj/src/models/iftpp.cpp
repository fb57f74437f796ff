#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "internal.hpp"
#include "tpp/error.hpp"
#include "tpp/models.hpp"

namespace tpp {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

// Per-component log N(y; m, s) + log w, and the standardized residual.
struct Components {
  ad::Tensor log_joint;  // log w + log N(y; m, s) without the 1/tau Jacobian
  ad::Tensor z;
};

Components components(const ad::Tensor& log_w, const ad::Tensor& means, const ad::Tensor& log_scales,
                      const ad::Tensor& y) {
  const ad::Tensor z = ad::mul(y - means, ad::exp(ad::neg(log_scales)));
  const ad::Tensor lj = ad::add_scalar(log_w - log_scales - ad::scale(ad::square(z), 0.5), -kHalfLog2Pi);
  return {lj, z};
}

}  // namespace

IftppModel::IftppModel(ModelConfig cfg) : TppModel(std::move(cfg)) {
  Rng rng = make_rng(cfg_.seed, {0x1f70u});
  const auto d = static_cast<std::size_t>(cfg_.hidden_size), k = static_cast<std::size_t>(num_types());
  const auto m = static_cast<std::size_t>(cfg_.num_mixtures);
  embed_ = EventEmbedding(params_, cfg_, rng);
  rnn_ = StackedRnn(params_, cfg_, rng, "rnn");
  mix_w_ = params_.add_uniform("mix.w", d, m, rng);
  mix_b_ = params_.add_zeros("mix.b", 1, m);
  mean_w_ = params_.add_uniform("mean.w", d, m, rng);
  mean_b_ = params_.add_zeros("mean.b", 1, m);
  scale_w_ = params_.add_uniform("scale.w", d, m, rng);
  scale_b_ = params_.add_zeros("scale.b", 1, m);
  type_w_ = params_.add_uniform("type.w", d, k, rng);
  type_b_ = params_.add_zeros("type.b", 1, k);
}

ModelState IftppModel::forward(const PaddedBatch& batch) const {
  check_batch(batch);
  const std::size_t bsz = batch.batch_size;
  ModelState st;
  st.batch_size = bsz;
  st.num_anchors = batch.max_len + 1;
  const std::vector<int> bos(bsz, num_types());
  const std::vector<double> zero(bsz, 0.0);
  auto layers = rnn_.step(embed_(bos, zero), rnn_.zeros(bsz));
  st.hidden.push_back(layers.back());
  for (std::size_t j = 0; j < batch.max_len; ++j) {
    const ad::Tensor e = embed_(detail::column_types(batch, j), detail::column_dtimes(batch, j));
    layers = rnn_.step(e, layers);
    const ad::Tensor m = detail::column_mask(batch, j);
    st.embedding.push_back(ad::mul(e, m));
    st.hidden.push_back(ad::mul(layers.back(), m));
  }
  return st;
}

IftppModel::Heads IftppModel::heads(const ModelState& state, std::size_t anchor) const {
  const ad::Tensor& c = state.hidden.at(anchor);
  return {ad::log_softmax_cols(ad::matmul(c, mix_w_) + mix_b_), ad::matmul(c, mean_w_) + mean_b_,
          ad::matmul(c, scale_w_) + scale_b_, ad::log_softmax_cols(ad::matmul(c, type_w_) + type_b_)};
}

LossResult IftppModel::loglike_loss(const PaddedBatch& batch, const LossOptions&) const {
  check_batch(batch);
  const ModelState state = forward(batch);
  const std::size_t bsz = batch.batch_size, kk = static_cast<std::size_t>(num_types());
  LossResult res;
  res.num_events = batch.num_events();
  ad::Tensor time_ll = ad::Tensor::full(bsz, 1, 0.0);
  ad::Tensor type_ll = ad::Tensor::full(bsz, 1, 0.0);

  for (std::size_t a = 0; a < batch.max_len; ++a) {
    std::vector<double> logtau(bsz, 0.0), onehot(bsz * kk, 0.0);
    for (std::size_t b = 0; b < bsz; ++b) {
      if (!batch.mask(b, a)) continue;
      logtau[b] = std::log(batch.dtime(b, a));
      onehot[b * kk + static_cast<std::size_t>(batch.type(b, a))] = 1.0;
    }
    const ad::Tensor y = ad::Tensor::constant(bsz, 1, logtau);
    const ad::Tensor mask = detail::column_mask(batch, a);
    const Heads hd = heads(state, a);
    const Components c = components(hd.log_weights, hd.means, hd.log_scales, y);
    const ad::Tensor logp = ad::logsumexp_cols(c.log_joint) - y;
    time_ll = time_ll + ad::mul(logp, mask);
    type_ll = type_ll + ad::sum_cols(ad::mul(hd.type_logp, ad::Tensor::constant(bsz, kk, onehot)));
  }

  // Survival of the gap from the last event to the window end, taken from
  // each row's own final anchor.
  std::vector<ad::Tensor> all(state.hidden.begin(), state.hidden.end());
  const ad::Tensor stacked = ad::concat_rows(all);
  std::vector<std::size_t> pick(bsz);
  std::vector<double> logtau(bsz, 0.0), has_tail(bsz, 0.0);
  for (std::size_t b = 0; b < bsz; ++b) {
    const std::size_t len = batch.seq_lens[b];
    pick[b] = len * bsz + b;
    const double tau = batch.t_end[b] - batch.anchor_time(b, len);
    if (tau > 0.0) {
      logtau[b] = std::log(tau);
      has_tail[b] = 1.0;
    }
  }
  ModelState last;
  last.hidden.push_back(ad::gather_rows(stacked, pick));
  const Heads hd = heads(last, 0);
  const Components c =
      components(hd.log_weights, hd.means, hd.log_scales, ad::Tensor::constant(bsz, 1, logtau));
  const ad::Tensor log_surv = ad::logsumexp_cols(hd.log_weights + ad::log_ndtr(ad::neg(c.z)));
  time_ll = time_ll + ad::mul(log_surv, ad::Tensor::constant(bsz, 1, has_tail));

  const ad::Tensor seq_ll = time_ll + type_ll;
  const double denom = static_cast<double>(std::max<std::size_t>(res.num_events, 1));
  res.nll = ad::scale(ad::sum(seq_ll), -1.0 / denom);
  res.seq_loglik.assign(seq_ll.values().begin(), seq_ll.values().end());
  res.time_loglik.assign(time_ll.values().begin(), time_ll.values().end());
  res.type_loglik.assign(type_ll.values().begin(), type_ll.values().end());
  return res;
}

ad::Tensor IftppModel::intensities_at(const ModelState& state, const PaddedBatch& batch, std::size_t anchor,
                                      std::span<const double> times, std::size_t samples_per_row) const {
  auto el = detail::elapsed_values(batch, anchor, times, samples_per_row);
  for (double& v : el) v = std::log(std::max(v, 1e-300));
  const std::size_t n = el.size();
  const ad::Tensor y = ad::Tensor::constant(n, 1, std::move(el));
  const Heads hd = heads(state, anchor);
  const ad::Tensor lw = detail::expand_rows(hd.log_weights, samples_per_row);
  const Components c = components(lw, detail::expand_rows(hd.means, samples_per_row),
                                  detail::expand_rows(hd.log_scales, samples_per_row), y);
  const ad::Tensor logp = ad::logsumexp_cols(c.log_joint) - y;
  const ad::Tensor log_surv = ad::logsumexp_cols(lw + ad::log_ndtr(ad::neg(c.z)));
  return ad::exp(logp - log_surv + detail::expand_rows(hd.type_logp, samples_per_row));
}

IftppModel::Mixture IftppModel::mixture(const ModelState& state, std::size_t anchor, std::size_t row) const {
  ad::NoGradGuard guard;
  const Heads hd = heads(state, anchor);
  Mixture m;
  for (std::size_t j = 0; j < hd.log_weights.cols(); ++j) {
    m.log_weights.push_back(hd.log_weights.at(row, j));
    m.means.push_back(hd.means.at(row, j));
    m.log_scales.push_back(hd.log_scales.at(row, j));
  }
  return m;
}

double IftppModel::log_density(const Mixture& m, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::DomainError, "gap must be positive");
  const double y = std::log(tau);
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(m.means.size());
  for (std::size_t j = 0; j < terms.size(); ++j) {
    const double z = (y - m.means[j]) * std::exp(-m.log_scales[j]);
    terms[j] = m.log_weights[j] - m.log_scales[j] - 0.5 * z * z - kHalfLog2Pi;
    mx = std::max(mx, terms[j]);
  }
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  return mx + std::log(s) - y;
}

}  // namespace tpp

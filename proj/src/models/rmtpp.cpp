#include <vector>

#include "internal.hpp"
#include "tpp/models.hpp"

namespace tpp {

RmtppModel::RmtppModel(ModelConfig cfg) : TppModel(std::move(cfg)) {
  Rng rng = make_rng(cfg_.seed, {0x4d01u});
  const auto d = static_cast<std::size_t>(cfg_.hidden_size), k = static_cast<std::size_t>(num_types());
  embed_ = EventEmbedding(params_, cfg_, rng);
  rnn_ = StackedRnn(params_, cfg_, rng, "rnn");
  v_ = params_.add_uniform("head.v", d, k, rng);
  vb_ = params_.add_zeros("head.vb", 1, k);
  w_ = params_.add_zeros("head.w", 1, k);
}

ModelState RmtppModel::forward(const PaddedBatch& batch) const {
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
    st.embedding.push_back(ad::mul(e, detail::column_mask(batch, j)));
    st.hidden.push_back(ad::mul(layers.back(), detail::column_mask(batch, j)));
  }
  return st;
}

ad::Tensor RmtppModel::head_logits(const ModelState& state, std::size_t anchor) const {
  return ad::matmul(state.hidden.at(anchor), v_) + vb_;
}

ad::Tensor RmtppModel::intensities_at(const ModelState& state, const PaddedBatch& batch, std::size_t anchor,
                                      std::span<const double> times, std::size_t samples_per_row) const {
  const ad::Tensor el = detail::elapsed_since_anchor(batch, anchor, times, samples_per_row);
  const ad::Tensor logits = detail::expand_rows(head_logits(state, anchor), samples_per_row);
  return ad::exp(logits + ad::mul(el, w_));
}

ad::Tensor RmtppModel::compensator(const ModelState& state, const PaddedBatch& batch, std::size_t anchor) const {
  // Integral of exp(a + w s) over [0, tau] is exp(a) * tau * exprel(w tau).
  const ad::Tensor tau = detail::interval_lengths(batch, anchor);
  const ad::Tensor per_type = ad::mul(ad::mul(ad::exp(head_logits(state, anchor)), tau), ad::exprel(ad::mul(tau, w_)));
  return ad::sum_cols(per_type);
}

}  // namespace tpp

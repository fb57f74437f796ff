#include <array>
#include <vector>

#include "internal.hpp"
#include "tpp/models.hpp"

namespace tpp {

namespace {

// softplus(0.5413) is about 1, so the head starts as a plain softplus.
constexpr double kScaleInit = 0.5413;

}  // namespace

NhpLiteModel::NhpLiteModel(ModelConfig cfg) : TppModel(std::move(cfg)) {
  Rng rng = make_rng(cfg_.seed, {0x4e48u});
  const auto d = static_cast<std::size_t>(cfg_.hidden_size), k = static_cast<std::size_t>(num_types());
  embed_ = EventEmbedding(params_, cfg_, rng);
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const std::string p = "update.l" + std::to_string(l);
    layer_w_.push_back(params_.add_uniform(p + ".w", l == 0 ? 2 * d : d, d, rng));
    layer_b_.push_back(params_.add_zeros(p + ".b", 1, d));
  }
  target_w_ = params_.add_uniform("target.w", d, d, rng);
  target_b_ = params_.add_zeros("target.b", 1, d);
  decay_w_ = params_.add_uniform("decay.w", d, d, rng);
  decay_b_ = params_.add_zeros("decay.b", 1, d);
  out_w_ = params_.add_uniform("out.w", d, k, rng);
  out_b_ = params_.add_zeros("out.b", 1, k);
  out_scale_ = params_.add("out.scale", 1, k, std::vector<double>(k, kScaleInit));
}

ModelState NhpLiteModel::forward(const PaddedBatch& batch) const {
  check_batch(batch);
  const std::size_t bsz = batch.batch_size, d = static_cast<std::size_t>(cfg_.hidden_size);
  ModelState st;
  st.batch_size = bsz;
  st.num_anchors = batch.max_len + 1;

  auto update = [&](const ad::Tensor& e, const ad::Tensor& h_left) {
    const ad::Tensor u = detail::tanh_stack(ad::concat_cols({e, h_left}), layer_w_, layer_b_);
    return std::array<ad::Tensor, 3>{u, ad::tanh(ad::matmul(u, target_w_) + target_b_),
                                     ad::softplus(ad::matmul(u, decay_w_) + decay_b_)};
  };

  const std::vector<int> bos(bsz, num_types());
  const std::vector<double> zero(bsz, 0.0);
  auto s = update(embed_(bos, zero), ad::Tensor::full(bsz, d, 0.0));
  st.hidden.push_back(s[0]);
  st.target.push_back(s[1]);
  st.decay.push_back(s[2]);
  for (std::size_t j = 0; j < batch.max_len; ++j) {
    const auto dts = detail::column_dtimes(batch, j);
    const ad::Tensor dt = ad::Tensor::constant(bsz, 1, dts);
    const ad::Tensor h_left = s[1] + ad::mul(s[0] - s[1], ad::exp(ad::neg(ad::mul(s[2], dt))));
    const ad::Tensor e = embed_(detail::column_types(batch, j), dts);
    s = update(e, h_left);
    const ad::Tensor m = detail::column_mask(batch, j);
    st.embedding.push_back(ad::mul(e, m));
    st.hidden.push_back(ad::mul(s[0], m));
    st.target.push_back(ad::mul(s[1], m));
    st.decay.push_back(ad::mul(s[2], m));
  }
  return st;
}

ad::Tensor NhpLiteModel::intensities_at(const ModelState& state, const PaddedBatch& batch, std::size_t anchor,
                                        std::span<const double> times, std::size_t samples_per_row) const {
  const ad::Tensor ht = decayed_state(state, batch, anchor, times, samples_per_row);
  return detail::scaled_softplus(ad::matmul(ht, out_w_) + out_b_, out_scale_);
}

ad::Tensor NhpLiteModel::decayed_state(const ModelState& state, const PaddedBatch& batch, std::size_t anchor,
                                       std::span<const double> times, std::size_t samples_per_row) const {
  const ad::Tensor el = detail::elapsed_since_anchor(batch, anchor, times, samples_per_row);
  const ad::Tensor h = detail::expand_rows(state.hidden.at(anchor), samples_per_row);
  const ad::Tensor tgt = detail::expand_rows(state.target.at(anchor), samples_per_row);
  const ad::Tensor x = ad::mul(detail::expand_rows(state.decay.at(anchor), samples_per_row), el);
  // 1 - exp(-x) written as x * exprel(-x) so zero elapsed time gives h exactly
  return h + ad::mul(tgt - h, ad::mul(x, ad::exprel(ad::neg(x))));
}

}  // namespace tpp

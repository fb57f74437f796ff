#include <algorithm>
#include <cmath>
#include <numeric>

#include "internal.hpp"
#include "tpp/error.hpp"
#include "tpp/models.hpp"

namespace tpp {

namespace detail {

std::vector<std::size_t> repeat_rows(std::size_t rows, std::size_t times) {
  std::vector<std::size_t> idx(rows * times);
  for (std::size_t r = 0; r < rows; ++r) std::fill_n(idx.begin() + static_cast<std::ptrdiff_t>(r * times), times, r);
  return idx;
}

ad::Tensor expand_rows(const ad::Tensor& t, std::size_t samples) {
  if (samples == 1) return t;
  const auto idx = repeat_rows(t.rows(), samples);
  return ad::gather_rows(t, idx);
}

std::vector<double> elapsed_values(const PaddedBatch& batch, std::size_t anchor, std::span<const double> times,
                                   std::size_t samples) {
  const std::size_t bsz = batch.batch_size;
  if (samples == 0 || times.size() != bsz * samples) {
    throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(bsz * samples) + " query times, got " +
                                              std::to_string(times.size()));
  }
  if (anchor > batch.max_len) throw Error(ErrorCode::ShapeMismatch, "anchor index out of range");
  std::vector<double> out(times.size());
  for (std::size_t b = 0; b < bsz; ++b) {
    const bool valid = batch.anchor_valid(b, anchor);
    const double t0 = batch.anchor_time(b, std::min(anchor, batch.seq_lens[b]));
    for (std::size_t s = 0; s < samples; ++s) {
      const double t = times[b * samples + s];
      if (valid && t < t0) {
        throw Error(ErrorCode::SampleTimeBeforeAnchor,
                    "query time " + std::to_string(t) + " precedes anchor " + std::to_string(t0));
      }
      out[b * samples + s] = valid ? t - t0 : std::max(0.0, t - t0);
    }
  }
  return out;
}

ad::Tensor elapsed_since_anchor(const PaddedBatch& batch, std::size_t anchor, std::span<const double> times,
                                std::size_t samples) {
  auto v = elapsed_values(batch, anchor, times, samples);
  const std::size_t n = v.size();
  return ad::Tensor::constant(n, 1, std::move(v));
}

std::vector<int> column_types(const PaddedBatch& batch, std::size_t j) {
  std::vector<int> out(batch.batch_size);
  for (std::size_t b = 0; b < batch.batch_size; ++b) out[b] = batch.type(b, j);
  return out;
}

std::vector<double> column_dtimes(const PaddedBatch& batch, std::size_t j) {
  std::vector<double> out(batch.batch_size);
  for (std::size_t b = 0; b < batch.batch_size; ++b) out[b] = batch.mask(b, j) ? batch.dtime(b, j) : 0.0;
  return out;
}

ad::Tensor column_mask(const PaddedBatch& batch, std::size_t j) {
  std::vector<double> m(batch.batch_size);
  for (std::size_t b = 0; b < batch.batch_size; ++b) m[b] = batch.mask(b, j) ? 1.0 : 0.0;
  return ad::Tensor::constant(batch.batch_size, 1, std::move(m));
}

std::vector<double> interval_length_values(const PaddedBatch& batch, std::size_t a) {
  std::vector<double> out(batch.batch_size, 0.0);
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    if (batch.anchor_valid(b, a)) out[b] = batch.interval_end(b, a) - batch.anchor_time(b, a);
  }
  return out;
}

ad::Tensor interval_lengths(const PaddedBatch& batch, std::size_t a) {
  return ad::Tensor::constant(batch.batch_size, 1, interval_length_values(batch, a));
}

ad::Tensor tanh_stack(ad::Tensor x, const std::vector<ad::Tensor>& w, const std::vector<ad::Tensor>& b) {
  for (std::size_t l = 0; l < w.size(); ++l) x = ad::tanh(ad::matmul(x, w[l]) + b[l]);
  return x;
}

ad::Tensor scaled_softplus(const ad::Tensor& x, const ad::Tensor& raw) {
  const ad::Tensor s = ad::softplus(raw);
  return ad::mul(ad::softplus(ad::div(x, s)), s);
}

}  // namespace detail

void ModelConfig::validate() const {
  static const std::vector<std::string> known = {"hawkes", "rmtpp", "nhp_lite", "odetpp", "iftpp"};
  if (std::find(known.begin(), known.end(), model_id) == known.end()) {
    throw Error(ErrorCode::BadConfig, "unknown model id '" + model_id + "'");
  }
  if (num_event_types < 1) throw Error(ErrorCode::BadConfig, "num_event_types must be >= 1");
  if (hidden_size < 1 || time_emb_size < 2 || num_layers < 1 || num_mixtures < 1 || ode_steps < 1) {
    throw Error(ErrorCode::BadConfig, "model sizes must be positive (time_emb_size >= 2)");
  }
}

ModelConfig ModelConfig::defaults_for(const std::string& model_id, int num_event_types) {
  ModelConfig c;
  c.model_id = model_id;
  c.num_event_types = num_event_types;
  c.hidden_size = model_id == "nhp_lite" ? 64 : 32;
  return c;
}

ad::Tensor ParameterSet::add(std::string name, std::size_t rows, std::size_t cols, std::vector<double> init) {
  for (const auto& it : items_) {
    if (it.name == name) throw Error(ErrorCode::BadConfig, "duplicate parameter " + name);
  }
  ad::Tensor t = ad::Tensor::parameter(rows, cols, std::move(init));
  items_.push_back({std::move(name), t});
  return t;
}

ad::Tensor ParameterSet::add_uniform(std::string name, std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::vector<double> v(rows * cols);
  for (double& x : v) x = (2.0 * uniform01(rng) - 1.0) * bound;
  return add(std::move(name), rows, cols, std::move(v));
}

ad::Tensor ParameterSet::add_zeros(std::string name, std::size_t rows, std::size_t cols) {
  return add(std::move(name), rows, cols, std::vector<double>(rows * cols, 0.0));
}

std::vector<ad::Tensor> ParameterSet::tensors() const {
  std::vector<ad::Tensor> out;
  out.reserve(items_.size());
  for (const auto& it : items_) out.push_back(it.tensor);
  return out;
}

std::size_t ParameterSet::total_size() const {
  std::size_t n = 0;
  for (const auto& it : items_) n += it.tensor.size();
  return n;
}

std::vector<double> ParameterSet::flatten() const {
  std::vector<double> out;
  out.reserve(total_size());
  for (const auto& it : items_) out.insert(out.end(), it.tensor.values().begin(), it.tensor.values().end());
  return out;
}

void ParameterSet::assign(std::span<const double> flat) {
  if (flat.size() != total_size()) {
    throw Error(ErrorCode::ShapeMismatch, "parameter vector has " + std::to_string(flat.size()) +
                                              " values, expected " + std::to_string(total_size()));
  }
  std::size_t off = 0;
  for (auto& it : items_) {
    auto dst = it.tensor.mutable_values();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), dst.size(), dst.begin());
    off += dst.size();
  }
}

void ParameterSet::zero_grad() {
  for (auto& it : items_) it.tensor.zero_grad();
}

const ad::Tensor& ParameterSet::get(const std::string& name) const {
  for (const auto& it : items_) {
    if (it.name == name) return it.tensor;
  }
  throw Error(ErrorCode::BadConfig, "no parameter named " + name);
}

EventEmbedding::EventEmbedding(ParameterSet& ps, const ModelConfig& cfg, Rng& rng)
    : num_types_(cfg.num_event_types), emb_(static_cast<std::size_t>(cfg.time_emb_size)) {
  const std::size_t nf = emb_ / 2;
  for (std::size_t i = 0; i < nf; ++i) {
    const double frac = nf > 1 ? static_cast<double>(i) / static_cast<double>(nf - 1) : 0.5;
    freqs_.push_back(std::pow(10.0, -2.0 + 3.0 * frac));
  }
  const auto d = static_cast<std::size_t>(cfg.hidden_size);
  type_table_ = ps.add_uniform("embed.type_table", static_cast<std::size_t>(num_types_) + 1, emb_, rng);
  proj_w_ = ps.add_uniform("embed.proj_w", emb_ + 2 * nf, d, rng);
  proj_b_ = ps.add_zeros("embed.proj_b", 1, d);
}

std::vector<double> EventEmbedding::time_encoding(double dt) const {
  std::vector<double> out(2 * freqs_.size());
  for (std::size_t i = 0; i < freqs_.size(); ++i) {
    out[i] = std::sin(freqs_[i] * dt);
    out[freqs_.size() + i] = std::cos(freqs_[i] * dt);
  }
  return out;
}

ad::Tensor EventEmbedding::operator()(std::span<const int> types, std::span<const double> dtimes) const {
  const std::size_t bsz = types.size();
  std::vector<std::size_t> idx(bsz);
  std::vector<double> enc;
  enc.reserve(bsz * 2 * freqs_.size());
  for (std::size_t b = 0; b < bsz; ++b) {
    if (types[b] < 0 || types[b] > num_types_) {
      throw Error(ErrorCode::TypeOutOfRange, "event type " + std::to_string(types[b]) + " out of range");
    }
    idx[b] = static_cast<std::size_t>(types[b]);
    const auto e = time_encoding(dtimes[b]);
    enc.insert(enc.end(), e.begin(), e.end());
  }
  const ad::Tensor te = ad::gather_rows(type_table_, idx);
  const ad::Tensor ce = ad::Tensor::constant(bsz, 2 * freqs_.size(), std::move(enc));
  return ad::matmul(ad::concat_cols({te, ce}), proj_w_) + proj_b_;
}

StackedRnn::StackedRnn(ParameterSet& ps, const ModelConfig& cfg, Rng& rng, const std::string& prefix)
    : d_(static_cast<std::size_t>(cfg.hidden_size)) {
  for (int l = 0; l < cfg.num_layers; ++l) {
    const std::string p = prefix + ".l" + std::to_string(l);
    w_.push_back(ps.add_uniform(p + ".w", d_, d_, rng));
    u_.push_back(ps.add_uniform(p + ".u", d_, d_, rng));
    b_.push_back(ps.add_zeros(p + ".b", 1, d_));
  }
}

std::vector<ad::Tensor> StackedRnn::zeros(std::size_t batch) const {
  return std::vector<ad::Tensor>(w_.size(), ad::Tensor::full(batch, d_, 0.0));
}

std::vector<ad::Tensor> StackedRnn::step(const ad::Tensor& x, const std::vector<ad::Tensor>& prev) const {
  std::vector<ad::Tensor> out;
  out.reserve(w_.size());
  ad::Tensor in = x;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    in = ad::tanh(ad::matmul(in, w_[l]) + ad::matmul(prev[l], u_[l]) + b_[l]);
    out.push_back(in);
  }
  return out;
}

void TppModel::check_batch(const PaddedBatch& batch) const {
  if (batch.batch_size == 0) throw Error(ErrorCode::EmptyBatch, "empty batch");
  if (batch.num_types != num_types()) {
    throw Error(ErrorCode::TypeOutOfRange, "batch has " + std::to_string(batch.num_types) +
                                               " event types, model expects " + std::to_string(num_types()));
  }
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    for (std::size_t j = 0; j < batch.seq_lens[b]; ++j) {
      const int k = batch.type(b, j);
      if (k < 0 || k >= num_types()) {
        throw Error(ErrorCode::TypeOutOfRange,
                    "sequence " + std::to_string(b) + ": event type " + std::to_string(k) + " out of range");
      }
    }
  }
}

ad::Tensor TppModel::event_intensities(const ModelState& state, const PaddedBatch& batch, std::size_t anchor) const {
  std::vector<double> times(batch.batch_size);
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    times[b] = batch.mask(b, anchor) ? batch.time(b, anchor)
                                     : batch.anchor_time(b, std::min(anchor, batch.seq_lens[b]));
  }
  return intensities_at(state, batch, anchor, times, 1);
}

ad::Tensor TppModel::compensator(const ModelState&, const PaddedBatch&, std::size_t) const {
  throw Error(ErrorCode::NotSupported, id() + " has no closed-form compensator");
}

LossResult TppModel::loglike_loss(const PaddedBatch& batch, const LossOptions& opts) const {
  check_batch(batch);
  const ModelState state = forward(batch);
  const std::size_t bsz = batch.batch_size, kk = static_cast<std::size_t>(num_types());
  LossResult res;
  res.num_events = batch.num_events();
  res.type_loglik.assign(bsz, 0.0);

  ad::Tensor event_ll = ad::Tensor::full(bsz, 1, 0.0);
  for (std::size_t a = 0; a < batch.max_len; ++a) {
    std::vector<double> onehot(bsz * kk, 0.0), unmask(bsz, 0.0);
    for (std::size_t b = 0; b < bsz; ++b) {
      if (batch.mask(b, a)) {
        onehot[b * kk + static_cast<std::size_t>(batch.type(b, a))] = 1.0;
      } else {
        unmask[b] = 1.0;
      }
    }
    const ad::Tensor lam = event_intensities(state, batch, a);
    const ad::Tensor sel = ad::sum_cols(ad::mul(lam, ad::Tensor::constant(bsz, kk, onehot)));
    event_ll = event_ll + ad::log(sel + ad::Tensor::constant(bsz, 1, unmask));
    for (std::size_t b = 0; b < bsz; ++b) {
      if (!batch.mask(b, a)) continue;
      double tot = 0.0;
      for (std::size_t k = 0; k < kk; ++k) tot += lam.at(b, k);
      res.type_loglik[b] += std::log(lam.at(b, static_cast<std::size_t>(batch.type(b, a))) / tot);
    }
  }

  ad::Tensor comp;
  if (opts.prefer_analytic && has_analytic_compensator()) {
    comp = ad::Tensor::full(bsz, 1, 0.0);
    for (std::size_t a = 0; a <= batch.max_len; ++a) comp = comp + compensator(state, batch, a);
  } else if (opts.grid) {
    comp = mc_integral(*this, state, batch, *opts.grid);
  } else {
    const std::size_t m = opts.training ? opts.mc.samples_per_event_train : opts.mc.samples_per_event_eval;
    Rng rng = make_rng(opts.sample_seed, {0x3cu});
    const SampleGrid grid = draw_sample_grid(batch, m, rng, opts.mc.stratified);
    comp = mc_integral(*this, state, batch, grid);
  }

  const ad::Tensor seq_ll = event_ll - comp;
  const double denom = static_cast<double>(std::max<std::size_t>(res.num_events, 1));
  res.nll = ad::scale(ad::sum(seq_ll), -1.0 / denom);
  res.seq_loglik.assign(seq_ll.values().begin(), seq_ll.values().end());
  res.time_loglik.resize(bsz);
  for (std::size_t b = 0; b < bsz; ++b) res.time_loglik[b] = res.seq_loglik[b] - res.type_loglik[b];
  return res;
}

std::unique_ptr<TppModel> make_model(const ModelConfig& cfg) {
  cfg.validate();
  if (cfg.model_id == "hawkes") return std::make_unique<HawkesModel>(cfg);
  if (cfg.model_id == "rmtpp") return std::make_unique<RmtppModel>(cfg);
  if (cfg.model_id == "nhp_lite") return std::make_unique<NhpLiteModel>(cfg);
  if (cfg.model_id == "odetpp") return std::make_unique<OdeTppModel>(cfg);
  return std::make_unique<IftppModel>(cfg);
}

std::vector<double> compute_intensities_at_sample_times(const TppModel& model, const PaddedBatch& batch,
                                                        std::span<const double> sample_times,
                                                        std::size_t samples_per_anchor) {
  const std::size_t bsz = batch.batch_size, na = batch.max_len + 1, s = samples_per_anchor;
  const std::size_t kk = static_cast<std::size_t>(model.num_types());
  if (s == 0 || sample_times.size() != bsz * na * s) {
    throw Error(ErrorCode::ShapeMismatch, "sample grid must be B x A x S");
  }
  ad::NoGradGuard guard;
  const ModelState state = model.forward(batch);
  std::vector<double> out(bsz * na * s * kk);
  std::vector<double> times(bsz * s);
  for (std::size_t a = 0; a < na; ++a) {
    for (std::size_t b = 0; b < bsz; ++b) {
      for (std::size_t i = 0; i < s; ++i) times[b * s + i] = sample_times[(b * na + a) * s + i];
    }
    const ad::Tensor lam = model.intensities_at(state, batch, a, times, s);
    for (std::size_t b = 0; b < bsz; ++b) {
      for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t k = 0; k < kk; ++k) out[((b * na + a) * s + i) * kk + k] = lam.at(b * s + i, k);
      }
    }
  }
  return out;
}

}  // namespace tpp

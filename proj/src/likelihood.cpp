#include "tpp/likelihood.hpp"

#include <algorithm>
#include <cmath>

#include "tpp/error.hpp"
#include "tpp/models.hpp"

namespace tpp {

void MCConfig::validate() const {
  if (samples_per_event_train < 1 || samples_per_event_eval < 1) {
    throw Error(ErrorCode::BadConfig, "MC multipliers must be >= 1");
  }
}

SampleGrid draw_sample_grid(const PaddedBatch& batch, std::size_t per_interval, Rng& rng, bool stratified) {
  SampleGrid g;
  g.batch_size = batch.batch_size;
  g.num_anchors = batch.max_len + 1;
  g.per_interval = per_interval;
  g.times.resize(g.num_anchors * g.batch_size * per_interval);
  g.lengths.resize(g.num_anchors * g.batch_size);
  g.weights.resize(g.times.size());
  const std::size_t cells = (per_interval + 1) / 2;
  for (std::size_t a = 0; a < g.num_anchors; ++a) {
    for (std::size_t b = 0; b < g.batch_size; ++b) {
      const double lo = batch.anchor_time(b, std::min(a, batch.seq_lens[b]));
      const double len = batch.anchor_valid(b, a) ? batch.interval_end(b, a) - lo : 0.0;
      g.lengths[a * g.batch_size + b] = len;
      double* t = g.times.data() + (a * g.batch_size + b) * per_interval;
      double* w = g.weights.data() + (a * g.batch_size + b) * per_interval;
      if (!stratified) {
        // Draws are consumed even for empty intervals so a row's samples do
        // not depend on its neighbours' lengths.
        for (std::size_t s = 0; s < per_interval; ++s) {
          t[s] = lo + uniform_open(rng) * len;
          w[s] = len / static_cast<double>(per_interval);
        }
        continue;
      }
      // Log-spaced cells on the scale of the row's mean gap, each holding an
      // antithetic pair (the last cell holds a single point when m is odd).
      const double scale = batch.t_end[b] / static_cast<double>(batch.seq_lens[b] + 1);
      const double span = scale > 0.0 ? std::log1p(len / scale) : 0.0;
      auto edge = [&](std::size_t j) {
        const double f = static_cast<double>(j) / static_cast<double>(cells);
        if (j >= cells) return len;
        return scale > 0.0 ? scale * std::expm1(span * f) : len * f;
      };
      std::size_t s = 0;
      for (std::size_t c = 0; c < cells; ++c) {
        const double e0 = edge(c), width = edge(c + 1) - e0;
        const double u = uniform_open(rng);
        const std::size_t n = std::min<std::size_t>(2, per_interval - s);
        for (std::size_t k = 0; k < n; ++k, ++s) {
          t[s] = lo + e0 + (k == 0 ? u : 1.0 - u) * width;
          w[s] = width / static_cast<double>(n);
        }
      }
    }
  }
  return g;
}

ad::Tensor mc_integral(const TppModel& model, const ModelState& state, const PaddedBatch& batch,
                       const SampleGrid& grid) {
  const std::size_t bsz = batch.batch_size, m = grid.per_interval;
  ad::Tensor acc = ad::Tensor::full(bsz, 1, 0.0);
  std::vector<double> weight(bsz * m);
  for (std::size_t a = 0; a < grid.num_anchors; ++a) {
    bool any = false;
    for (std::size_t b = 0; b < bsz; ++b) {
      any = any || grid.length(a, b) > 0.0;
      for (std::size_t s = 0; s < m; ++s) weight[b * m + s] = grid.weight(a, b, s);
    }
    if (!any) continue;
    const ad::Tensor lam = model.intensities_at(state, batch, a, grid.anchor_times(a), m);  // (B*m) x K
    const ad::Tensor total = ad::sum_cols(lam);                                           // (B*m) x 1
    ad::Tensor weighted = ad::mul(total, ad::Tensor::constant(bsz * m, 1, weight));
    if (m > 1) weighted = ad::sum_row_groups(weighted, m);
    acc = ad::add(acc, weighted);
  }
  return acc;
}

std::vector<double> mc_integral(const std::function<double(std::size_t, double)>& total_intensity,
                                const PaddedBatch& batch, const SampleGrid& grid) {
  std::vector<double> out(batch.batch_size, 0.0);
  for (std::size_t a = 0; a < grid.num_anchors; ++a) {
    for (std::size_t b = 0; b < batch.batch_size; ++b) {
      const double len = grid.length(a, b);
      if (len <= 0.0) continue;
      for (std::size_t k = 0; k < grid.per_interval; ++k) {
        out[b] += grid.weight(a, b, k) * total_intensity(b, grid.time(a, b, k));
      }
    }
  }
  return out;
}

LoglikReport eval_loglik(const TppModel& model, const Dataset& dataset, const MCConfig& cfg,
                         std::size_t batch_size) {
  if (dataset.sequences.empty()) throw Error(ErrorCode::EmptyDataset, "no sequences to evaluate");
  LoglikReport rep;
  LossOptions opts;
  opts.mc = cfg;
  opts.training = false;
  opts.prefer_analytic = false;
  const std::size_t n = dataset.sequences.size();
  for (std::size_t start = 0, bi = 0; start < n; start += batch_size, ++bi) {
    const std::size_t end = std::min(n, start + batch_size);
    std::vector<EventSequence> chunk(dataset.sequences.begin() + static_cast<std::ptrdiff_t>(start),
                                     dataset.sequences.begin() + static_cast<std::ptrdiff_t>(end));
    const PaddedBatch batch = pad_batch(chunk, model.num_types());
    opts.sample_seed = derive_seed(cfg.rng_seed, {0xe7a1u, bi});
    const LossResult r = model.loglike_loss(batch, opts);
    for (std::size_t b = 0; b < r.seq_loglik.size(); ++b) {
      rep.total_loglik += r.seq_loglik[b];
      rep.time_loglik += r.time_loglik[b];
      rep.type_loglik += r.type_loglik[b];
    }
    rep.num_events += r.num_events;
    rep.num_sequences += chunk.size();
  }
  return rep;
}

}  // namespace tpp

#include "tpp/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "tpp/error.hpp"

namespace tpp {

void ThinningConfig::validate() const {
  if (num_samples < 1 || num_exp < 1 || max_rounds < 1 || probe_points < 1) {
    throw Error(ErrorCode::BadConfig, "thinning counts must be positive");
  }
  if (!(over_sample_factor >= 1.0)) throw Error(ErrorCode::BadConfig, "over_sample_factor must be >= 1");
  if (!(expected_dtime > 0.0) || !(probe_span_factor > 0.0)) {
    throw Error(ErrorCode::BadConfig, "probe window must be positive");
  }
}

HawkesSource::HawkesSource(const HawkesParams& p, const EventSequence& history, double anchor)
    : params_(p), state_(p), anchor_(anchor) {
  for (std::size_t i = 0; i < history.size(); ++i) state_.observe(history.times[i], history.types[i]);
  anchor_ = std::max(anchor, history.last_time());
}

std::vector<std::vector<double>> HawkesSource::intensities(const std::vector<double>& times) const {
  std::vector<std::vector<double>> out;
  out.reserve(times.size());
  for (double t : times) {
    if (t < anchor_) throw Error(ErrorCode::SampleTimeBeforeAnchor, "query before anchor");
    out.push_back(state_.intensities(t));
  }
  return out;
}

IntensityBound HawkesSource::upper_bound(double t0, const ThinningConfig&) const {
  IntensityBound b;
  b.rate = state_.total(std::max(t0, state_.last_time()));
  return b;
}

void HawkesSource::observe(double t, int type) {
  state_.observe(t, type);
  anchor_ = t;
}

std::unique_ptr<IntensitySource> HawkesSource::clone() const {
  return std::make_unique<HawkesSource>(*this);
}

ConstantSource::ConstantSource(std::vector<double> rates, double anchor, double bound_rate)
    : rates_(std::move(rates)), anchor_(anchor), bound_rate_(bound_rate) {}

std::vector<std::vector<double>> ConstantSource::intensities(const std::vector<double>& times) const {
  return std::vector<std::vector<double>>(times.size(), rates_);
}

IntensityBound ConstantSource::upper_bound(double, const ThinningConfig&) const {
  IntensityBound b;
  if (bound_rate_ > 0.0) {
    b.rate = bound_rate_;
  } else {
    for (double r : rates_) b.rate += r;
  }
  return b;
}

std::unique_ptr<IntensitySource> ConstantSource::clone() const {
  return std::make_unique<ConstantSource>(*this);
}

IntensityBound probe_grid_bound(const IntensitySource& src, double t0, const ThinningConfig& cfg) {
  const double span = cfg.probe_span_factor * cfg.expected_dtime;
  std::vector<double> grid(cfg.probe_points);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid[i] = t0 + span * static_cast<double>(i + 1) / static_cast<double>(grid.size());
  }
  // Include the left end: decaying intensities peak there.
  grid.insert(grid.begin(), t0);
  double peak = 0.0;
  for (const auto& row : src.intensities(grid)) {
    double s = 0.0;
    for (double l : row) s += l;
    peak = std::max(peak, s);
  }
  IntensityBound b;
  b.rate = peak * cfg.over_sample_factor;
  b.valid_until = t0 + span;
  b.exact = false;
  return b;
}

ThinningDraw thinning_sample_next(const IntensitySource& src, double t0, const ThinningConfig& cfg, Rng& rng) {
  ThinningDraw draw;
  double t = std::max(t0, src.anchor_time());
  IntensityBound bound = src.upper_bound(t, cfg);
  std::vector<double> cand;
  while (draw.rounds < cfg.max_rounds) {
    ++draw.rounds;
    if (!(bound.rate > 0.0)) {
      if (std::isinf(bound.valid_until)) {
        // No further events can occur.
        draw.time = std::numeric_limits<double>::infinity();
        return draw;
      }
      t = bound.valid_until;
      bound = src.upper_bound(t, cfg);
      continue;
    }
    cand.clear();
    double c = t;
    for (std::size_t i = 0; i < cfg.num_exp; ++i) {
      c += -std::log(uniform_open(rng)) / bound.rate;
      if (c > bound.valid_until) break;
      cand.push_back(c);
    }
    if (!cand.empty()) {
      const auto lam = src.intensities(cand);
      for (std::size_t i = 0; i < cand.size(); ++i) {
        double total = 0.0;
        for (double l : lam[i]) total += l;
        const double ratio = total / bound.rate;
        draw.max_ratio = std::max(draw.max_ratio, ratio);
        if (ratio > 1.0) ++draw.bound_violations;
        if (uniform01(rng) * bound.rate <= total) {
          draw.time = cand[i];
          double u = uniform01(rng) * total;
          draw.type = static_cast<int>(lam[i].size()) - 1;
          for (std::size_t k = 0; k < lam[i].size(); ++k) {
            if (u < lam[i][k]) {
              draw.type = static_cast<int>(k);
              break;
            }
            u -= lam[i][k];
          }
          return draw;
        }
      }
    }
    if (cand.size() < cfg.num_exp) {
      // Memorylessness lets the search restart at the end of the bound window.
      t = bound.valid_until;
      bound = src.upper_bound(t, cfg);
    } else {
      t = cand.back();
      if (src.refresh_bound_each_round()) bound = src.upper_bound(t, cfg);
    }
  }
  draw.censored = true;
  draw.time = t;
  return draw;
}

TimePrediction mbr_predict_time(const IntensitySource& src, const ThinningConfig& cfg,
                                std::uint64_t seq_key, std::uint64_t pos_key) {
  TimePrediction pred;
  double sum = 0.0;
  for (std::size_t d = 0; d < cfg.num_samples; ++d) {
    Rng rng = make_rng(cfg.rng_seed, {seq_key, pos_key, d});
    const ThinningDraw draw = thinning_sample_next(src, src.anchor_time(), cfg, rng);
    pred.bound_violations += draw.bound_violations;
    if (draw.censored || !std::isfinite(draw.time)) continue;
    sum += draw.time;
    ++pred.accepted;
  }
  if (pred.accepted == 0) throw Error(ErrorCode::AllDrawsCensored, "no thinning draw terminated");
  pred.time = sum / static_cast<double>(pred.accepted);
  pred.censor_rate = 1.0 - static_cast<double>(pred.accepted) / static_cast<double>(cfg.num_samples);
  return pred;
}

int argmax_type(const std::vector<double>& intensities) {
  int best = 0;
  for (std::size_t k = 1; k < intensities.size(); ++k) {
    if (intensities[k] > intensities[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
  }
  return best;
}

int mbr_predict_type(const IntensitySource& src, double t_true) {
  return argmax_type(src.intensities_at(t_true));
}

Rollout rollout_horizon(const IntensitySource& src, double horizon_end, const ThinningConfig& cfg,
                        std::uint64_t seq_key) {
  Rollout out;
  out.events.t_end = horizon_end;
  auto s = src.clone();
  double t = s->anchor_time();
  Rng rng = make_rng(cfg.rng_seed, {0x7011u, seq_key});
  while (t < horizon_end) {
    if (out.events.size() >= cfg.max_rollout_events) {
      out.capped = true;
      break;
    }
    const ThinningDraw d = thinning_sample_next(*s, t, cfg, rng);
    out.bound_violations += d.bound_violations;
    if (d.censored) {
      out.censored = true;
      break;
    }
    if (d.time > horizon_end) break;
    out.events.times.push_back(d.time);
    out.events.types.push_back(d.type);
    s->observe(d.time, d.type);
    t = d.time;
  }
  return out;
}

}  // namespace tpp

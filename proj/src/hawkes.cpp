#include "tpp/hawkes.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include <Eigen/Eigenvalues>

#include "tpp/error.hpp"
#include "tpp/sampler.hpp"

namespace tpp {

HawkesParams HawkesParams::univariate(double mu, double alpha, double beta) {
  return HawkesParams{1, {mu}, {alpha}, {beta}};
}

double HawkesParams::mu_total() const {
  double s = 0.0;
  for (double m : mu) s += m;
  return s;
}

void HawkesParams::validate() const {
  const auto k = static_cast<std::size_t>(num_types);
  if (num_types < 1 || mu.size() != k || alpha.size() != k * k || beta.size() != k * k) {
    throw Error(ErrorCode::InvalidParams, "Hawkes parameter sizes do not match K");
  }
  for (double m : mu)
    if (!std::isfinite(m) || m < 0.0) throw Error(ErrorCode::InvalidParams, "mu must be finite and >= 0");
  for (double a : alpha)
    if (!std::isfinite(a) || a < 0.0) throw Error(ErrorCode::InvalidParams, "alpha must be finite and >= 0");
  for (double b : beta)
    if (!std::isfinite(b) || b <= 0.0) throw Error(ErrorCode::InvalidParams, "beta must be finite and > 0");
}

double HawkesParams::spectral_radius() const {
  Eigen::MatrixXd m(num_types, num_types);
  for (int i = 0; i < num_types; ++i)
    for (int j = 0; j < num_types; ++j) m(i, j) = a(i, j);
  const Eigen::VectorXcd ev = m.eigenvalues();
  double r = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) r = std::max(r, std::abs(ev[i]));
  return r;
}

HawkesState::HawkesState(const HawkesParams& p)
    : p_(p), r_(static_cast<std::size_t>(p.num_types * p.num_types), 0.0) {}

void HawkesState::observe(double t, int type) {
  const int k = p_.num_types;
  if (type < 0 || type >= k) throw Error(ErrorCode::TypeOutOfRange, "type " + std::to_string(type));
  if (t < last_t_) throw Error(ErrorCode::TimeBeforeHistory, "event precedes state time");
  const double dt = t - last_t_;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) r_[static_cast<std::size_t>(i * k + j)] *= std::exp(-p_.b(i, j) * dt);
  for (int i = 0; i < k; ++i) r_[static_cast<std::size_t>(i * k + type)] += 1.0;
  last_t_ = t;
}

std::vector<double> HawkesState::intensities(double t) const {
  const int k = p_.num_types;
  const double dt = t - last_t_;
  std::vector<double> lam(p_.mu);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double r = r_[static_cast<std::size_t>(i * k + j)];
      if (r != 0.0) lam[static_cast<std::size_t>(i)] += p_.a(i, j) * p_.b(i, j) * r * std::exp(-p_.b(i, j) * dt);
    }
  return lam;
}

double HawkesState::total(double t) const {
  double s = 0.0;
  for (double l : intensities(t)) s += l;
  return s;
}

namespace {

std::vector<double> intensity_impl(const HawkesParams& p, const EventSequence& history, double t,
                                   bool inclusive) {
  const int k = p.num_types;
  std::vector<double> lam(p.mu);
  for (std::size_t i = 0; i < history.size(); ++i) {
    const double ti = history.times[i];
    if (ti > t || (!inclusive && ti == t)) break;
    const int s = history.types[i];
    for (int c = 0; c < k; ++c) {
      lam[static_cast<std::size_t>(c)] += p.a(c, s) * p.b(c, s) * std::exp(-p.b(c, s) * (t - ti));
    }
  }
  return lam;
}

}  // namespace

std::vector<double> hawkes_intensity(const HawkesParams& p, const EventSequence& history, double t) {
  if (!history.empty() && !(t > history.times.back())) {
    throw Error(ErrorCode::TimeBeforeHistory,
                "query at " + std::to_string(t) + " not after last event " + std::to_string(history.times.back()));
  }
  return intensity_impl(p, history, t, false);
}

std::vector<double> hawkes_intensity_right(const HawkesParams& p, const EventSequence& history, double t0) {
  return intensity_impl(p, history, t0, true);
}

std::vector<double> hawkes_event_intensities(const HawkesParams& p, const EventSequence& seq) {
  HawkesState state(p);
  std::vector<double> out;
  out.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const double t = seq.times[i];
    const auto lam = state.intensities(t);
    out.push_back(lam[static_cast<std::size_t>(seq.types[i])]);
    state.observe(t, seq.types[i]);
  }
  return out;
}

double hawkes_compensator_between(const HawkesParams& p, const EventSequence& seq, double lo, double hi) {
  const int k = p.num_types;
  double c = p.mu_total() * (hi - lo);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const double ti = seq.times[i];
    if (ti >= hi) break;
    const int s = seq.types[i];
    const double from = std::max(lo, ti);
    for (int tgt = 0; tgt < k; ++tgt) {
      const double b = p.b(tgt, s);
      // alpha * (exp(-b (from - ti)) - exp(-b (hi - ti)))
      c += p.a(tgt, s) * std::exp(-b * (from - ti)) * -std::expm1(-b * (hi - from));
    }
  }
  return c;
}

double hawkes_compensator(const HawkesParams& p, const EventSequence& seq) {
  const int k = p.num_types;
  const double t_end = std::max(seq.t_end, seq.last_time());
  double c = p.mu_total() * t_end;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const int s = seq.types[i];
    for (int tgt = 0; tgt < k; ++tgt) c += p.a(tgt, s) * -std::expm1(-p.b(tgt, s) * (t_end - seq.times[i]));
  }
  return c;
}

double hawkes_loglik(const HawkesParams& p, const EventSequence& seq) {
  double ll = 0.0;
  const auto lam = hawkes_event_intensities(p, seq);
  for (std::size_t i = 0; i < lam.size(); ++i) {
    if (!(lam[i] > 0.0)) {
      throw Error(ErrorCode::ZeroIntensityAtEvent, "event " + std::to_string(i));
    }
    ll += std::log(lam[i]);
  }
  return ll - hawkes_compensator(p, seq);
}

double hawkes_upper_bound(const HawkesParams& p, const EventSequence& history, double t0) {
  if (!history.empty() && t0 < history.times.back()) {
    throw Error(ErrorCode::TimeBeforeHistory, "bound requested before last event");
  }
  double s = 0.0;
  for (double l : hawkes_intensity_right(p, history, t0)) s += l;
  return s;
}

std::vector<double> hawkes_rescaled_intervals(const HawkesParams& p, const EventSequence& seq) {
  std::vector<double> out;
  out.reserve(seq.size());
  double prev = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    out.push_back(hawkes_compensator_between(p, seq, prev, seq.times[i]));
    prev = seq.times[i];
  }
  return out;
}

std::size_t hawkes_event_cap(const HawkesParams& p, double t_end) {
  const double rho = p.spectral_radius();
  constexpr double kFloor = 16.0;
  if (rho >= 1.0) return 10000;
  return static_cast<std::size_t>(std::ceil(std::max(kFloor, 10.0 * p.mu_total() * t_end / (1.0 - rho))));
}

std::vector<EventSequence> generate_hawkes(const HawkesParams& p, double t_end, std::size_t n_seqs,
                                           std::uint64_t seed) {
  p.validate();
  if (!(t_end > 0.0) || n_seqs < 1) throw Error(ErrorCode::InvalidParams, "need t_end > 0 and n_seqs >= 1");
  const std::size_t cap = hawkes_event_cap(p, t_end);
  ThinningConfig cfg;
  cfg.max_rounds = std::numeric_limits<std::size_t>::max();
  std::vector<EventSequence> out(n_seqs);
  for (std::size_t n = 0; n < n_seqs; ++n) {
    Rng rng = make_rng(seed, {0x6a77u, n});
    HawkesSource src(p);
    EventSequence& seq = out[n];
    seq.t_end = t_end;
    double t = 0.0;
    while (true) {
      const ThinningDraw d = thinning_sample_next(src, t, cfg, rng);
      if (d.censored || d.time > t_end) break;
      if (seq.size() >= cap) {
        throw Error(ErrorCode::ExplosiveParams,
                    "sequence " + std::to_string(n) + " exceeded " + std::to_string(cap) + " events");
      }
      seq.times.push_back(d.time);
      seq.types.push_back(d.type);
      src.observe(d.time, d.type);
      t = d.time;
    }
  }
  return out;
}

}  // namespace tpp

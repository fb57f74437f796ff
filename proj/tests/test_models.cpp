#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "tpp/error.hpp"
#include "tpp/models.hpp"

using namespace tpp;

namespace {

const std::vector<std::string> kNeural{"rmtpp", "nhp_lite", "odetpp", "iftpp"};

ModelConfig small_config(const std::string& id, std::uint64_t seed = 1) {
  ModelConfig cfg;
  cfg.model_id = id;
  cfg.num_event_types = 2;
  cfg.hidden_size = 4;
  cfg.time_emb_size = 3;
  cfg.num_layers = 2;
  cfg.num_mixtures = 3;
  cfg.ode_steps = 4;
  cfg.seed = seed;
  return cfg;
}

EventSequence seq_of(std::vector<double> times, std::vector<int> types, double t_end) {
  EventSequence s;
  s.times = std::move(times);
  s.types = std::move(types);
  s.t_end = t_end;
  return s;
}

std::vector<EventSequence> toy_sequences() {
  return {seq_of({0.3, 1.1, 1.9}, {0, 1, 0}, 2.5), seq_of({0.5, 2.0}, {1, 1}, 3.0),
          seq_of({0.2, 0.9, 1.4, 2.6}, {0, 0, 1, 1}, 3.2)};
}

std::vector<double> row(const ad::Tensor& t, std::size_t r) {
  return {t.values().begin() + r * t.cols(), t.values().begin() + (r + 1) * t.cols()};
}

LossOptions frozen_options(const SampleGrid& grid) {
  LossOptions o;
  o.training = false;
  o.grid = &grid;
  return o;
}

}  // namespace

TEST(Models, FactoryAndValidation) {
  for (const auto& id : kNeural) EXPECT_EQ(make_model(small_config(id))->id(), id);
  EXPECT_EQ(make_model(small_config("hawkes"))->id(), "hawkes");
  try {
    make_model(small_config("fullynn"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadConfig);
  }
  ModelConfig bad = small_config("rmtpp");
  bad.hidden_size = 0;
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_EQ(ModelConfig::defaults_for("nhp_lite", 3).hidden_size, 64);
  EXPECT_EQ(ModelConfig::defaults_for("rmtpp", 3).hidden_size, 32);
}

TEST(Models, TypeOutOfRange) {
  const auto batch = pad_batch({seq_of({0.5}, {1}, 1.0)}, 2);
  PaddedBatch broken = batch;
  broken.types[0] = 5;
  for (const auto& id : kNeural) {
    auto m = make_model(small_config(id));
    try {
      m->forward(broken);
      FAIL() << id;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::TypeOutOfRange) << id;
    }
  }
}

TEST(Models, SampleTimeBeforeAnchor) {
  const auto batch = pad_batch({seq_of({0.5, 1.0}, {1, 0}, 2.0)}, 2);
  for (const auto& id : kNeural) {
    auto m = make_model(small_config(id));
    const auto st = m->forward(batch);
    const std::vector<double> early{0.7};
    try {
      m->intensities_at(st, batch, 2, early);
      FAIL() << id;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::SampleTimeBeforeAnchor) << id;
    }
  }
}

TEST(Models, Causality) {
  const auto base = toy_sequences()[2];
  for (const auto& id : kNeural) {
    SCOPED_TRACE(id);
    auto m = make_model(small_config(id));
    for (std::size_t j = 0; j < base.size(); ++j) {
      EventSequence changed = base;
      changed.types[j] = 1 - changed.types[j];
      changed.times[j] = j + 1 < base.size() ? 0.5 * (base.times[j] + base.times[j + 1]) : base.times[j] + 0.1;
      const auto b1 = pad_batch({base}, 2), b2 = pad_batch({changed}, 2);
      const auto s1 = m->forward(b1), s2 = m->forward(b2);
      // anchors 0..j have seen only events before j
      for (std::size_t a = 0; a <= j; ++a) {
        EXPECT_EQ(row(s1.hidden[a], 0), row(s2.hidden[a], 0)) << id << " j=" << j << " a=" << a;
        const double lo = a == 0 ? 0.0 : base.times[a - 1];
        const std::vector<double> t{lo + 0.5 * (std::min(base.times[j], changed.times[j]) - lo)};
        const auto l1 = m->intensities_at(s1, b1, a, t), l2 = m->intensities_at(s2, b2, a, t);
        EXPECT_EQ(std::vector<double>(l1.values().begin(), l1.values().end()),
                  std::vector<double>(l2.values().begin(), l2.values().end()))
            << id << " j=" << j << " a=" << a;
      }
    }
  }
}

TEST(Models, IdenticalRowsGiveIdenticalStates) {
  const auto s = toy_sequences()[0];
  const auto batch = pad_batch({s, s}, 2);
  for (const auto& id : kNeural) {
    auto m = make_model(small_config(id));
    const auto st = m->forward(batch);
    for (std::size_t a = 0; a < st.num_anchors; ++a) EXPECT_EQ(row(st.hidden[a], 0), row(st.hidden[a], 1)) << id;
  }
}

TEST(Models, PaddingDoesNotChangeOutputs) {
  const auto seqs = toy_sequences();
  const auto alone = pad_batch({seqs[1]}, 2);
  const auto padded = pad_batch({seqs[1], seqs[2]}, 2);
  for (const auto& id : kNeural) {
    auto m = make_model(small_config(id));
    const auto s1 = m->forward(alone), s2 = m->forward(padded);
    for (std::size_t a = 0; a <= seqs[1].size(); ++a) {
      const auto r1 = row(s1.hidden[a], 0), r2 = row(s2.hidden[a], 0);
      for (std::size_t i = 0; i < r1.size(); ++i) EXPECT_NEAR(r1[i], r2[i], 1e-14) << id;
    }
    // analytic parts of the loss are layout-free; compare with frozen equal grids
    LossOptions o;
    o.training = false;
    o.mc.samples_per_event_eval = 4;
    o.mc.stratified = true;
    const double ll1 = m->loglike_loss(alone, o).seq_loglik[0];
    const double ll2 = m->loglike_loss(padded, o).seq_loglik[0];
    if (!m->is_intensity_based() || m->has_analytic_compensator()) EXPECT_NEAR(ll1, ll2, 1e-12) << id;
  }
}

TEST(Models, IntensitiesArePositiveAndFinite) {
  Rng rng = make_rng(3, {});
  const auto batch = pad_batch(toy_sequences(), 2);
  for (const auto& id : kNeural) {
    SCOPED_TRACE(id);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto m = make_model(small_config(id, seed));
      const auto st = m->forward(batch);
      for (std::size_t a = 0; a < st.num_anchors; ++a) {
        std::vector<double> t(batch.batch_size * 4);
        for (std::size_t b = 0; b < batch.batch_size; ++b) {
          const double lo = batch.anchor_time(b, std::min(a, batch.seq_lens[b]));
          for (std::size_t s = 0; s < 4; ++s) t[b * 4 + s] = lo + 1e-9 + 5.0 * uniform01(rng);
        }
        const auto lam = m->intensities_at(st, batch, a, t, 4);
        for (double v : lam.values()) {
          EXPECT_GT(v, 0.0) << id;
          EXPECT_TRUE(std::isfinite(v)) << id;
        }
      }
    }
  }
}

TEST(Models, ComputeIntensitiesAtSampleTimesShape) {
  const auto batch = pad_batch(toy_sequences(), 2);
  auto m = make_model(small_config("nhp_lite"));
  const std::size_t A = batch.max_len + 1, S = 3;
  std::vector<double> times(batch.batch_size * A * S);
  for (std::size_t b = 0; b < batch.batch_size; ++b)
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t s = 0; s < S; ++s)
        times[(b * A + a) * S + s] = batch.anchor_time(b, std::min(a, batch.seq_lens[b])) + 0.1 * (s + 1);
  const auto out = compute_intensities_at_sample_times(*m, batch, times, S);
  EXPECT_EQ(out.size(), batch.batch_size * A * S * 2);
  const auto st = m->forward(batch);
  const std::vector<double> probe(batch.batch_size, 0.0);
  std::vector<double> t1(batch.batch_size);
  for (std::size_t b = 0; b < batch.batch_size; ++b) t1[b] = times[(b * A + 1) * S + 2];
  const auto direct = m->intensities_at(st, batch, 1, t1);
  for (std::size_t b = 0; b < batch.batch_size; ++b)
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(out[((b * A + 1) * S + 2) * 2 + k], direct.at(b, k), 1e-14);
}

TEST(NhpLite, ZeroElapsedGivesPostUpdateState) {
  const auto batch = pad_batch(toy_sequences(), 2);
  auto m = make_model(small_config("nhp_lite"));
  auto* nhp = dynamic_cast<NhpLiteModel*>(m.get());
  const auto st = m->forward(batch);
  for (std::size_t a = 0; a < st.num_anchors; ++a) {
    std::vector<double> t(batch.batch_size);
    for (std::size_t b = 0; b < batch.batch_size; ++b) t[b] = batch.anchor_time(b, std::min(a, batch.seq_lens[b]));
    const auto h = nhp->decayed_state(st, batch, a, t);
    EXPECT_EQ(std::vector<double>(h.values().begin(), h.values().end()),
              std::vector<double>(st.hidden[a].values().begin(), st.hidden[a].values().end()));
  }
}

TEST(NhpLite, IntensityApproachesDecayLimit) {
  const auto batch = pad_batch({toy_sequences()[0]}, 2);
  auto m = make_model(small_config("nhp_lite"));
  auto* nhp = dynamic_cast<NhpLiteModel*>(m.get());
  const auto st = m->forward(batch);
  const std::vector<double> far{1e4};
  const auto h = nhp->decayed_state(st, batch, 3, far);
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(h.values()[i], st.target[3].values()[i], 1e-12);
  const auto l1 = m->intensities_at(st, batch, 3, far);
  const auto l2 = m->intensities_at(st, batch, 3, std::vector<double>{1e5});
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(l1.values()[k], l2.values()[k], 1e-12);
}

TEST(Rmtpp, ZeroSlopeGivesConstantIntensity) {
  const auto batch = pad_batch({toy_sequences()[0]}, 2);
  auto m = make_model(small_config("rmtpp"));
  for (double v : m->params().get("head.w").values()) ASSERT_EQ(v, 0.0);
  const auto st = m->forward(batch);
  const auto l1 = m->intensities_at(st, batch, 1, std::vector<double>{0.31});
  const auto l2 = m->intensities_at(st, batch, 1, std::vector<double>{7.0});
  EXPECT_EQ(std::vector<double>(l1.values().begin(), l1.values().end()),
            std::vector<double>(l2.values().begin(), l2.values().end()));
}

TEST(Rmtpp, ClosedFormMatchesMonteCarlo) {
  const auto batch = pad_batch(toy_sequences(), 2);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto m = make_model(small_config("rmtpp", seed));
    Rng rng = make_rng(seed, {9});
    auto w = m->params().get("head.w");
    for (double& v : w.mutable_values()) v = -1.5 + 3.0 * uniform01(rng);
    LossOptions exact;
    exact.training = false;
    LossOptions mc = exact;
    mc.prefer_analytic = false;
    mc.mc.samples_per_event_eval = 400;
    mc.sample_seed = seed;
    const auto a = m->loglike_loss(batch, exact), b = m->loglike_loss(batch, mc);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a.seq_loglik[i], b.seq_loglik[i], 1e-3) << seed;
  }
}

TEST(Iftpp, SingleComponentIsLogNormal) {
  ModelConfig cfg = small_config("iftpp");
  cfg.num_mixtures = 1;
  auto m = make_model(cfg);
  auto* ift = dynamic_cast<IftppModel*>(m.get());
  const auto seqs = toy_sequences();
  const auto batch = pad_batch(seqs, 2);
  const auto st = m->forward(batch);
  const auto res = m->loglike_loss(batch, LossOptions{});
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    double expected = 0.0, prev = 0.0;
    for (std::size_t i = 0; i <= seqs[b].size(); ++i) {
      const auto mix = ift->mixture(st, i, b);
      ASSERT_EQ(mix.means.size(), 1u);
      const double mu = mix.means[0], sigma = std::exp(mix.log_scales[0]);
      const double t = i < seqs[b].size() ? seqs[b].times[i] : seqs[b].t_end;
      const double tau = t - prev, z = (std::log(tau) - mu) / sigma;
      if (i < seqs[b].size()) {
        expected += -std::log(tau * sigma * std::sqrt(2.0 * M_PI)) - 0.5 * z * z;
        EXPECT_NEAR(IftppModel::log_density(mix, tau), -std::log(tau * sigma * std::sqrt(2.0 * M_PI)) - 0.5 * z * z,
                    1e-12);
      } else {
        expected += std::log(0.5 * std::erfc(z / std::sqrt(2.0)));
      }
      prev = t;
    }
    EXPECT_NEAR(res.time_loglik[b], expected, 1e-10);
    // type part is a categorical log-probability per event
    EXPECT_LT(res.type_loglik[b], 0.0);
    EXPECT_GT(res.type_loglik[b], -50.0);
    EXPECT_NEAR(res.seq_loglik[b], res.time_loglik[b] + res.type_loglik[b], 1e-12);
  }
}

TEST(Iftpp, DensityIntegratesToOne) {
  using boost::math::quadrature::gauss_kronrod;
  Rng rng = make_rng(21, {});
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig cfg = small_config("iftpp", 100 + trial);
    cfg.num_mixtures = 1 + trial % 5;
    auto m = make_model(cfg);
    auto* ift = dynamic_cast<IftppModel*>(m.get());
    for (auto& p : m->params().items()) {
      auto t = p.tensor;
      for (double& v : t.mutable_values()) v += 0.5 * (uniform01(rng) - 0.5);
    }
    const auto batch = pad_batch({toy_sequences()[trial % 3]}, 2);
    const auto st = m->forward(batch);
    const auto mix = ift->mixture(st, batch.seq_lens[0], 0);
    // integrate over y = log tau, density p(e^y) e^y
    auto f = [&](double y) { return std::exp(IftppModel::log_density(mix, std::exp(y)) + y); };
    double lo = 1e300, hi = -1e300;
    for (std::size_t j = 0; j < mix.means.size(); ++j) {
      lo = std::min(lo, mix.means[j] - 40.0 * std::exp(mix.log_scales[j]));
      hi = std::max(hi, mix.means[j] + 40.0 * std::exp(mix.log_scales[j]));
    }
    const double total = gauss_kronrod<double, 61>::integrate(f, lo, hi, 20, 1e-12);
    EXPECT_NEAR(total, 1.0, 1e-4) << "trial " << trial;
  }
}

TEST(Odetpp, FourthOrderStepConvergence) {
  const auto batch = pad_batch({seq_of({1.5, 3.5}, {0, 1}, 6.0), seq_of({2.5}, {1}, 5.0)}, 2);
  ModelConfig cfg = small_config("odetpp", 5);
  cfg.hidden_size = 6;
  auto m = make_model(cfg);
  auto* ode = dynamic_cast<OdeTppModel*>(m.get());
  // stronger field so the truncation error is visible above round-off
  for (const char* name : {"field.w1", "field.w2"}) {
    auto t = m->params().get(name);
    for (double& v : t.mutable_values()) v *= 2.0;
  }
  Rng rng = make_rng(1, {});
  const SampleGrid grid = draw_sample_grid(batch, 5, rng);
  auto nll = [&](int steps) {
    ode->set_ode_steps(steps);
    return m->loglike_loss(batch, frozen_options(grid)).nll.item();
  };
  const double n1 = nll(8), n2 = nll(16), n4 = nll(32), n8 = nll(64);
  const double d1 = std::abs(n1 - n2), d2 = std::abs(n2 - n4), d3 = std::abs(n4 - n8);
  ASSERT_GT(d2, 1e-11);
  EXPECT_GT(d1 / d2, 10.0);
  EXPECT_LT(d1 / d2, 24.0);
  EXPECT_GT(d2 / d3, 10.0);
  EXPECT_LT(d2 / d3, 24.0);
}

TEST(Models, GradientsMatchFiniteDifferences) {
  const auto batch = pad_batch(toy_sequences(), 2);
  Rng rng = make_rng(2, {});
  const SampleGrid grid = draw_sample_grid(batch, 3, rng);
  for (const auto& id : kNeural) {
    auto m = make_model(small_config(id));
    if (id == "rmtpp") {
      auto w = m->params().get("head.w");
      for (double& v : w.mutable_values()) v = -0.3;
    }
    const LossOptions o = frozen_options(grid);
    auto f = [&] { return m->loglike_loss(batch, o).nll; };
    const auto rep = ad::grad_check(f, m->params().tensors(), 1e-5, 1e-4);
    EXPECT_TRUE(rep.passed) << id << " max rel " << rep.max_rel_error;
    EXPECT_GT(rep.entries.size(), 10u);
  }
}

TEST(Hawkes, ModelMatchesClosedForm) {
  HawkesParams p;
  p.num_types = 2;
  p.mu = {0.2, 0.4};
  p.alpha = {0.3, 0.1, 0.2, 0.25};
  p.beta = {1.0, 2.0, 0.5, 1.5};
  ModelConfig cfg = small_config("hawkes");
  HawkesModel m(cfg, p);
  const auto seqs = toy_sequences();
  const auto res = m.loglike_loss(pad_batch(seqs, 2), LossOptions{});
  for (std::size_t b = 0; b < seqs.size(); ++b) EXPECT_NEAR(res.seq_loglik[b], hawkes_loglik(p, seqs[b]), 1e-12);
  const auto back = m.hawkes_params();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(back.alpha[i], p.alpha[i], 1e-15);
  auto f = [&] { return m.loglike_loss(pad_batch(seqs, 2), LossOptions{}).nll; };
  EXPECT_TRUE(ad::grad_check(f, m.params().tensors(), 1e-5, 1e-5).passed);
}

TEST(ModelSource, AgreesWithBatchIntensities) {
  const auto s = toy_sequences()[2];
  for (const auto& id : {"rmtpp", "nhp_lite", "odetpp"}) {
    auto m = make_model(small_config(id));
    const auto batch = pad_batch({s}, 2);
    const auto st = m->forward(batch);
    ModelSource src(*m, s, 2);
    EXPECT_EQ(src.anchor_time(), s.times[1]);
    const double t = s.times[1] + 0.2;
    const auto direct = m->intensities_at(st, batch, 2, std::vector<double>{t});
    const auto via = src.intensities_at(t);
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(via[k], direct.at(0, k), 1e-12) << id;
    auto clone = src.clone();
    clone->observe(s.times[2], s.types[2]);
    const auto after = clone->intensities_at(s.times[2] + 0.1);
    const auto ref = m->intensities_at(st, batch, 3, std::vector<double>{s.times[2] + 0.1});
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(after[k], ref.at(0, k), 1e-12) << id;
    ThinningConfig cfg;
    const auto bound = src.upper_bound(src.anchor_time(), cfg);
    EXPECT_FALSE(bound.exact);
    EXPECT_GT(bound.rate, via[0] + via[1]);
  }
}

TEST(Checkpoint, RoundTrip) {
  const std::filesystem::path dir = std::filesystem::path(TPP_TEST_TMP) / "ckpt";
  std::filesystem::create_directories(dir);
  const auto batch = pad_batch(toy_sequences(), 2);
  for (const auto& id : kNeural) {
    auto m = make_model(small_config(id, 77));
    save_checkpoint(*m, dir / id, 12);
    const auto info = read_checkpoint_manifest(dir / id);
    EXPECT_EQ(info.step, 12u);
    EXPECT_EQ(info.num_params, m->params().total_size());
    EXPECT_EQ(std::filesystem::file_size(dir / (id + ".bin")), 8 * m->params().total_size());
    auto loaded = load_checkpoint(dir / id);
    EXPECT_EQ(loaded->params().flatten(), m->params().flatten());
    LossOptions o;
    o.training = false;
    EXPECT_EQ(loaded->loglike_loss(batch, o).seq_loglik, m->loglike_loss(batch, o).seq_loglik);
    auto other = make_model(small_config(id == "rmtpp" ? "nhp_lite" : "rmtpp"));
    try {
      load_checkpoint_into(*other, dir / id);
      FAIL() << id;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::IncompatibleCheckpoint);
    }
  }
  std::filesystem::resize_file(dir / "rmtpp.bin", 16);
  EXPECT_THROW(load_checkpoint(dir / "rmtpp"), Error);
}

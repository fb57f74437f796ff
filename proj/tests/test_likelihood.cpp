#include <gtest/gtest.h>

#include <cmath>

#include "tpp/error.hpp"
#include "tpp/hawkes.hpp"
#include "tpp/likelihood.hpp"
#include "tpp/models.hpp"
#include "tpp/stats.hpp"

using namespace tpp;

namespace {

const HawkesParams kSynth = HawkesParams::univariate(0.2, 0.8, 1.0);

std::vector<double> hawkes_mc(const EventSequence& s, std::size_t per_interval, std::uint64_t seed,
                              bool stratified = true) {
  const PaddedBatch batch = pad_batch({s}, 1);
  Rng rng = make_rng(seed, {});
  const SampleGrid grid = draw_sample_grid(batch, per_interval, rng, stratified);
  // hawkes_intensity wants history strictly before t
  auto total_before = [&](std::size_t, double t) {
    EventSequence h;
    for (std::size_t i = 0; i < s.size() && s.times[i] < t; ++i) {
      h.times.push_back(s.times[i]);
      h.types.push_back(s.types[i]);
    }
    double v = 0.0;
    for (double x : hawkes_intensity(kSynth, h, t)) v += x;
    return v;
  };
  return mc_integral(total_before, batch, grid);
}

EventSequence fifty_event_sequence() {
  for (std::uint64_t seed = 0;; ++seed) {
    EventSequence s = generate_hawkes(kSynth, 100.0, 1, seed)[0];
    if (s.size() >= 50) return s.prefix(50);
  }
}

}  // namespace

TEST(SampleGrid, PointsInsideIntervals) {
  EventSequence s;
  s.times = {0.5, 1.0, 3.0};
  s.types = {0, 0, 0};
  s.t_end = 5.0;
  EventSequence shorter;
  shorter.times = {2.0};
  shorter.types = {0};
  shorter.t_end = 2.5;
  const PaddedBatch batch = pad_batch({s, shorter}, 1);
  Rng rng = make_rng(1, {});
  const SampleGrid g = draw_sample_grid(batch, 4, rng);
  EXPECT_EQ(g.num_anchors, 4u);
  double total = 0.0;
  for (std::size_t a = 0; a < g.num_anchors; ++a) {
    for (std::size_t b = 0; b < 2; ++b) {
      const double lo = batch.anchor_time(b, a), len = g.length(a, b);
      total += b == 0 ? len : 0.0;
      for (std::size_t k = 0; k < 4; ++k) {
        if (len > 0) {
          EXPECT_GT(g.time(a, b, k), lo);
          EXPECT_LE(g.time(a, b, k), lo + len);
        }
      }
    }
  }
  EXPECT_DOUBLE_EQ(total, 5.0);
  EXPECT_EQ(g.length(3, 1), 0.0);
}

TEST(McIntegral, ConstantIntensityIsExact) {
  EventSequence s;
  s.times = {0.7, 2.2, 4.1};
  s.types = {0, 0, 0};
  s.t_end = 5.0;
  const PaddedBatch batch = pad_batch({s}, 1);
  for (std::size_t m : {1u, 3u, 10u}) {
    Rng rng = make_rng(m, {});
    const auto est = mc_integral([](std::size_t, double) { return 2.0; }, batch, draw_sample_grid(batch, m, rng));
    EXPECT_NEAR(est[0], 10.0, 1e-12);
  }
}

TEST(McIntegral, HawkesWithinOnePercent) {
  const EventSequence s = fifty_event_sequence();
  const double exact = hawkes_compensator(kSynth, s);
  const double est = hawkes_mc(s, 10, 3)[0];
  EXPECT_NEAR(est, exact, 0.01 * exact);
}

TEST(McIntegral, UnbiasedOverReseeds) {
  const EventSequence s = fifty_event_sequence();
  const double exact = hawkes_compensator(kSynth, s);
  std::vector<double> ests;
  for (std::uint64_t r = 0; r < 400; ++r) ests.push_back(hawkes_mc(s, 10, 1000 + r)[0]);
  const auto m = stats::moments(ests);
  EXPECT_LE(std::abs(m.mean - exact), 3.0 * m.std_error()) << m.mean << " vs " << exact;
}

TEST(McIntegral, VarianceScalesInverselyWithSamples) {
  const EventSequence s = fifty_event_sequence();
  std::vector<double> v1, v2;
  for (std::uint64_t r = 0; r < 2000; ++r) {
    v1.push_back(hawkes_mc(s, 2, 5000 + r, false)[0]);
    v2.push_back(hawkes_mc(s, 4, 9000 + r, false)[0]);
  }
  const double ratio = stats::moments(v1).variance / stats::moments(v2).variance;
  // F(1999,1999) sd of the ratio is about 2*sqrt(2/2000) ~ 0.063
  EXPECT_NEAR(ratio, 2.0, 4.0 * 2.0 * std::sqrt(2.0 / 2000.0));
}

TEST(EvalLoglik, HawkesTrueParamsNearClosedForm) {
  const auto seqs = generate_hawkes(kSynth, 100.0, 40, 31);
  Dataset ds;
  ds.sequences = seqs;
  ds.num_types = 1;
  ModelConfig cfg;
  cfg.model_id = "hawkes";
  cfg.num_event_types = 1;
  auto model = make_model(cfg);
  auto* hawkes = dynamic_cast<HawkesModel*>(model.get());
  ASSERT_NE(hawkes, nullptr);
  hawkes->set_hawkes_params(kSynth);
  double closed = 0.0;
  std::size_t n = 0;
  for (const auto& s : seqs) {
    closed += hawkes_loglik(kSynth, s);
    n += s.size();
  }
  MCConfig mc;
  mc.rng_seed = 4;
  const auto rep = eval_loglik(*model, ds, mc, 16);
  EXPECT_EQ(rep.num_events, n);
  EXPECT_NEAR(rep.per_event(), closed / double(n), 0.005);
  EXPECT_NEAR(rep.total_loglik, rep.time_loglik + rep.type_loglik, 1e-9);
}

TEST(EvalLoglik, EmptyDataset) {
  ModelConfig cfg;
  cfg.model_id = "hawkes";
  cfg.num_event_types = 1;
  auto model = make_model(cfg);
  try {
    eval_loglik(*model, Dataset{}, MCConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyDataset);
  }
}

TEST(EvalLoglik, IftppIgnoresMc) {
  ModelConfig cfg;
  cfg.model_id = "iftpp";
  cfg.num_event_types = 2;
  cfg.hidden_size = 8;
  cfg.time_emb_size = 4;
  cfg.num_layers = 1;
  cfg.num_mixtures = 3;
  auto model = make_model(cfg);
  Dataset ds;
  ds.num_types = 2;
  HawkesParams p;
  p.num_types = 2;
  p.mu = {0.3, 0.3};
  p.alpha = {0.2, 0.1, 0.1, 0.2};
  p.beta = {1, 1, 1, 1};
  ds.sequences = generate_hawkes(p, 30.0, 5, 2);
  MCConfig a, b;
  a.rng_seed = 1;
  b.rng_seed = 2;
  b.samples_per_event_eval = 3;
  EXPECT_EQ(eval_loglik(*model, ds, a).total_loglik, eval_loglik(*model, ds, b).total_loglik);
}

TEST(McConfig, Validation) {
  MCConfig cfg;
  cfg.samples_per_event_eval = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(McIntegral, StratifiedBeatsIidAtEqualCost) {
  const EventSequence s = fifty_event_sequence();
  std::vector<double> iid, strat;
  for (std::uint64_t r = 0; r < 300; ++r) {
    iid.push_back(hawkes_mc(s, 10, 100 + r, false)[0]);
    strat.push_back(hawkes_mc(s, 10, 100 + r, true)[0]);
  }
  EXPECT_LT(stats::moments(strat).variance, 0.1 * stats::moments(iid).variance);
}

TEST(McIntegral, StratifiedWithinOnePercentAcrossSequences) {
  for (const auto& s : generate_hawkes(kSynth, 100.0, 50, 12)) {
    const double exact = hawkes_compensator(kSynth, s);
    EXPECT_NEAR(hawkes_mc(s, 10, 5)[0],
                exact, 0.01 * exact);
  }
}

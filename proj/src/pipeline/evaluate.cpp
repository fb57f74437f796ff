#include <cmath>
#include <limits>

#include "tpp/error.hpp"
#include "tpp/json_io.hpp"
#include "tpp/pipeline.hpp"

namespace tpp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::size_t eval_count(const Dataset& data, const RunnerConfig& cfg) {
  const std::size_t n = data.sequences.size();
  return cfg.max_eval_sequences ? std::min(n, cfg.max_eval_sequences) : n;
}

ThinningConfig thinning_for(const RunnerConfig& cfg, const Dataset& data) {
  ThinningConfig t = cfg.thinning;
  if (cfg.expected_dtime_from_data) {
    const double m = data.mean_dtime();
    if (m > 0.0 && std::isfinite(m)) t.expected_dtime = m;
  }
  return t;
}

}  // namespace

NextEventResult evaluate_next_event(const TppModel& model, const Dataset& data, const RunnerConfig& cfg,
                                    std::vector<PredictionRecord>* records) {
  if (!model.is_intensity_based()) {
    throw Error(ErrorCode::NotSupported, model.id() + " does not support thinning-based prediction");
  }
  const ThinningConfig thin = thinning_for(cfg, data);
  std::vector<double> pred_t, true_t;
  std::vector<int> pred_k, true_k;
  std::vector<std::uint8_t> time_mask;
  NextEventResult res;
  std::size_t draws = 0;
  double censored = 0.0;
  ad::NoGradGuard guard;
  for (std::size_t s = 0; s < eval_count(data, cfg); ++s) {
    const EventSequence& seq = data.sequences[s];
    if (seq.empty()) continue;
    auto batch = std::make_shared<const PaddedBatch>(pad_batch({seq}, model.num_types()));
    auto state = std::make_shared<const ModelState>(model.forward(*batch));
    for (std::size_t a = 0; a < seq.size(); ++a) {
      const ModelSource src(model, batch, state, a);
      PredictionRecord rec{s, a, seq.times[a], 0.0, seq.types[a], 0};
      bool ok = true;
      try {
        const TimePrediction tp = mbr_predict_time(src, thin, s, a);
        rec.pred_time = tp.time;
        censored += tp.censor_rate * static_cast<double>(thin.num_samples);
        res.bound_violations += tp.bound_violations;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::AllDrawsCensored) throw;
        ok = false;
        censored += static_cast<double>(thin.num_samples);
        rec.pred_time = std::numeric_limits<double>::quiet_NaN();
      }
      draws += thin.num_samples;
      rec.pred_type = mbr_predict_type(src, seq.times[a]);
      pred_t.push_back(ok ? rec.pred_time : 0.0);
      true_t.push_back(rec.true_time);
      time_mask.push_back(ok ? 1 : 0);
      pred_k.push_back(rec.pred_type);
      true_k.push_back(rec.true_type);
      if (records) records->push_back(rec);
    }
  }
  res.num_events = true_k.size();
  res.rmse = rmse_time(pred_t, true_t, time_mask);
  res.error_rate = error_rate_type(pred_k, true_k);
  res.censor_rate = draws ? censored / static_cast<double>(draws) : 0.0;
  return res;
}

std::vector<HorizonResult> evaluate_horizons(const TppModel& model, const Dataset& data, const RunnerConfig& cfg) {
  if (!model.is_intensity_based()) {
    throw Error(ErrorCode::NotSupported, model.id() + " does not support thinning-based prediction");
  }
  const ThinningConfig thin = thinning_for(cfg, data);
  std::vector<HorizonResult> out;
  ad::NoGradGuard guard;
  for (std::size_t h : cfg.horizons) {
    HorizonResult r;
    r.num_events = h;
    double total = 0.0;
    std::size_t cens = 0;
    for (std::size_t s = 0; s < eval_count(data, cfg); ++s) {
      const EventSequence& seq = data.sequences[s];
      if (seq.size() < h || seq.empty()) continue;
      // Window (T, T'] holds the last h events: T = t_{I-h}, T' = t_I.
      const std::size_t cut = seq.size() - h;
      const double t_lo = cut == 0 ? 0.0 : seq.times[cut - 1];
      const double t_hi = seq.times.back();
      EventSequence truth;
      truth.times.assign(seq.times.begin() + static_cast<std::ptrdiff_t>(cut), seq.times.end());
      truth.types.assign(seq.types.begin() + static_cast<std::ptrdiff_t>(cut), seq.types.end());
      truth.t_end = t_hi;
      const ModelSource src(model, seq, cut, t_lo);
      const Rollout roll = rollout_horizon(src, t_hi, thin, derive_seed(s, {h}));
      if (roll.censored) ++cens;
      total += otd(roll.events, truth, cfg.otd);
      ++r.num_sequences;
    }
    r.mean_otd = r.num_sequences ? total / static_cast<double>(r.num_sequences) : 0.0;
    r.censor_rate = r.num_sequences ? static_cast<double>(cens) / static_cast<double>(r.num_sequences) : 0.0;
    out.push_back(r);
  }
  return out;
}

std::unique_ptr<TppModel> load_compatible_checkpoint(const RunnerConfig& cfg, const fs::path& prefix) {
  const CheckpointInfo info = read_checkpoint_manifest(prefix);
  const ModelConfig& m = info.config;
  const ModelConfig& want = cfg.model;
  const bool same = m.model_id == want.model_id && m.hidden_size == want.hidden_size &&
                    m.time_emb_size == want.time_emb_size && m.num_layers == want.num_layers &&
                    m.num_mixtures == want.num_mixtures &&
                    (want.num_event_types < 1 || m.num_event_types == want.num_event_types) &&
                    (!cfg.num_types || m.num_event_types == *cfg.num_types);
  if (!same) {
    throw Error(ErrorCode::IncompatibleCheckpoint,
                "checkpoint " + prefix.string() + " was written for a different model configuration");
  }
  auto model = make_model(m);
  if (m.model_id == "odetpp") static_cast<OdeTppModel&>(*model).set_ode_steps(want.ode_steps);
  load_checkpoint_into(*model, prefix);
  return model;
}

json evaluate(const RunnerConfig& cfg, const TppModel& model, const std::vector<std::string>& tasks) {
  const DatasetBundle data = load_datasets(cfg);
  if (model.num_types() != data.test.num_types) {
    throw Error(ErrorCode::IncompatibleCheckpoint, "model and test data disagree on the number of event types");
  }
  json metrics = json::object();
  json censoring = json::object();
  for (const auto& task : tasks) {
    if (task == "loglik") {
      const LoglikReport r = eval_loglik(model, data.test, cfg.mc, cfg.batch_size);
      metrics["loglik"] = {{"per_event", r.per_event()},
                           {"time_per_event", r.time_per_event()},
                           {"type_per_event", r.type_per_event()},
                           {"num_events", r.num_events},
                           {"num_sequences", r.num_sequences}};
    } else if (task == "next_event") {
      if (!model.is_intensity_based()) {
        metrics["next_event"] = {{"status", "not_applicable"}};
        continue;
      }
      const NextEventResult r = evaluate_next_event(model, data.test, cfg);
      metrics["next_event"] = {{"rmse", r.rmse},
                               {"error_rate", r.error_rate},
                               {"num_events", r.num_events},
                               {"bound_violations", r.bound_violations}};
      censoring["next_event"] = r.censor_rate;
    } else if (task == "horizon") {
      if (!model.is_intensity_based()) {
        metrics["horizon"] = {{"status", "not_applicable"}};
        continue;
      }
      json arr = json::array();
      json cens = json::array();
      for (const auto& h : evaluate_horizons(model, data.test, cfg)) {
        arr.push_back({{"num_events", h.num_events}, {"mean_otd", h.mean_otd}, {"num_sequences", h.num_sequences}});
        cens.push_back({{"num_events", h.num_events}, {"censor_rate", h.censor_rate}});
      }
      metrics["horizon"] = arr;
      censoring["horizon"] = cens;
    } else {
      throw Error(ErrorCode::BadConfig, "unknown task '" + task + "'");
    }
  }
  return json{{"experiment_id", cfg.experiment_id},
              {"model_id", model.id()},
              {"config_hash", config_hash(cfg)},
              {"dataset_hashes",
               {{"train", git_blob_hash(cfg.train_path)},
                {"dev", git_blob_hash(cfg.dev_path)},
                {"test", git_blob_hash(cfg.test_path)}}},
              {"seed", cfg.seed},
              {"seeds", {{"model", model.config().seed}, {"mc", cfg.mc.rng_seed}, {"thinning", cfg.thinning.rng_seed}}},
              {"optimizer",
               {{"name", "adam"}, {"lr", cfg.optimizer.lr}, {"beta1", cfg.optimizer.beta1},
                {"beta2", cfg.optimizer.beta2}, {"eps", cfg.optimizer.eps}}},
              {"otd_delete_cost", cfg.otd.delete_cost},
              {"metrics", metrics},
              {"censoring", censoring},
              {"config", to_json(cfg)}};
}

}  // namespace tpp

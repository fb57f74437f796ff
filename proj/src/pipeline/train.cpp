#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "tpp/error.hpp"
#include "tpp/json_io.hpp"
#include "tpp/pipeline.hpp"

namespace tpp {

namespace fs = std::filesystem;
using nlohmann::json;

Adam::Adam(ParameterSet& params, OptimizerConfig cfg) : params_(&params), cfg_(cfg) {
  for (const auto& it : params.items()) {
    m_.emplace_back(it.tensor.size(), 0.0);
    v_.emplace_back(it.tensor.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const auto& items = params_->items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    ad::Tensor p = items[i].tensor;
    const auto g = p.grad();
    auto val = p.mutable_values();
    for (std::size_t j = 0; j < val.size(); ++j) {
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g[j];
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      val[j] -= cfg_.lr * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + cfg_.eps);
    }
  }
  params_->zero_grad();
}

DatasetBundle load_datasets(const RunnerConfig& cfg) {
  auto load = [&](const fs::path& p, Split s) {
    DatasetSchema schema;
    schema.num_types = cfg.num_types;
    schema.split = s;
    return load_dataset(p, schema);
  };
  DatasetBundle b{load(cfg.train_path, Split::Train), load(cfg.dev_path, Split::Dev), load(cfg.test_path, Split::Test)};
  const int k = std::max({b.train.num_types, b.dev.num_types, b.test.num_types});
  b.train.num_types = b.dev.num_types = b.test.num_types = k;
  return b;
}

ModelConfig resolved_model_config(const RunnerConfig& cfg, int num_types) {
  ModelConfig m = cfg.model;
  if (m.num_event_types < 1) m.num_event_types = num_types;
  if (m.num_event_types != num_types) {
    throw Error(ErrorCode::BadConfig, "model.num_event_types=" + std::to_string(m.num_event_types) +
                                          " but the data has " + std::to_string(num_types) + " types");
  }
  m.validate();
  return m;
}

namespace {

// Portable Fisher-Yates so epoch orders do not depend on the standard library.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
  }
  return idx;
}

json epoch_json(const EpochLog& e, const RunnerConfig& cfg) {
  return json{{"epoch", e.epoch},
              {"train_nll", e.train_nll},
              {"dev_loglik", e.dev_loglik},
              {"wall_seconds", e.wall_seconds},
              {"improved", e.improved},
              {"seed", cfg.seed}};
}

}  // namespace

TrainResult train(const RunnerConfig& cfg, TrainOptions opts) {
  cfg.validate();
  const DatasetBundle data = load_datasets(cfg);
  if (data.train.sequences.empty()) throw Error(ErrorCode::EmptyDataset, "training split is empty");
  if (data.dev.sequences.empty()) throw Error(ErrorCode::EmptyDataset, "dev split is empty");
  TrainResult res;
  res.model = opts.initial ? std::move(opts.initial) : make_model(resolved_model_config(cfg, data.train.num_types));
  TppModel& model = *res.model;
  Adam adam(model.params(), cfg.optimizer);

  std::ofstream log_out;
  if (opts.write_outputs) {
    fs::create_directories(cfg.output_dir);
    log_out.open(cfg.output_dir / "training_log.jsonl", std::ios::trunc);
    res.checkpoint = cfg.output_dir / "checkpoint";
  }

  std::vector<double> best_params = model.params().flatten();
  res.best_dev_loglik = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  const std::size_t n = data.train.sequences.size();

  // Non-finite losses and numeric domain failures both mean the run blew up.
  auto diverged = [&](std::size_t epoch, const json& where, const std::string& reason) {
    if (opts.write_outputs) {
      save_checkpoint(model, cfg.output_dir / "diverged_state", adam.steps());
      json info = where;
      info["epoch"] = epoch;
      info["reason"] = reason;
      info["step"] = adam.steps();
      write_json(cfg.output_dir / "diverged_state_info.json", info);
    }
    throw Error(ErrorCode::DivergedLoss, reason + " at epoch " + std::to_string(epoch));
  };
  auto numeric_failure = [](const Error& e) {
    return e.code() == ErrorCode::DomainError || e.code() == ErrorCode::ZeroIntensityAtEvent;
  };

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng = make_rng(cfg.seed, {0x7a1u, epoch});
    const auto order = permutation(n, rng);
    double nll_sum = 0.0;
    std::size_t events = 0;
    for (std::size_t start = 0, bi = 0; start < n; start += cfg.batch_size, ++bi) {
      std::vector<EventSequence> chunk;
      for (std::size_t i = start; i < std::min(n, start + cfg.batch_size); ++i) {
        chunk.push_back(data.train.sequences[order[i]]);
      }
      const PaddedBatch batch = pad_batch(chunk, model.num_types());
      ad::Tape tape;
      ad::TapeScope scope(tape);
      LossOptions lo;
      lo.mc = cfg.mc;
      lo.training = true;
      lo.sample_seed = derive_seed(cfg.mc.rng_seed, {epoch, bi});
      LossResult r;
      try {
        r = model.loglike_loss(batch, lo);
      } catch (const Error& err) {
        if (!numeric_failure(err)) throw;
        diverged(epoch, json{{"batch", bi}}, err.what());
      }
      const double nll = r.nll.item();
      if (!std::isfinite(nll)) {
        diverged(epoch, json{{"batch", bi}, {"nll", std::to_string(nll)}}, "non-finite training loss");
      }
      tape.backward(r.nll);
      adam.step();
      nll_sum += nll * static_cast<double>(r.num_events);
      events += r.num_events;
    }

    EpochLog e;
    e.epoch = epoch;
    e.train_nll = events ? nll_sum / static_cast<double>(events) : 0.0;
    try {
      e.dev_loglik = eval_loglik(model, data.dev, cfg.mc, cfg.batch_size).per_event();
    } catch (const Error& err) {
      if (!numeric_failure(err)) throw;
      diverged(epoch, json{{"split", "dev"}}, err.what());
    }
    if (!std::isfinite(e.dev_loglik)) diverged(epoch, json{{"split", "dev"}}, "non-finite dev log-likelihood");
    e.improved = e.dev_loglik > res.best_dev_loglik;
    if (e.improved) {
      res.best_dev_loglik = e.dev_loglik;
      res.best_epoch = epoch;
      best_params = model.params().flatten();
      since_best = 0;
      if (opts.write_outputs) save_checkpoint(model, res.checkpoint, adam.steps());
    } else {
      ++since_best;
    }
    e.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back(e);
    if (log_out.is_open()) log_out << epoch_json(e, cfg).dump() << '\n' << std::flush;
    if (opts.on_epoch) opts.on_epoch(e);
    if (since_best >= cfg.patience) break;
  }
  model.params().assign(best_params);
  return res;
}

}  // namespace tpp

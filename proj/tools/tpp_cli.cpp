#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "tpp/error.hpp"
#include "tpp/hawkes.hpp"
#include "tpp/json_io.hpp"
#include "tpp/pipeline.hpp"

using namespace tpp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string experiment_id;
  std::optional<std::uint64_t> seed;
  std::string output;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Experiment config (JSON)");
  app->add_option("--experiment-id", c.experiment_id, "Experiment key inside the config");
  app->add_option("--seed", c.seed, "Master seed");
  app->add_option("--output", c.output, "Output directory");
  app->add_option("--set", c.sets, "Dotted override key=value (repeatable)");
}

RunnerConfig resolve(const Common& c) {
  std::vector<std::string> ov = c.sets;
  if (c.seed) ov.push_back("seed=" + std::to_string(*c.seed));
  if (!c.output.empty()) ov.push_back("output_dir=" + json(c.output).dump());
  return load_runner_config(c.config, c.experiment_id, ov);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int run_generate(const std::string& output, std::uint64_t seed, const std::string& params_path, double mu,
                 double alpha, double beta, double t_end, std::size_t n, const std::vector<double>& ratios) {
  HawkesParams p = HawkesParams::univariate(mu, alpha, beta);
  if (!params_path.empty()) {
    std::ifstream in(params_path);
    if (!in) throw Error(ErrorCode::MissingFile, "parameter file not found: " + params_path);
    p = json::parse(in).get<HawkesParams>();
  }
  p.validate();
  const auto seqs = generate_hawkes(p, t_end, n, seed);
  const auto splits = split_dataset(seqs, {ratios[0], ratios[1], ratios[2]}, seed, p.num_types, "hawkes");
  fs::create_directories(output);
  const char* names[] = {"train", "dev", "test"};
  for (int i = 0; i < 3; ++i) write_dataset(fs::path(output) / (std::string(names[i]) + ".jsonl"), splits[i]);
  write_json(fs::path(output) / "generator.json",
             json{{"params", p}, {"t_end", t_end}, {"num_sequences", n}, {"seed", seed}, {"ratios", ratios}});
  std::cout << "wrote " << splits[0].sequences.size() << "/" << splits[1].sequences.size() << "/"
            << splits[2].sequences.size() << " sequences to " << output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal point process benchmark"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "Simulate a Hawkes dataset and split it");
  std::string gen_out = "data/hawkes", gen_params;
  std::uint64_t gen_seed = 0;
  double mu = 0.2, alpha = 0.8, beta = 1.0, t_end = 100.0;
  std::size_t gen_n = 1800;
  std::vector<double> ratios = {4.0 / 6.0, 1.0 / 9.0, 2.0 / 9.0};
  gen->add_option("--output", gen_out, "Output directory");
  gen->add_option("--seed", gen_seed, "Seed");
  gen->add_option("--params", gen_params, "Multivariate parameters (JSON with num_types, mu, alpha, beta)");
  gen->add_option("--mu", mu);
  gen->add_option("--alpha", alpha);
  gen->add_option("--beta", beta);
  gen->add_option("--t-end", t_end);
  gen->add_option("--num-sequences", gen_n);
  gen->add_option("--ratios", ratios, "train dev test fractions")->expected(3);

  Common train_c, eval_c, pred_c, bench_c, grid_c;
  auto* tr = app.add_subcommand("train", "Train a model");
  add_common(tr, train_c);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  add_common(ev, eval_c);
  std::string ev_ckpt, ev_tasks = "loglik,next_event,horizon";
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint prefix (default <output>/checkpoint)");
  ev->add_option("--tasks", ev_tasks, "Comma-separated tasks");

  auto* pr = app.add_subcommand("predict", "Dump next-event predictions per sequence");
  add_common(pr, pred_c);
  std::string pr_ckpt;
  pr->add_option("--checkpoint", pr_ckpt, "Checkpoint prefix (default <output>/checkpoint)");

  auto* be = app.add_subcommand("benchmark", "Train and evaluate a list of models");
  add_common(be, bench_c);
  std::string be_models = "rmtpp,nhp_lite,odetpp,iftpp", be_tasks = "loglik,next_event,horizon";
  be->add_option("--models", be_models, "Comma-separated model ids");
  be->add_option("--tasks", be_tasks, "Comma-separated tasks");

  auto* gs = app.add_subcommand("gridsearch", "Grid search over dotted hyperparameters");
  add_common(gs, grid_c);
  std::vector<std::string> grid_args;
  gs->add_option("--grid", grid_args, "key=v1,v2,... (repeatable)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return run_generate(gen_out, gen_seed, gen_params, mu, alpha, beta, t_end, gen_n, ratios);

    if (*tr) {
      const RunnerConfig cfg = resolve(train_c);
      TrainOptions opts;
      opts.on_epoch = [](const EpochLog& e) {
        std::cout << "epoch " << e.epoch << " train_nll " << e.train_nll << " dev_ll " << e.dev_loglik
                  << (e.improved ? " *" : "") << "\n";
      };
      const TrainResult res = train(cfg, std::move(opts));
      json report = evaluate(cfg, *res.model, {"loglik"});
      report["training"] = {{"epochs", res.log.size()}, {"best_epoch", res.best_epoch},
                            {"best_dev_loglik", res.best_dev_loglik}, {"checkpoint", res.checkpoint.string()}};
      write_json(cfg.output_dir / "results.json", report);
      std::cout << "best dev loglik " << res.best_dev_loglik << " at epoch " << res.best_epoch << "\n";
      return 0;
    }

    if (*ev) {
      const RunnerConfig cfg = resolve(eval_c);
      const fs::path ckpt = ev_ckpt.empty() ? cfg.output_dir / "checkpoint" : fs::path(ev_ckpt);
      const auto model = load_compatible_checkpoint(cfg, ckpt);
      const json report = evaluate(cfg, *model, split_list(ev_tasks));
      write_json(cfg.output_dir / "results.json", report);
      std::cout << report["metrics"].dump(2) << "\n";
      return 0;
    }

    if (*pr) {
      const RunnerConfig cfg = resolve(pred_c);
      const fs::path ckpt = pr_ckpt.empty() ? cfg.output_dir / "checkpoint" : fs::path(pr_ckpt);
      const auto model = load_compatible_checkpoint(cfg, ckpt);
      const DatasetBundle data = load_datasets(cfg);
      std::vector<PredictionRecord> recs;
      const NextEventResult r = evaluate_next_event(*model, data.test, cfg, &recs);
      fs::create_directories(cfg.output_dir);
      std::ofstream out(cfg.output_dir / "predictions.jsonl", std::ios::trunc);
      for (const auto& p : recs) {
        out << json{{"sequence", p.sequence}, {"position", p.position}, {"true_time", p.true_time},
                    {"pred_time", std::isfinite(p.pred_time) ? json(p.pred_time) : json(nullptr)},
                    {"true_type", p.true_type}, {"pred_type", p.pred_type}}
                   .dump()
            << "\n";
      }
      std::cout << "rmse " << r.rmse << " error_rate " << r.error_rate << " over " << r.num_events << " events\n";
      return 0;
    }

    if (*be) {
      const RunnerConfig cfg = resolve(bench_c);
      const auto rows = benchmark(cfg, split_list(be_models), split_list(be_tasks));
      for (const auto& r : rows) {
        std::cout << r.model_id << ": "
                  << (r.report.contains("error") ? r.report["error"].dump() : r.report["metrics"].dump()) << "\n";
      }
      return 0;
    }

    if (*gs) {
      const RunnerConfig cfg = resolve(grid_c);
      GridSpec grid;
      for (const auto& g : grid_args) {
        const auto eq = g.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::BadConfig, "grid entry must be key=v1,v2: " + g);
        auto& vals = grid[g.substr(0, eq)];
        for (const auto& v : split_list(g.substr(eq + 1))) {
          json parsed = json::parse(v, nullptr, false);
          vals.push_back(parsed.is_discarded() ? json(v) : parsed);
        }
      }
      const GridResult res = grid_search(cfg, grid);
      for (const auto& c : res.leaderboard) {
        std::cout << json(c.values).dump() << " dev_ll " << c.dev_loglik << (c.error.empty() ? "" : " " + c.error)
                  << "\n";
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

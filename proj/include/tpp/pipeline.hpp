#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tpp/data.hpp"
#include "tpp/likelihood.hpp"
#include "tpp/metrics.hpp"
#include "tpp/models.hpp"
#include "tpp/sampler.hpp"

namespace tpp {

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct RunnerConfig {
  std::string experiment_id = "default";
  std::filesystem::path train_path, dev_path, test_path;
  std::optional<int> num_types;  // else taken from the dataset metadata
  ModelConfig model;
  OptimizerConfig optimizer;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 20;
  std::size_t patience = 5;
  MCConfig mc;
  ThinningConfig thinning;
  bool expected_dtime_from_data = true;  // unless thinning.expected_dtime is set
  OTDParams otd;
  std::vector<std::size_t> horizons = {5, 10};  // events per long-horizon window
  std::size_t max_eval_sequences = 0;            // prediction tasks only; 0 means all
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs";

  /// Throws BadConfig.
  void validate() const;
};

nlohmann::json to_json(const RunnerConfig& c);
/// Unknown keys are rejected so typos in configs fail loudly.
RunnerConfig runner_config_from_json(const nlohmann::json& j);

/// Applies "a.b.c=value" overrides; values parse as JSON, falling back to strings.
void apply_overrides(nlohmann::json& j, const std::vector<std::string>& overrides);

/// Reads `{"experiments": {id: {...}}}` (or a bare experiment object), applies
/// overrides and validates. Throws MissingFile or BadConfig.
RunnerConfig load_runner_config(const std::filesystem::path& path, const std::string& experiment_id,
                                const std::vector<std::string>& overrides = {});

std::string sha1_hex(const std::string& data);
/// git-style blob hash of a file ("blob <size>\0" prefix).
std::string git_blob_hash(const std::filesystem::path& path);
std::string config_hash(const RunnerConfig& c);

struct EpochLog {
  std::size_t epoch = 0;
  double train_nll = 0.0;
  double dev_loglik = 0.0;  // per event
  double wall_seconds = 0.0;
  bool improved = false;
};

struct TrainResult {
  std::unique_ptr<TppModel> model;  // best-dev parameters
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_dev_loglik = 0.0;
  std::filesystem::path checkpoint;  // prefix; empty when checkpoints are disabled
};

struct TrainOptions {
  bool write_outputs = true;  // training_log.jsonl and checkpoint under output_dir
  std::function<void(const EpochLog&)> on_epoch;
  /// Optional starting model (for example a warm start); otherwise built from the config.
  std::unique_ptr<TppModel> initial;
};

/// Adam on the per-event NLL with early stopping on dev log-likelihood.
/// Throws DivergedLoss after dumping the offending state.
TrainResult train(const RunnerConfig& cfg, TrainOptions opts = {});

/// Plain Adam over a parameter set.
class Adam {
 public:
  Adam(ParameterSet& params, OptimizerConfig cfg);
  void step();
  std::uint64_t steps() const { return t_; }

 private:
  ParameterSet* params_;
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

struct NextEventResult {
  double rmse = 0.0;
  double error_rate = 0.0;
  double censor_rate = 0.0;
  std::size_t num_events = 0;
  std::size_t bound_violations = 0;
};

struct HorizonResult {
  std::size_t num_events = 0;  // window size in events
  double mean_otd = 0.0;
  std::size_t num_sequences = 0;
  double censor_rate = 0.0;
};

struct PredictionRecord {
  std::size_t sequence = 0;
  std::size_t position = 0;  // index of the predicted event
  double true_time = 0.0, pred_time = 0.0;
  int true_type = 0, pred_type = 0;
};

NextEventResult evaluate_next_event(const TppModel& model, const Dataset& data, const RunnerConfig& cfg,
                                    std::vector<PredictionRecord>* records = nullptr);
std::vector<HorizonResult> evaluate_horizons(const TppModel& model, const Dataset& data, const RunnerConfig& cfg);

/// Runs the requested tasks ("loglik", "next_event", "horizon") on the test
/// split and returns a self-describing report.
nlohmann::json evaluate(const RunnerConfig& cfg, const TppModel& model, const std::vector<std::string>& tasks);

/// Checks a checkpoint against the config's model settings. Throws IncompatibleCheckpoint.
std::unique_ptr<TppModel> load_compatible_checkpoint(const RunnerConfig& cfg, const std::filesystem::path& prefix);

/// Dotted hyperparameter path -> candidate values.
using GridSpec = std::map<std::string, std::vector<nlohmann::json>>;

struct GridCell {
  std::map<std::string, nlohmann::json> values;
  double dev_loglik = 0.0;  // -inf when the cell failed
  std::string error;
  std::size_t epochs = 0;
};

struct GridResult {
  std::vector<GridCell> leaderboard;  // best first
  RunnerConfig best;
};

/// Trains every grid point with the shared seed and ranks by dev LL; ties go to
/// the lexicographically smallest hyperparameter values in key order.
GridResult grid_search(const RunnerConfig& base, const GridSpec& grid);
/// Ranking rule used by grid_search.
bool grid_cell_before(const GridCell& a, const GridCell& b);

struct BenchmarkRow {
  std::string model_id;
  nlohmann::json report;
};

/// Train and evaluate each model on the configured data; writes results.json,
/// leaderboard.json and per-figure CSVs under output_dir.
std::vector<BenchmarkRow> benchmark(const RunnerConfig& base, const std::vector<std::string>& model_ids,
                                    const std::vector<std::string>& tasks);

struct DatasetBundle {
  Dataset train, dev, test;
};
DatasetBundle load_datasets(const RunnerConfig& cfg);
/// Model config with K filled in from the data when unset.
ModelConfig resolved_model_config(const RunnerConfig& cfg, int num_types);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace tpp

#include <openssl/sha.h>

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "tpp/error.hpp"
#include "tpp/json_io.hpp"
#include "tpp/pipeline.hpp"

namespace tpp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw Error(ErrorCode::BadConfig, where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw Error(ErrorCode::BadConfig, "unknown key '" + k + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void RunnerConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::BadConfig, m); };
  if (train_path.empty() || dev_path.empty() || test_path.empty()) bad("data.train, data.dev and data.test are required");
  if (!(optimizer.lr >= 0.0) || !(optimizer.eps > 0.0)) bad("optimizer.lr must be >= 0 and eps > 0");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    bad("optimizer betas must lie in [0, 1)");
  }
  if (batch_size == 0) bad("training.batch_size must be >= 1");
  if (max_epochs == 0) bad("training.max_epochs must be >= 1");
  if (patience > max_epochs) bad("training.patience must not exceed max_epochs");
  if (num_types && *num_types < 1) bad("data.num_types must be >= 1");
  if (!(otd.delete_cost >= 0.0)) bad("otd.delete_cost must be >= 0");
  mc.validate();
  thinning.validate();
  ModelConfig m = model;
  if (m.num_event_types < 1) m.num_event_types = 1;
  m.validate();
}

json to_json(const RunnerConfig& c) {
  json data = {{"train", c.train_path.string()}, {"dev", c.dev_path.string()}, {"test", c.test_path.string()}};
  if (c.num_types) data["num_types"] = *c.num_types;
  return json{{"experiment_id", c.experiment_id},
              {"data", data},
              {"model", c.model},
              {"optimizer", {{"lr", c.optimizer.lr}, {"beta1", c.optimizer.beta1}, {"beta2", c.optimizer.beta2},
                             {"eps", c.optimizer.eps}}},
              {"training", {{"batch_size", c.batch_size}, {"max_epochs", c.max_epochs}, {"patience", c.patience}}},
              {"mc", c.mc},
              {"thinning", c.thinning},
              {"otd", c.otd},
              {"horizons", c.horizons},
              {"max_eval_sequences", c.max_eval_sequences},
              {"seed", c.seed},
              {"output_dir", c.output_dir.string()}};
}

RunnerConfig runner_config_from_json(const json& j) {
  RunnerConfig c;
  try {
    check_keys(j, "experiment", {"experiment_id", "data", "model", "optimizer", "training", "mc", "thinning", "otd",
                                 "horizons", "max_eval_sequences", "seed", "output_dir"});
    read(j, "experiment_id", c.experiment_id);
    read(j, "seed", c.seed);
    if (j.contains("data")) {
      const json& d = j.at("data");
      check_keys(d, "data", {"train", "dev", "test", "num_types"});
      if (d.contains("train")) c.train_path = d.at("train").get<std::string>();
      if (d.contains("dev")) c.dev_path = d.at("dev").get<std::string>();
      if (d.contains("test")) c.test_path = d.at("test").get<std::string>();
      if (d.contains("num_types")) c.num_types = d.at("num_types").get<int>();
    }
    if (j.contains("model")) {
      const json& m = j.at("model");
      check_keys(m, "model", {"id", "hidden_size", "time_emb_size", "num_layers", "num_event_types",
                              "num_mixtures", "ode_steps", "seed"});
      const std::string id = m.value("id", c.model.model_id);
      c.model = ModelConfig::defaults_for(id, c.model.num_event_types);
      c.model.num_event_types = 0;  // filled from the data unless given
      c.model.seed = c.seed;
      from_json(m, c.model);
    } else {
      c.model.num_event_types = 0;
      c.model.seed = c.seed;
    }
    if (j.contains("optimizer")) {
      const json& o = j.at("optimizer");
      check_keys(o, "optimizer", {"lr", "beta1", "beta2", "eps"});
      read(o, "lr", c.optimizer.lr);
      read(o, "beta1", c.optimizer.beta1);
      read(o, "beta2", c.optimizer.beta2);
      read(o, "eps", c.optimizer.eps);
    }
    if (j.contains("training")) {
      const json& t = j.at("training");
      check_keys(t, "training", {"batch_size", "max_epochs", "patience"});
      read(t, "batch_size", c.batch_size);
      read(t, "max_epochs", c.max_epochs);
      read(t, "patience", c.patience);
    }
    c.mc.rng_seed = derive_seed(c.seed, {0x3cu});
    c.thinning.rng_seed = derive_seed(c.seed, {0x7e1u});
    if (j.contains("mc")) {
      check_keys(j.at("mc"), "mc", {"samples_per_event_train", "samples_per_event_eval", "rng_seed", "stratified"});
      from_json(j.at("mc"), c.mc);
    }
    if (j.contains("thinning")) {
      check_keys(j.at("thinning"), "thinning",
                 {"num_samples", "num_exp", "max_rounds", "over_sample_factor", "rng_seed", "probe_points",
                  "probe_span_factor", "expected_dtime", "max_rollout_events"});
      from_json(j.at("thinning"), c.thinning);
      c.expected_dtime_from_data = !j.at("thinning").contains("expected_dtime");
    }
    if (j.contains("otd")) {
      check_keys(j.at("otd"), "otd", {"delete_cost"});
      from_json(j.at("otd"), c.otd);
    }
    read(j, "horizons", c.horizons);
    read(j, "max_eval_sequences", c.max_eval_sequences);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadConfig, std::string("malformed config: ") + e.what());
  }
  return c;
}

void apply_overrides(json& j, const std::vector<std::string>& overrides) {
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::BadConfig, "override must be key=value: " + ov);
    const std::string key = ov.substr(0, eq), raw = ov.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    json* node = &j;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      if (!node->is_object()) throw Error(ErrorCode::BadConfig, "override path crosses a non-object: " + key);
      node = &(*node)[parts[i]];
      if (node->is_null()) *node = json::object();
    }
    (*node)[parts.back()] = value;
  }
}

RunnerConfig load_runner_config(const fs::path& path, const std::string& experiment_id,
                                const std::vector<std::string>& overrides) {
  json root = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingFile, "config not found: " + path.string());
    root = json::parse(in, nullptr, false);
    if (root.is_discarded()) throw Error(ErrorCode::BadConfig, "config is not valid JSON: " + path.string());
  }
  json exp = root;
  if (root.contains("experiments")) {
    const json& all = root.at("experiments");
    if (experiment_id.empty()) {
      if (all.size() != 1) throw Error(ErrorCode::BadConfig, "config has several experiments; pass an experiment id");
      exp = all.begin().value();
      exp["experiment_id"] = all.begin().key();
    } else {
      if (!all.contains(experiment_id)) throw Error(ErrorCode::BadConfig, "no experiment '" + experiment_id + "'");
      exp = all.at(experiment_id);
      exp["experiment_id"] = experiment_id;
    }
  } else if (!experiment_id.empty()) {
    exp["experiment_id"] = experiment_id;
  }
  apply_overrides(exp, overrides);
  RunnerConfig c = runner_config_from_json(exp);
  c.validate();
  return c;
}

std::string sha1_hex(const std::string& data) {
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  std::ostringstream os;
  for (unsigned char b : digest) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(b);
  return os.str();
}

std::string git_blob_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot hash missing file " + path.string());
  std::ostringstream body;
  body << in.rdbuf();
  const std::string content = body.str();
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  return sha1_hex(blob + content);
}

std::string config_hash(const RunnerConfig& c) {
  json j = to_json(c);
  j.erase("output_dir");
  return sha1_hex(j.dump());
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::MissingFile, "cannot write " + path.string());
}

}  // namespace tpp

#include "tpp/json_io.hpp"

namespace tpp {

using nlohmann::json;

namespace {

// Reads key into out when present; unknown keys are ignored.
template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void to_json(json& j, const ModelConfig& c) {
  j = json{{"id", c.model_id},          {"hidden_size", c.hidden_size}, {"time_emb_size", c.time_emb_size},
           {"num_layers", c.num_layers}, {"num_event_types", c.num_event_types},
           {"num_mixtures", c.num_mixtures}, {"ode_steps", c.ode_steps}, {"seed", c.seed}};
}

void from_json(const json& j, ModelConfig& c) {
  read(j, "id", c.model_id);
  read(j, "hidden_size", c.hidden_size);
  read(j, "time_emb_size", c.time_emb_size);
  read(j, "num_layers", c.num_layers);
  read(j, "num_event_types", c.num_event_types);
  read(j, "num_mixtures", c.num_mixtures);
  read(j, "ode_steps", c.ode_steps);
  read(j, "seed", c.seed);
}

void to_json(json& j, const MCConfig& c) {
  j = json{{"samples_per_event_train", c.samples_per_event_train},
           {"samples_per_event_eval", c.samples_per_event_eval},
           {"rng_seed", c.rng_seed},
           {"stratified", c.stratified}};
}

void from_json(const json& j, MCConfig& c) {
  read(j, "stratified", c.stratified);
  read(j, "samples_per_event_train", c.samples_per_event_train);
  read(j, "samples_per_event_eval", c.samples_per_event_eval);
  read(j, "rng_seed", c.rng_seed);
}

void to_json(json& j, const ThinningConfig& c) {
  j = json{{"num_samples", c.num_samples},
           {"num_exp", c.num_exp},
           {"max_rounds", c.max_rounds},
           {"over_sample_factor", c.over_sample_factor},
           {"rng_seed", c.rng_seed},
           {"probe_points", c.probe_points},
           {"probe_span_factor", c.probe_span_factor},
           {"expected_dtime", c.expected_dtime},
           {"max_rollout_events", c.max_rollout_events}};
}

void from_json(const json& j, ThinningConfig& c) {
  read(j, "num_samples", c.num_samples);
  read(j, "num_exp", c.num_exp);
  read(j, "max_rounds", c.max_rounds);
  read(j, "over_sample_factor", c.over_sample_factor);
  read(j, "rng_seed", c.rng_seed);
  read(j, "probe_points", c.probe_points);
  read(j, "probe_span_factor", c.probe_span_factor);
  read(j, "expected_dtime", c.expected_dtime);
  read(j, "max_rollout_events", c.max_rollout_events);
}

void to_json(json& j, const OTDParams& c) { j = json{{"delete_cost", c.delete_cost}}; }

void from_json(const json& j, OTDParams& c) { read(j, "delete_cost", c.delete_cost); }

void to_json(json& j, const HawkesParams& p) {
  j = json{{"num_types", p.num_types}, {"mu", p.mu}, {"alpha", p.alpha}, {"beta", p.beta}};
}

void from_json(const json& j, HawkesParams& p) {
  read(j, "num_types", p.num_types);
  read(j, "mu", p.mu);
  read(j, "alpha", p.alpha);
  read(j, "beta", p.beta);
}

}  // namespace tpp

#pragma once

#include <json.hpp>

#include "tpp/likelihood.hpp"
#include "tpp/metrics.hpp"
#include "tpp/models.hpp"
#include "tpp/sampler.hpp"

namespace tpp {

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const MCConfig& c);
void from_json(const nlohmann::json& j, MCConfig& c);
void to_json(nlohmann::json& j, const ThinningConfig& c);
void from_json(const nlohmann::json& j, ThinningConfig& c);
void to_json(nlohmann::json& j, const OTDParams& c);
void from_json(const nlohmann::json& j, OTDParams& c);
void to_json(nlohmann::json& j, const HawkesParams& p);
void from_json(const nlohmann::json& j, HawkesParams& p);

}  // namespace tpp

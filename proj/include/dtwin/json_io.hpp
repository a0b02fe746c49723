#pragma once

// nlohmann/json conversions for the serialisable records.

#include <dtwin/scenario.hpp>

#include <json.hpp>

namespace dtwin {

void to_json(nlohmann::json& j, const ScenarioParams& p);
void from_json(const nlohmann::json& j, ScenarioParams& p);

void to_json(nlohmann::json& j, const ConsensusConfig& c);
void from_json(const nlohmann::json& j, ConsensusConfig& c);

void to_json(nlohmann::json& j, const ChainConfig& c);
void from_json(const nlohmann::json& j, ChainConfig& c);

nlohmann::json scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);

}  // namespace dtwin

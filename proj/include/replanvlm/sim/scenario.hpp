#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "replanvlm/sim/types.hpp"

namespace replanvlm::sim {

struct ScenarioMetadata {
  int task_id = 0;
  std::string instruction;
  int ms_expected = 0;
};

struct Scenario {
  WorldState world;
  GoalPredicate goal;
  ScenarioMetadata metadata;
};

/// Parses scenario JSON text. Syntax errors carry the line; schema errors name
/// the field path (e.g. "objects[2].relation.type"); invariant violations name
/// the offending object.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);

nlohmann::json to_json(const Pose& p);
nlohmann::json to_json(const Relation& r);
nlohmann::json to_json(const Condition& c);
nlohmann::json to_json(const GoalPredicate& g);
nlohmann::json to_json(const WorldState& w);
nlohmann::json to_json(const PerceptionSnapshot& s);
nlohmann::json to_json(const Event& e);
nlohmann::json to_json(const WorldFaultSpec& f);

/// Goal conditions in the scenario-file shape.
GoalPredicate goal_from_json(const nlohmann::json& j, const std::string& path = "goal");
WorldFaultSpec fault_from_json(const nlohmann::json& j);

}  // namespace replanvlm::sim

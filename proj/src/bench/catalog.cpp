#include "replanvlm/bench/catalog.hpp"

#include <stdexcept>

#include "replanvlm/sim/scenario.hpp"
#include "replanvlm/sim/world.hpp"
#include "replanvlm/vlm/oracle.hpp"

namespace replanvlm::bench {

namespace {

struct Row {
  const char* name;
  bool su, sr, ec, ua, as;
  int ms;
};

constexpr Row kTable[] = {
    {"Food Demand Recognition", true, false, false, true, false, 6},
    {"Grasping the Block", false, true, true, false, false, 21},
    {"Stacking Blocks", true, true, true, false, false, 14},
    {"Sequential Arrangement on a Conveyor Belt", false, true, false, false, true, 22},
    {"Categorization and Transport", false, true, false, false, true, 13},
    {"Grabbing Invisible Objects", false, true, true, false, false, 13},
    {"Toy Recognition", false, false, false, true, false, 7},
};

}  // namespace

engine::TaskSpec task_spec(int id, const std::filesystem::path& data_dir) {
  if (id < 1 || id > 7) throw std::out_of_range("task id must be 1-7, got " + std::to_string(id));
  const auto& row = kTable[id - 1];
  engine::TaskSpec t;
  t.id = id;
  t.name = row.name;
  t.scenario = data_dir / "scenarios" / ("task" + std::to_string(id) + ".json");
  const auto sc = sim::load_scenario(t.scenario);
  t.instruction = sc.metadata.instruction;
  t.goal = sc.goal;
  t.su = row.su;
  t.sr = row.sr;
  t.ec = row.ec;
  t.ua = row.ua;
  t.as = row.as;
  t.ms_expected = row.ms;
  return t;
}

std::vector<engine::TaskSpec> task_catalog(const std::filesystem::path& data_dir) {
  std::vector<engine::TaskSpec> out;
  for (int id = 1; id <= 7; ++id) out.push_back(task_spec(id, data_dir));
  return out;
}

sim::WorldState task_world(const engine::TaskSpec& task) { return sim::load_scenario(task.scenario).world; }

dsl::ActionProgram canonical_program(const engine::TaskSpec& task) {
  return vlm::plan_oracle(sim::snapshot(task_world(task)), task.goal).program();
}

}  // namespace replanvlm::bench

#pragma once

#include <filesystem>
#include <vector>

#include "replanvlm/engine/engine.hpp"

namespace replanvlm::bench {

/// The seven benchmark tasks, loaded from <data_dir>/scenarios/task<N>.json.
/// Criteria flags and minimum step counts are the published reference values.
std::vector<engine::TaskSpec> task_catalog(const std::filesystem::path& data_dir);
engine::TaskSpec task_spec(int id, const std::filesystem::path& data_dir);

/// Initial world of a catalog task.
sim::WorldState task_world(const engine::TaskSpec& task);

/// Canonical zero-fault program: the oracle plan on the initial snapshot.
dsl::ActionProgram canonical_program(const engine::TaskSpec& task);

}  // namespace replanvlm::bench

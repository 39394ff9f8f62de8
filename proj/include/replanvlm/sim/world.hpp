#pragma once

#include <optional>
#include <string>
#include <vector>

#include "replanvlm/sim/types.hpp"

namespace replanvlm::sim {

/// Throws WorldError(InvariantViolation) naming the first offending object.
void validate_world(const WorldState& world);

/// Recomputes poses implied by relations (stacked, contained, on-belt, held,
/// delivered objects). Leaves free OnTable poses untouched.
void settle_poses(WorldState& world);

/// Camera view: every object except those inside a closed drawer.
PerceptionSnapshot snapshot(const WorldState& world);

/// Symbolic world rebuilt from what a snapshot shows. Hidden objects are absent.
WorldState world_from_snapshot(const PerceptionSnapshot& snap);

/// Applies one primitive. `armed` is a fault the caller has decided triggers
/// on this step; it takes effect only when applicable to the step.
StepResult apply_step(const WorldState& world, const PrimitiveStep& step,
                      const WorldFaultSpec* armed = nullptr);

/// Differences between two states of the same vocabulary. Pose changes below
/// tolerance are suppressed. Throws WorldError(VocabularyMismatch).
StateDiff diff(const WorldState& before, const WorldState& after);

/// Like diff, but objects may appear or disappear (occlusion); unseen
/// relations are reported as nullopt.
StateDiff diff_snapshots(const PerceptionSnapshot& before, const PerceptionSnapshot& after);

/// Pure goal check. Throws WorldError(UnresolvableSelector) if a selector
/// matches nothing in the world.
GoalEvaluation eval_goal(const GoalPredicate& goal, const WorldState& world);

/// Per-condition evaluation where unresolvable selectors count as unmet
/// instead of throwing. Used on partial (perceived) worlds.
GoalEvaluation eval_goal_lenient(const GoalPredicate& goal, const WorldState& world);

/// Checks every selector of the goal against the world vocabulary.
void validate_goal(const GoalPredicate& goal, const WorldState& world);

/// First free slot on the table grid, nearest to `near` when given.
Pose free_table_pose(const WorldState& world, std::optional<Pose> near = std::nullopt);

/// Object currently resting directly on `id`, if any.
std::optional<std::string> object_on_top_of(const WorldState& world, const std::string& id);

/// Objects stacked above `id`, nearest first.
std::vector<std::string> stack_above(const WorldState& world, const std::string& id);

/// Whether a closed drawer hides this object.
bool occluded(const WorldState& world, const SceneObject& obj);

/// Whether the object is in the named location: a container id, or one of
/// "table", "belt", "user".
bool object_at(const WorldState& world, const SceneObject& obj, const std::string& location);

}  // namespace replanvlm::sim

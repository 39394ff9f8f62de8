#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "replanvlm/dsl/program.hpp"
#include "replanvlm/sim/types.hpp"

namespace replanvlm::dsl {

/// Primitive cost of each skill: pick 4, place 3, give 2, open_drawer 6, wait(n) n.
std::size_t skill_cost(const SkillCall& call);

struct TraceEntry {
  sim::PrimitiveStep step;
  std::size_t call_index = 0;

  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

struct TerminalState {
  sim::Relation relation;
  bool fallen = false;

  friend bool operator==(const TerminalState&, const TerminalState&) = default;
};

/// Primitive expansion of a program bound against one snapshot.
///
/// Objects hidden in a closed drawer that the program opens first are bound
/// late: their steps carry the selector, and `terminal` keys them as
/// "?<selector key>". Everything else is bound to ids at expansion time.
struct EffectTrace {
  std::vector<TraceEntry> steps;
  std::map<std::string, TerminalState> terminal;
  std::vector<sim::Event> symbolic_events;
  sim::WorldState symbolic_world;  // reconstructed world after symbolic execution
  std::optional<std::string> symbolic_error;  // hard error that halted symbolic execution

  std::size_t size() const { return steps.size(); }
};

EffectTrace expand(const ActionProgram& program, const sim::PerceptionSnapshot& snapshot);

/// Expansion over an explicit symbolic world (e.g. one already reconstructed
/// from a snapshot). `occluding_drawers` lists closed drawers that may hide
/// objects; selectors that match nothing bind late once such a drawer has
/// been opened by an earlier call.
EffectTrace expand_on(const ActionProgram& program, const sim::WorldState& world,
                      const std::vector<std::string>& occluding_drawers);

std::size_t count_steps(const ActionProgram& program, const sim::PerceptionSnapshot& snapshot);

struct InterpretResult {
  sim::WorldState world;
  std::vector<sim::Event> events;
  std::size_t steps_applied = 0;
  bool fault_fired = false;
  std::optional<std::size_t> fault_step;
  std::optional<std::string> error;  // hard error that stopped execution
  std::optional<sim::WorldErrc> error_code;
};

/// Runs the trace on the world step by step. `fault` triggers at its step
/// index, or per step with its probability; at most one firing per step.
InterpretResult interpret(const EffectTrace& trace, const sim::WorldState& world,
                          const std::optional<sim::WorldFaultSpec>& fault = std::nullopt);

struct EquivalenceResult {
  bool equivalent = false;
  std::vector<std::string> divergences;
  std::optional<std::string> left_error;
  std::optional<std::string> right_error;
};

/// Same functionality: identical terminal relations after symbolic execution
/// from the snapshot. Step counts are ignored.
EquivalenceResult effect_equivalent(const ActionProgram& a, const ActionProgram& b,
                                    const sim::PerceptionSnapshot& snapshot);

}  // namespace replanvlm::dsl

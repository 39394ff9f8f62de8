#include "replanvlm/dsl/interpreter.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "replanvlm/sim/selector.hpp"
#include "replanvlm/sim/world.hpp"

namespace replanvlm::dsl {

using sim::PrimitiveKind;
using sim::PrimitiveStep;
using sim::Target;
using sim::TargetKind;

std::size_t skill_cost(const SkillCall& call) {
  switch (call.skill) {
    case Skill::Pick: return 4;
    case Skill::Place: return 3;
    case Skill::Give: return 2;
    case Skill::OpenDrawer: return 6;
    case Skill::Wait: return static_cast<std::size_t>(std::get<double>(call.args.at(0)));
  }
  return 0;
}

namespace {

class Expander {
 public:
  Expander(const sim::WorldState& world, const std::vector<std::string>& occluding)
      : world_(world), occluding_(occluding.begin(), occluding.end()) {}

  EffectTrace run(const ActionProgram& program) {
    for (std::size_t i = 0; i < program.calls.size(); ++i) {
      call_index_ = i;
      expand_call(program.calls[i]);
    }
    trace_.symbolic_world = world_;
    for (const auto& [id, o] : world_.objects) trace_.terminal[id] = {o.relation, o.fallen};
    return std::move(trace_);
  }

 private:
  void emit(PrimitiveKind kind, Target target = {}) {
    PrimitiveStep step{kind, std::move(target)};
    if (!halted_) {
      try {
        auto r = sim::apply_step(world_, step);
        world_ = std::move(r.world);
        trace_.symbolic_events.insert(trace_.symbolic_events.end(), r.events.begin(), r.events.end());
      } catch (const sim::WorldError& e) {
        // Execution would stop here; later steps still count.
        halted_ = true;
        trace_.symbolic_error = e.what();
        trace_.symbolic_events.push_back({world_.tick, sim::EventKind::Missed, e.subject(), e.what()});
      }
    }
    trace_.steps.push_back({std::move(step), call_index_});
  }

  bool occluder_opened() const {
    return std::any_of(occluding_.begin(), occluding_.end(), [&](const std::string& d) {
      auto it = world_.containers.find(d);
      return it != world_.containers.end() && it->second.open;
    });
  }

  Target bind_object(const std::string& selector) {
    if (auto id = sim::try_resolve_object(selector, world_, world_.gripper.arm)) {
      Target t{TargetKind::Object, *id, {}, {}};
      if (auto it = late_.find(*id); it != late_.end()) t.selector = it->second;
      return t;
    }
    if (occluder_opened()) {
      const std::string placeholder = "?" + sim::selector_key(selector);
      std::string drawer;
      for (const auto& d : occluding_) {
        if (world_.containers.contains(d) && world_.containers.at(d).open) {
          drawer = d;
          break;
        }
      }
      sim::SceneObject obj;
      obj.id = placeholder;
      obj.kind = selector;
      obj.relation = sim::Relation::inside(drawer);
      obj.pose = world_.containers.at(drawer).pose;
      world_.objects[placeholder] = obj;
      late_[placeholder] = selector;
      return {TargetKind::Object, placeholder, {}, selector};
    }
    throw DslError(DslErrc::UnresolvableSelector, "no visible object matches '" + selector + "'");
  }

  Target bind_location(const std::string& selector) {
    const auto tokens = sim::normalize_tokens(selector);
    if (tokens == std::vector<std::string>{"table"}) {
      return {TargetKind::TablePose, {}, sim::free_table_pose(world_, world_.gripper.arm), {}};
    }
    if (tokens == std::vector<std::string>{"belt"} || tokens == std::vector<std::string>{"conveyor", "belt"} ||
        tokens == std::vector<std::string>{"conveyor"}) {
      if (!world_.belt) throw DslError(DslErrc::UnresolvableSelector, "the scene has no conveyor belt");
      return {TargetKind::BeltLoad, {}, {}, {}};
    }
    auto container = sim::try_resolve_container(selector, world_, world_.gripper.arm);
    std::optional<std::string> object;
    for (const auto& [id, o] : world_.objects) {
      if (world_.gripper.holding == id) continue;
      if (sim::object_matches(selector, o)) {
        object = sim::try_resolve_object(selector, world_, world_.gripper.arm);
        break;
      }
    }
    if (container && object) {
      throw DslError(DslErrc::AmbiguousSelector,
                     "'" + selector + "' names both container " + *container + " and object " + *object);
    }
    if (container) return {TargetKind::Container, *container, {}, {}};
    if (object) {
      Target t{TargetKind::Object, *object, {}, {}};
      if (auto it = late_.find(*object); it != late_.end()) t.selector = it->second;
      return t;
    }
    throw DslError(DslErrc::UnresolvableSelector, "no location matches '" + selector + "'");
  }

  void expand_call(const SkillCall& call) {
    switch (call.skill) {
      case Skill::Pick: {
        Target t = bind_object(call.selector());
        emit(PrimitiveKind::MoveAbove, t);
        emit(PrimitiveKind::Lower);
        emit(PrimitiveKind::CloseGripper, t);
        emit(PrimitiveKind::Lift);
        break;
      }
      case Skill::Place: {
        Target t = bind_location(call.selector());
        emit(PrimitiveKind::Transfer, t);
        emit(PrimitiveKind::Lower);
        emit(PrimitiveKind::OpenGripper);
        break;
      }
      case Skill::Give:
        emit(PrimitiveKind::Transfer, {TargetKind::User, {}, {}, {}});
        emit(PrimitiveKind::OpenGripper);
        break;
      case Skill::OpenDrawer: {
        auto d = sim::try_resolve_container(call.selector(), world_, world_.gripper.arm);
        if (!d || world_.containers.at(*d).kind != sim::ContainerKind::Drawer) {
          throw DslError(DslErrc::UnresolvableSelector, "no drawer matches '" + call.selector() + "'");
        }
        Target t{TargetKind::Container, *d, {}, {}};
        emit(PrimitiveKind::MoveAbove, t);
        emit(PrimitiveKind::Lower);
        emit(PrimitiveKind::CloseGripper, t);
        emit(PrimitiveKind::Transfer, {TargetKind::DrawerPull, *d, {}, {}});
        emit(PrimitiveKind::OpenGripper);
        emit(PrimitiveKind::Lift);
        break;
      }
      case Skill::Wait: {
        const auto n = skill_cost(call);
        for (std::size_t k = 0; k < n; ++k) emit(PrimitiveKind::MoveAbove, {TargetKind::Hover, {}, {}, {}});
        break;
      }
    }
  }

  sim::WorldState world_;
  std::set<std::string> occluding_;
  std::map<std::string, std::string> late_;  // placeholder id -> selector
  EffectTrace trace_;
  std::size_t call_index_ = 0;
  bool halted_ = false;
};

double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

EffectTrace expand_on(const ActionProgram& program, const sim::WorldState& world,
                      const std::vector<std::string>& occluding_drawers) {
  return Expander(world, occluding_drawers).run(program);
}

EffectTrace expand(const ActionProgram& program, const sim::PerceptionSnapshot& snapshot) {
  std::vector<std::string> occluding;
  for (const auto& c : snapshot.containers) {
    if (c.kind == sim::ContainerKind::Drawer && !c.open) occluding.push_back(c.id);
  }
  return expand_on(program, sim::world_from_snapshot(snapshot), occluding);
}

std::size_t count_steps(const ActionProgram& program, const sim::PerceptionSnapshot& snapshot) {
  return expand(program, snapshot).size();
}

InterpretResult interpret(const EffectTrace& trace, const sim::WorldState& world,
                          const std::optional<sim::WorldFaultSpec>& fault) {
  InterpretResult r;
  r.world = world;
  if (fault) fault->validate();
  std::mt19937_64 rng(fault ? fault->seed : 0);
  std::map<std::string, std::string> bindings;

  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    PrimitiveStep step = trace.steps[k].step;
    if (step.target.late_bound()) {
      const std::string placeholder = step.target.id;
      auto it = bindings.find(placeholder);
      if (it != bindings.end()) {
        step.target.id = it->second;
      } else {
        const auto view = sim::world_from_snapshot(sim::snapshot(r.world));
        auto id = sim::try_resolve_object(step.target.selector, view, view.gripper.arm);
        if (!id) {
          r.error = "UnreachableTarget: no visible object matches '" + step.target.selector + "'";
          r.error_code = sim::WorldErrc::UnreachableTarget;
          break;
        }
        bindings[placeholder] = *id;
        step.target.id = *id;
      }
    }
    bool armed = false;
    if (fault) {
      if (fault->at_step) {
        armed = *fault->at_step == k;
      } else if (fault->probability > 0.0) {
        armed = unit_draw(rng) < fault->probability;
      }
    }
    try {
      auto res = sim::apply_step(r.world, step, armed ? &*fault : nullptr);
      r.world = std::move(res.world);
      r.events.insert(r.events.end(), res.events.begin(), res.events.end());
      ++r.steps_applied;
      if (res.fault_fired && !r.fault_fired) {
        r.fault_fired = true;
        r.fault_step = k;
      }
    } catch (const sim::WorldError& e) {
      r.error = e.what();
      r.error_code = e.code();
      break;
    }
  }
  return r;
}

EquivalenceResult effect_equivalent(const ActionProgram& a, const ActionProgram& b,
                                    const sim::PerceptionSnapshot& snapshot) {
  EquivalenceResult out;
  std::optional<EffectTrace> ta;
  std::optional<EffectTrace> tb;
  try {
    ta = expand(a, snapshot);
  } catch (const DslError& e) {
    out.left_error = e.what();
  }
  try {
    tb = expand(b, snapshot);
  } catch (const DslError& e) {
    out.right_error = e.what();
  }
  if (!ta || !tb) {
    if (out.left_error) out.divergences.push_back("left: " + *out.left_error);
    if (out.right_error) out.divergences.push_back("right: " + *out.right_error);
    return out;
  }
  std::set<std::string> keys;
  for (const auto& [k, v] : ta->terminal) keys.insert(k);
  for (const auto& [k, v] : tb->terminal) keys.insert(k);
  auto describe = [](const TerminalState& s) { return to_string(s.relation) + (s.fallen ? " (fallen)" : ""); };
  for (const auto& k : keys) {
    auto ia = ta->terminal.find(k);
    auto ib = tb->terminal.find(k);
    if (ia == ta->terminal.end() || ib == tb->terminal.end()) {
      out.divergences.push_back(k + ": " + (ia == ta->terminal.end() ? "not in left" : describe(ia->second)) +
                                " vs " + (ib == tb->terminal.end() ? "not in right" : describe(ib->second)));
      continue;
    }
    if (!sim::same_relation(ia->second.relation, ib->second.relation) || ia->second.fallen != ib->second.fallen) {
      out.divergences.push_back(k + ": " + describe(ia->second) + " vs " + describe(ib->second));
    }
  }
  out.equivalent = out.divergences.empty();
  return out;
}

}  // namespace replanvlm::dsl

#include "replanvlm/vlm/oracle.hpp"

#include <algorithm>
#include <set>

#include "replanvlm/dsl/interpreter.hpp"
#include "replanvlm/sim/selector.hpp"
#include "replanvlm/sim/world.hpp"

namespace replanvlm::vlm {

using dsl::Skill;
using dsl::SkillCall;
using sim::RelationType;

std::vector<std::string> OraclePlan::plan_lines() const {
  std::vector<std::string> out;
  for (const auto& c : calls) out.push_back(c.line);
  return out;
}

dsl::ActionProgram OraclePlan::program() const {
  dsl::ActionProgram p;
  for (const auto& c : calls) p.calls.push_back(c.call);
  p.source_text = code();
  return p;
}

std::string OraclePlan::code() const {
  std::string out;
  for (std::size_t i = 0; i < calls.size(); ++i) out += (i ? "\n" : "") + dsl::print(calls[i].call);
  return out;
}

std::string plan_line(const SkillCall& call) {
  const auto sel = call.selector();
  switch (call.skill) {
    case Skill::Pick: return "Pick up the " + sel;
    case Skill::Place: {
      static const std::set<std::string> vessels{"box", "plate", "drawer", "bin", "basket", "bowl"};
      const auto tokens = sim::normalize_tokens(sel);
      const bool in = std::any_of(tokens.begin(), tokens.end(), [](const auto& t) { return vessels.contains(t); });
      return std::string("Place it ") + (in ? "in" : "on") + " the " + sel;
    }
    case Skill::Give: return "Give it to the user";
    case Skill::OpenDrawer: return "Open the " + sel;
    case Skill::Wait: {
      const auto n = dsl::skill_cost(call);
      return "Wait " + std::to_string(n) + (n == 1 ? " step" : " steps");
    }
  }
  return {};
}

namespace {

std::string spaced(std::string id) {
  std::replace(id.begin(), id.end(), '_', ' ');
  return id;
}

class Planner {
 public:
  Planner(const sim::PerceptionSnapshot& snap, const sim::GoalPredicate& goal)
      : w0_(sim::world_from_snapshot(snap)), goal_(goal) {
    for (const auto& c : snap.containers) {
      if (c.kind == sim::ContainerKind::Drawer && !c.open) occluding_.push_back(c.id);
    }
    cur_ = w0_;
  }

  OraclePlan run() {
    if (cur_.gripper.holding) add(place("table"), CallRole::Prerequisite);
    open_if_hidden();
    for (const auto& c : goal_.conditions) satisfy(c);
    return plan_;
  }

 private:
  static SkillCall pick(const std::string& s) { return {Skill::Pick, {s}}; }
  static SkillCall place(const std::string& s) { return {Skill::Place, {s}}; }

  void add(const SkillCall& c, CallRole role) {
    plan_.calls.push_back({c, plan_line(c), role});
    dsl::EffectTrace t;
    try {
      t = dsl::expand_on(plan_.program(), w0_, occluding_);
    } catch (const dsl::DslError& e) {
      throw NoPlanFound(e.what());
    }
    if (t.symbolic_error) throw NoPlanFound("plan step fails: " + *t.symbolic_error);
    cur_ = std::move(t.symbolic_world);
  }

  std::vector<std::string> needed_selectors() const {
    std::vector<std::string> out;
    for (const auto& c : goal_.conditions) {
      switch (c.type) {
        case sim::ConditionType::ObjectIn:
        case sim::ConditionType::Delivered: out.push_back(c.object); break;
        case sim::ConditionType::StackOrder:
        case sim::ConditionType::BeltOrder: out.insert(out.end(), c.order.begin(), c.order.end()); break;
        case sim::ConditionType::AttributeAt:
          if (carriers(c.attribute).empty()) out.push_back(c.attribute);
          break;
      }
    }
    return out;
  }

  void open_if_hidden() {
    for (const auto& sel : needed_selectors()) {
      if (sim::try_resolve_object(sel, cur_, cur_.gripper.arm)) continue;
      if (occluding_.empty()) throw NoPlanFound("no visible object matches '" + sel + "'");
      add({Skill::OpenDrawer, {spaced(occluding_.front())}}, CallRole::Prerequisite);
      return;
    }
  }

  struct Ref {
    std::optional<std::string> id;  // nullopt: still hidden, bound at pick time
    std::string text;
  };

  Ref ref(const std::string& sel) const {
    auto id = sim::try_resolve_object(sel, cur_, cur_.gripper.arm);
    if (!id) {
      if (occluding_.empty()) throw NoPlanFound("no visible object matches '" + sel + "'");
      return {std::nullopt, sel};
    }
    const auto& o = cur_.objects.at(*id);
    if (o.fallen) throw NoPlanFound(*id + " fell off the belt and cannot be reached");
    if (id->front() == '?') return {id, sel};
    return {id, sim::describe_object(cur_, *id, cur_.gripper.arm)};
  }

  std::vector<std::string> carriers(const std::string& attribute) const {
    std::vector<std::string> out;
    for (const auto& [id, o] : cur_.objects) {
      if (o.attributes.contains(attribute)) out.push_back(id);
    }
    return out;
  }

  void clear(const std::optional<std::string>& id) {
    if (!id) return;
    auto above = sim::stack_above(cur_, *id);
    for (auto it = above.rbegin(); it != above.rend(); ++it) {
      if (cur_.objects.at(*it).fallen) continue;
      add(pick(ref(*it).text), CallRole::Prerequisite);
      add(place("table"), CallRole::Prerequisite);
    }
  }

  std::string location_text(const std::string& target) const {
    if (target == "table" || target == "belt") return target;
    if (auto c = sim::try_resolve_container(target, cur_, cur_.gripper.arm)) return spaced(*c);
    throw NoPlanFound("no container matches '" + target + "'");
  }

  void move_to(const Ref& r, const std::string& target) {
    clear(r.id);
    add(pick(r.text), CallRole::Goal);
    if (target == "user") {
      add({Skill::Give, {}}, CallRole::Goal);
    } else {
      add(place(location_text(target)), CallRole::Goal);
    }
  }

  bool at(const Ref& r, const std::string& location) const {
    return r.id && sim::object_at(cur_, cur_.objects.at(*r.id), location);
  }

  void satisfy(const sim::Condition& c) {
    switch (c.type) {
      case sim::ConditionType::ObjectIn: {
        auto r = ref(c.object);
        if (!at(r, c.target)) move_to(r, c.target);
        break;
      }
      case sim::ConditionType::Delivered: {
        auto r = ref(c.object);
        if (!at(r, "user")) move_to(r, "user");
        break;
      }
      case sim::ConditionType::AttributeAt: {
        auto ids = carriers(c.attribute);
        if (ids.empty()) {
          move_to(ref(c.attribute), c.target);
          break;
        }
        for (const auto& id : ids) {
          if (!sim::object_at(cur_, cur_.objects.at(id), c.target)) move_to(ref(id), c.target);
        }
        break;
      }
      case sim::ConditionType::StackOrder: stack(c.order); break;
      case sim::ConditionType::BeltOrder: belt(c.order); break;
    }
  }

  std::optional<std::string> id_of(const std::string& sel) const { return ref(sel).id; }

  void stack(const std::vector<std::string>& order) {
    if (order.empty()) return;
    std::size_t k = 0;
    if (auto base = id_of(order[0]); base && at(ref(order[0]), "table")) {
      k = 1;
      while (k < order.size()) {
        auto below = id_of(order[k - 1]);
        auto self = id_of(order[k]);
        if (!self || !below) break;
        const auto& rel = cur_.objects.at(*self).relation;
        if (rel.type != RelationType::OnTopOf || rel.target != *below) break;
        ++k;
      }
    }
    for (std::size_t i = k; i < order.size(); ++i) {
      auto self = ref(order[i]);
      if (i == 0) {
        clear(self.id);
        if (!at(self, "table")) {
          add(pick(self.text), CallRole::Goal);
          add(place("table"), CallRole::Goal);
        }
        continue;
      }
      auto below = ref(order[i - 1]);
      clear(below.id);
      self = ref(order[i]);
      clear(self.id);
      below = ref(order[i - 1]);
      add(pick(self.text), CallRole::Goal);
      add(place(below.text), CallRole::Goal);
    }
  }

  void belt(const std::vector<std::string>& order) {
    if (!cur_.belt) throw NoPlanFound("the scene has no conveyor belt");
    std::vector<Ref> refs;
    for (const auto& s : order) refs.push_back(ref(s));
    auto offset = [&](const Ref& r) -> std::optional<double> {
      if (!r.id) return std::nullopt;
      const auto& rel = cur_.objects.at(*r.id).relation;
      if (rel.type != RelationType::OnBelt) return std::nullopt;
      return rel.offset;
    };
    // Keep the longest leading run that is already in order and ahead of
    // every other listed object; reload the rest, front to back.
    std::size_t j = 0;
    while (j < refs.size()) {
      auto o = offset(refs[j]);
      if (!o) break;
      if (j > 0 && !(*o < *offset(refs[j - 1]))) break;
      bool ahead = true;
      for (std::size_t m = j + 1; m < refs.size(); ++m) {
        auto om = offset(refs[m]);
        if (om && !(*om < *o)) ahead = false;
      }
      if (!ahead) break;
      ++j;
    }
    for (std::size_t i = j; i < refs.size(); ++i) move_to(ref(order[i]), "belt");
  }

  sim::WorldState w0_;
  sim::WorldState cur_;
  std::vector<std::string> occluding_;
  const sim::GoalPredicate& goal_;
  OraclePlan plan_;
};

std::string numbered(const std::vector<std::string>& lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) out += (i ? "; " : "") + std::to_string(i + 1) + ". " + lines[i];
  return out;
}

}  // namespace

OraclePlan plan_oracle(const sim::PerceptionSnapshot& snapshot, const sim::GoalPredicate& goal) {
  return Planner(snapshot, goal).run();
}

Review review_oracle(const std::vector<std::string>& plan, const std::string& code,
                     const sim::PerceptionSnapshot& snapshot, const sim::GoalPredicate& goal) {
  (void)plan;
  dsl::ActionProgram program;
  try {
    program = dsl::parse(code);
  } catch (const dsl::DslError& e) {
    return {false, std::string("the code does not parse: ") + e.what()};
  }
  OraclePlan expected;
  try {
    expected = plan_oracle(snapshot, goal);
  } catch (const NoPlanFound& e) {
    return {false, std::string("no plan can reach the goal from this scene: ") + e.what()};
  }
  auto eq = dsl::effect_equivalent(program, expected.program(), snapshot);
  if (eq.equivalent) return {true, ""};
  std::string reason = "the code does not have the expected effect";
  if (eq.left_error) {
    reason += ": " + *eq.left_error;
  } else {
    for (std::size_t i = 0; i < eq.divergences.size(); ++i) reason += (i ? "; " : ": ") + eq.divergences[i];
  }
  reason += ". Suggested plan: " + numbered(expected.plan_lines());
  return {false, reason};
}

Review assess_oracle(const sim::PerceptionSnapshot& before, const sim::PerceptionSnapshot& after,
                     const sim::GoalPredicate& goal) {
  const auto world = sim::world_from_snapshot(after);
  const auto ev = sim::eval_goal_lenient(goal, world);
  if (ev.satisfied) return {true, ""};
  std::string reason = "task not completed: ";
  for (std::size_t i = 0; i < ev.unmet.size(); ++i) reason += (i ? "; " : "") + ev.unmet[i].detail;
  // Name whatever rests on an object the goal needs.
  std::set<std::string> hinted;
  for (const auto& c : goal.conditions) {
    std::vector<std::string> sels;
    if (!c.object.empty()) sels.push_back(c.object);
    sels.insert(sels.end(), c.order.begin(), c.order.end());
    for (const auto& s : sels) {
      auto id = sim::try_resolve_object(s, world, world.gripper.arm);
      if (!id || hinted.contains(*id)) continue;
      auto above = sim::stack_above(world, *id);
      if (above.empty()) continue;
      hinted.insert(*id);
      reason += ". " + *id + " is blocked by " + above.front() + "; remove " + above.back() + " first";
    }
  }
  const auto d = sim::diff_snapshots(before, after);
  if (d.empty()) {
    reason += ". Nothing in the scene changed";
  } else {
    reason += ". Observed changes: ";
    const auto lines = d.lines();
    for (std::size_t i = 0; i < lines.size(); ++i) reason += (i ? "; " : "") + lines[i];
  }
  return {false, reason};
}

}  // namespace replanvlm::vlm

#include "replanvlm/sim/world.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "replanvlm/sim/selector.hpp"

namespace replanvlm::sim {
namespace {

constexpr double kSlotSpacing = 0.03;

[[noreturn]] void violation(const std::string& id, const std::string& what) {
  throw WorldError(WorldErrc::InvariantViolation, id, "object '" + id + "': " + what);
}

double segment_distance(const Pose& p, const ConveyorBelt& belt) {
  const double vx = belt.end.x - belt.start.x;
  const double vy = belt.end.y - belt.start.y;
  const double len2 = vx * vx + vy * vy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = ((p.x - belt.start.x) * vx + (p.y - belt.start.y) * vy) / len2;
    t = std::clamp(t, 0.0, 1.0);
  }
  return std::hypot(p.x - (belt.start.x + t * vx), p.y - (belt.start.y + t * vy));
}

std::vector<Pose> table_grid() {
  std::vector<Pose> grid;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 7; ++j) {
      grid.push_back({0.20 + 0.10 * i, -0.30 + 0.10 * j, 0.0, 0.0});
    }
  }
  return grid;
}

Pose container_slot(const WorldState& w, const std::string& container, const std::string& id) {
  const auto& c = w.containers.at(container);
  std::size_t index = 0;
  for (const auto& [oid, o] : w.objects) {
    if (oid == id) break;
    if (o.relation.type == RelationType::Inside && o.relation.target == container) ++index;
  }
  return {c.pose.x + kSlotSpacing * static_cast<double>(index), c.pose.y, c.pose.z, 0.0};
}

std::size_t occupants(const WorldState& w, const std::string& container) {
  return static_cast<std::size_t>(std::count_if(w.objects.begin(), w.objects.end(), [&](const auto& kv) {
    return kv.second.relation.type == RelationType::Inside && kv.second.relation.target == container;
  }));
}

Pose target_pose(const WorldState& w, const Target& t) {
  switch (t.kind) {
    case TargetKind::Object: {
      auto it = w.objects.find(t.id);
      return it == w.objects.end() ? w.gripper.arm : it->second.pose;
    }
    case TargetKind::Container:
    case TargetKind::DrawerPull: {
      auto it = w.containers.find(t.id);
      if (it == w.containers.end()) return w.gripper.arm;
      Pose p = it->second.pose;
      if (t.kind == TargetKind::DrawerPull) p.x -= 0.15;
      return p;
    }
    case TargetKind::TablePose: return t.pose;
    case TargetKind::BeltLoad: return w.belt ? w.belt->pose_at(0.0) : w.gripper.arm;
    case TargetKind::User: return kUserPose;
    case TargetKind::Hover:
    case TargetKind::None: return w.gripper.arm;
  }
  return w.gripper.arm;
}

Pose hover_over(Pose p) {
  p.z += kHoverHeight;
  return p;
}

void place_on_table(WorldState& w, SceneObject& obj, std::optional<Pose> near) {
  obj.relation = Relation::on_table();
  Pose p = free_table_pose(w, near);
  obj.pose = p;
}

void restore_after_slip(WorldState& w, std::vector<Event>& events) {
  auto& g = w.gripper;
  if (g.handle) {
    events.push_back({w.tick, EventKind::Drop, *g.handle, "handle slipped from gripper"});
    g.handle.reset();
    g.slip_pending = false;
    return;
  }
  if (!g.holding) {
    g.slip_pending = false;
    return;
  }
  auto& obj = w.objects.at(*g.holding);
  Relation back = g.pre_grasp_relation;
  if (back.type == RelationType::OnBelt && w.belt && w.belt->active) {
    back.offset += w.belt->speed * static_cast<double>(w.tick - g.grasp_tick);
    back.offset = std::min(back.offset, w.belt->length());
  }
  bool blocked = (back.type == RelationType::OnTopOf &&
                  (!w.objects.contains(back.target) || object_on_top_of(w, back.target))) ||
                 (back.type == RelationType::Inside && !w.containers.contains(back.target));
  if (blocked) {
    place_on_table(w, obj, g.arm);
  } else {
    obj.relation = back;
    obj.pose = g.pre_grasp_pose;
  }
  events.push_back({w.tick, EventKind::Drop, obj.id, "slipped from gripper, now " + to_string(obj.relation)});
  g.holding.reset();
  g.slip_pending = false;
  g.transfer.reset();
}

bool can_stack_on(const WorldState& w, const std::string& base, const std::string& self) {
  auto it = w.objects.find(base);
  if (it == w.objects.end() || base == self) return false;
  const auto& b = it->second;
  if (b.fallen) return false;
  if (b.relation.type != RelationType::OnTable && b.relation.type != RelationType::OnTopOf) return false;
  return !object_on_top_of(w, base).has_value();
}

void release(WorldState& w, SceneObject& obj, std::vector<Event>& events) {
  auto& g = w.gripper;
  const std::uint64_t tick = w.tick;
  if (!g.transfer) {
    obj.relation = g.pre_grasp_relation;
    obj.pose = g.pre_grasp_pose;
    if (obj.relation.type == RelationType::OnTopOf && object_on_top_of(w, obj.relation.target)) {
      place_on_table(w, obj, g.arm);
    }
    events.push_back({tick, EventKind::Release, obj.id, "released in place"});
    return;
  }
  const Target& t = *g.transfer;
  switch (t.kind) {
    case TargetKind::Container: {
      auto it = w.containers.find(t.id);
      if (it != w.containers.end() && it->second.open &&
          occupants(w, t.id) < static_cast<std::size_t>(it->second.capacity)) {
        obj.relation = Relation::inside(t.id);
      } else {
        events.push_back({tick, EventKind::Collision, obj.id,
                          "cannot place into " + t.id + (it != w.containers.end() && !it->second.open
                                                             ? " (closed)"
                                                             : " (full)")});
        place_on_table(w, obj, it != w.containers.end() ? std::optional<Pose>(it->second.pose) : g.arm);
      }
      break;
    }
    case TargetKind::Object: {
      if (can_stack_on(w, t.id, obj.id)) {
        obj.relation = Relation::on_top_of(t.id);
      } else {
        events.push_back({tick, EventKind::Collision, obj.id, "cannot stack on " + t.id});
        auto it = w.objects.find(t.id);
        place_on_table(w, obj, it != w.objects.end() ? std::optional<Pose>(it->second.pose) : g.arm);
      }
      break;
    }
    case TargetKind::TablePose:
      obj.relation = Relation::on_table();
      obj.pose = {t.pose.x, t.pose.y, 0.0, t.pose.yaw};
      break;
    case TargetKind::BeltLoad:
      if (w.belt) {
        obj.relation = Relation::on_belt(0.0);
      } else {
        place_on_table(w, obj, g.arm);
      }
      break;
    case TargetKind::User:
      obj.relation = Relation::delivered();
      break;
    default:
      place_on_table(w, obj, g.arm);
  }
  events.push_back({tick, EventKind::Release, obj.id, "now " + to_string(obj.relation)});
}

void advance_belt(WorldState& w, std::vector<Event>& events) {
  if (!w.belt || !w.belt->active) return;
  const double len = w.belt->length();
  for (auto& [id, obj] : w.objects) {
    if (obj.relation.type != RelationType::OnBelt) continue;
    obj.relation.offset += w.belt->speed;
    if (obj.relation.offset > len + 1e-12) {
      obj.relation = Relation::on_table();
      obj.fallen = true;
      obj.pose = {w.belt->end.x, w.belt->end.y, 0.0, 0.0};
      events.push_back({w.tick, EventKind::Fallen, id, "fell off the belt end"});
    }
  }
}

void check_reachable(const WorldState& w, const std::string& id) {
  auto it = w.objects.find(id);
  if (it == w.objects.end()) {
    throw WorldError(WorldErrc::UnreachableTarget, id, "object '" + id + "' does not exist");
  }
  if (occluded(w, it->second)) {
    throw WorldError(WorldErrc::UnreachableTarget, id,
                     "object '" + id + "' is inside closed " + it->second.relation.target);
  }
  if (it->second.fallen) {
    throw WorldError(WorldErrc::UnreachableTarget, id, "object '" + id + "' fell off the belt");
  }
}

}  // namespace

bool occluded(const WorldState& world, const SceneObject& obj) {
  if (obj.relation.type != RelationType::Inside) return false;
  auto it = world.containers.find(obj.relation.target);
  return it != world.containers.end() && it->second.kind == ContainerKind::Drawer && !it->second.open;
}

std::optional<std::string> object_on_top_of(const WorldState& world, const std::string& id) {
  for (const auto& [oid, o] : world.objects) {
    if (o.relation.type == RelationType::OnTopOf && o.relation.target == id) return oid;
  }
  return std::nullopt;
}

std::vector<std::string> stack_above(const WorldState& world, const std::string& id) {
  std::vector<std::string> out;
  auto cur = object_on_top_of(world, id);
  while (cur && out.size() <= world.objects.size()) {
    out.push_back(*cur);
    cur = object_on_top_of(world, *cur);
  }
  return out;
}

void validate_world(const WorldState& world) {
  std::size_t held = 0;
  std::map<std::string, int> on_top_count;
  for (const auto& [id, obj] : world.objects) {
    if (id != obj.id) violation(id, "map key does not match id");
    const auto& r = obj.relation;
    switch (r.type) {
      case RelationType::OnTopOf: {
        auto it = world.objects.find(r.target);
        if (it == world.objects.end()) violation(id, "rests on unknown object '" + r.target + "'");
        if (it->second.relation.type == RelationType::Inside) {
          violation(id, "rests on '" + r.target + "' which is inside a container");
        }
        if (it->second.relation.type == RelationType::HeldByGripper) {
          violation(id, "rests on held object '" + r.target + "'");
        }
        if (++on_top_count[r.target] > 1) {
          violation(id, "second object directly on top of '" + r.target + "'");
        }
        break;
      }
      case RelationType::Inside:
        if (!world.containers.contains(r.target)) {
          violation(id, "inside unknown container '" + r.target + "'");
        }
        break;
      case RelationType::OnBelt:
        if (!world.belt) violation(id, "on belt but the scene has no belt");
        if (r.offset < -1e-9 || r.offset > world.belt->length() + 1e-9) {
          violation(id, "belt offset outside the belt span");
        }
        break;
      case RelationType::HeldByGripper:
        ++held;
        if (world.gripper.holding != id) violation(id, "held but gripper holds something else");
        break;
      default:
        break;
    }
    if (obj.fallen && r.type != RelationType::OnTable) violation(id, "fallen object must lie on the table");
    // Acyclicity of the OnTopOf chain.
    std::string cur = id;
    std::size_t steps = 0;
    while (true) {
      auto it = world.objects.find(cur);
      if (it == world.objects.end() || it->second.relation.type != RelationType::OnTopOf) break;
      cur = it->second.relation.target;
      if (cur == id || ++steps > world.objects.size()) violation(id, "OnTopOf chain forms a cycle");
    }
  }
  if (held > 1) violation(*world.gripper.holding, "more than one object held");
  if (world.gripper.holding && held == 0) {
    violation(*world.gripper.holding, "gripper holds an object that is not HeldByGripper");
  }
  for (const auto& [cid, c] : world.containers) {
    if (cid != c.id) violation(cid, "container key does not match id");
    if (c.kind != ContainerKind::Drawer && !c.open) violation(cid, "only drawers can be closed");
    if (c.capacity < 0) violation(cid, "negative capacity");
    if (occupants(world, cid) > static_cast<std::size_t>(c.capacity)) {
      violation(cid, "container capacity exceeded");
    }
  }
}

void settle_poses(WorldState& world) {
  std::function<void(const std::string&, int)> settle = [&](const std::string& id, int depth) {
    auto& obj = world.objects.at(id);
    switch (obj.relation.type) {
      case RelationType::OnTopOf: {
        if (depth > static_cast<int>(world.objects.size())) return;
        settle(obj.relation.target, depth + 1);
        const auto& base = world.objects.at(obj.relation.target).pose;
        obj.pose = {base.x, base.y, base.z + kObjectHeight, base.yaw};
        break;
      }
      case RelationType::Inside:
        obj.pose = container_slot(world, obj.relation.target, id);
        break;
      case RelationType::OnBelt:
        if (world.belt) obj.pose = world.belt->pose_at(obj.relation.offset);
        break;
      case RelationType::HeldByGripper:
        obj.pose = {world.gripper.arm.x, world.gripper.arm.y, world.gripper.arm.z - kObjectHeight, 0.0};
        break;
      case RelationType::Delivered:
        obj.pose = kUserPose;
        break;
      case RelationType::OnTable:
        obj.pose.z = 0.0;
        break;
    }
  };
  for (auto& [id, obj] : world.objects) settle(id, 0);
}

PerceptionSnapshot snapshot(const WorldState& world) {
  PerceptionSnapshot s;
  s.taken_at_tick = world.tick;
  for (const auto& [id, o] : world.objects) {
    if (occluded(world, o)) continue;
    s.observations.push_back({o.id, o.kind, o.color, o.attributes, o.pose, o.relation, o.fallen});
  }
  for (const auto& [id, c] : world.containers) {
    s.containers.push_back({c.id, c.kind, c.open, c.capacity, c.pose});
  }
  s.belt = world.belt;
  s.arm = world.gripper.arm;
  s.holding = world.gripper.holding;
  return s;
}

WorldState world_from_snapshot(const PerceptionSnapshot& snap) {
  WorldState w;
  w.tick = snap.taken_at_tick;
  for (const auto& o : snap.observations) {
    w.objects[o.id] = {o.id, o.kind, o.color, o.attributes, o.pose, o.relation, o.fallen};
  }
  for (const auto& c : snap.containers) {
    w.containers[c.id] = {c.id, c.kind, c.open, c.capacity, c.pose};
  }
  w.belt = snap.belt;
  w.gripper.arm = snap.arm;
  w.gripper.holding = snap.holding;
  return w;
}

Pose free_table_pose(const WorldState& world, std::optional<Pose> near) {
  const auto grid = table_grid();
  std::vector<Pose> free;
  for (const auto& p : grid) {
    bool ok = true;
    for (const auto& [id, o] : world.objects) {
      if (o.relation.type == RelationType::HeldByGripper || o.relation.type == RelationType::Delivered) continue;
      if (planar_distance(p, o.pose) < kTableSlotClearance) {
        ok = false;
        break;
      }
    }
    for (const auto& [id, c] : world.containers) {
      if (!ok) break;
      if (planar_distance(p, c.pose) < kContainerClearance) ok = false;
    }
    if (ok && world.belt && segment_distance(p, *world.belt) < kBeltClearance) ok = false;
    if (ok) free.push_back(p);
  }
  const auto& pool = free.empty() ? grid : free;
  if (!near) return pool.front();
  const Pose* best = &pool.front();
  for (const auto& p : pool) {
    if (planar_distance(p, *near) < planar_distance(*best, *near) - 1e-12) best = &p;
  }
  return *best;
}

StepResult apply_step(const WorldState& world, const PrimitiveStep& step, const WorldFaultSpec* armed) {
  StepResult result{world, {}, false};
  WorldState& w = result.world;
  auto& events = result.events;
  auto& g = w.gripper;
  const bool fault_ok = armed && fault_applicable(armed->kind, step.kind, g.holding.has_value());
  auto fire = [&](const std::string& subject, const std::string& detail) {
    result.fault_fired = true;
    events.push_back({w.tick, EventKind::FaultFired, subject, detail});
  };

  if (is_movement(step.kind) && g.slip_pending) restore_after_slip(w, events);

  switch (step.kind) {
    case PrimitiveKind::MoveAbove: {
      const auto& t = step.target;
      if (t.kind == TargetKind::Object) {
        check_reachable(w, t.id);
        g.arm = hover_over(w.objects.at(t.id).pose);
      } else if (t.kind == TargetKind::Container) {
        if (!w.containers.contains(t.id)) {
          throw WorldError(WorldErrc::UnreachableTarget, t.id, "container '" + t.id + "' does not exist");
        }
        g.arm = hover_over(w.containers.at(t.id).pose);
      } else if (t.kind != TargetKind::Hover && t.kind != TargetKind::None) {
        g.arm = hover_over(target_pose(w, t));
      }
      if (t.kind != TargetKind::Hover) g.aligned = t;
      break;
    }
    case PrimitiveKind::Lower:
      g.arm.z = std::max(0.0, g.arm.z - (kHoverHeight - kObjectHeight));
      break;
    case PrimitiveKind::Lift:
      g.arm.z += kHoverHeight - kObjectHeight;
      break;
    case PrimitiveKind::CloseGripper: {
      if (g.holding || g.handle) {
        throw WorldError(WorldErrc::GripperBusy, g.holding ? *g.holding : *g.handle,
                         "close gripper while already holding");
      }
      const auto& t = g.aligned;
      if (t.kind == TargetKind::Object) {
        auto it = w.objects.find(t.id);
        if (it == w.objects.end() || it->second.fallen || occluded(w, it->second) ||
            it->second.relation.type == RelationType::Delivered) {
          events.push_back({w.tick, EventKind::Missed, t.id, "nothing to grasp"});
          break;
        }
        if (auto above = object_on_top_of(w, t.id)) {
          events.push_back({w.tick, EventKind::Collision, t.id, "blocked by " + *above + " on top"});
          break;
        }
        auto& obj = it->second;
        g.pre_grasp_relation = obj.relation;
        g.pre_grasp_pose = obj.pose;
        g.grasp_tick = w.tick;
        g.transfer.reset();
        g.holding = obj.id;
        obj.relation = Relation::held();
        events.push_back({w.tick, EventKind::Grasp, obj.id, ""});
        if (fault_ok) {
          g.slip_pending = true;
          fire(obj.id, "grip slip");
        }
      } else if (t.kind == TargetKind::Container && w.containers.contains(t.id) &&
                 w.containers.at(t.id).kind == ContainerKind::Drawer) {
        g.handle = t.id;
        events.push_back({w.tick, EventKind::Grasp, t.id, "drawer handle"});
        if (fault_ok) {
          g.slip_pending = true;
          fire(t.id, "grip slip on handle");
        }
      } else {
        events.push_back({w.tick, EventKind::Missed, t.id, "nothing to grasp"});
      }
      break;
    }
    case PrimitiveKind::Transfer: {
      const auto& t = step.target;
      if (fault_ok && g.holding) {
        auto& obj = w.objects.at(*g.holding);
        fire(obj.id, "dropped during transfer");
        place_on_table(w, obj, g.arm);
        events.push_back({w.tick, EventKind::Drop, obj.id, "dropped during transfer"});
        g.holding.reset();
        g.transfer.reset();
        g.arm = hover_over(target_pose(w, t));
        break;
      }
      if (t.kind == TargetKind::DrawerPull) {
        if (g.handle && *g.handle == t.id) {
          auto& drawer = w.containers.at(t.id);
          if (!drawer.open) {
            drawer.open = true;
            events.push_back({w.tick, EventKind::DrawerOpened, t.id, ""});
          }
        }
        g.arm = target_pose(w, t);
        break;
      }
      if (t.kind == TargetKind::Object) check_reachable(w, t.id);
      g.arm = hover_over(target_pose(w, t));
      if (g.holding) g.transfer = t;
      break;
    }
    case PrimitiveKind::OpenGripper: {
      if (g.handle) {
        events.push_back({w.tick, EventKind::Release, *g.handle, "drawer handle"});
        g.handle.reset();
        g.slip_pending = false;
        break;
      }
      if (!g.holding) break;
      auto& obj = w.objects.at(*g.holding);
      g.holding.reset();
      g.slip_pending = false;
      if (fault_ok) {
        Pose intended = g.transfer ? target_pose(w, *g.transfer) : g.arm;
        obj.relation = Relation::on_table();
        obj.pose = {intended.x + armed->displacement.x, intended.y + armed->displacement.y, 0.0, 0.0};
        fire(obj.id, "displaced on release");
        events.push_back({w.tick, EventKind::Release, obj.id, "displaced onto the table"});
      } else {
        release(w, obj, events);
      }
      g.transfer.reset();
      break;
    }
  }

  w.tick += 1;
  advance_belt(w, events);
  settle_poses(w);
  return result;
}

StateDiff diff(const WorldState& before, const WorldState& after) {
  auto same_keys = [](const auto& a, const auto& b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](const auto& x, const auto& y) { return x.first == y.first; });
  };
  if (!same_keys(before.objects, after.objects) || !same_keys(before.containers, after.containers)) {
    throw WorldError(WorldErrc::VocabularyMismatch, "", "states do not share an object vocabulary");
  }
  StateDiff d;
  for (const auto& [id, a] : before.objects) {
    const auto& b = after.objects.at(id);
    if (!same_relation(a.relation, b.relation) || a.fallen != b.fallen) {
      d.relation_changes.push_back({id, a.relation, b.relation, a.fallen, b.fallen});
    }
    if (!poses_close(a.pose, b.pose)) d.moved.push_back({id, a.pose, b.pose});
  }
  for (const auto& [id, a] : before.containers) {
    const auto& b = after.containers.at(id);
    if (a.open != b.open) d.container_changes.push_back({id, a.open, b.open});
  }
  return d;
}

StateDiff diff_snapshots(const PerceptionSnapshot& before, const PerceptionSnapshot& after) {
  StateDiff d;
  std::map<std::string, std::pair<const ObjectObservation*, const ObjectObservation*>> all;
  for (const auto& o : before.observations) all[o.id].first = &o;
  for (const auto& o : after.observations) all[o.id].second = &o;
  for (const auto& [id, pair] : all) {
    const auto* a = pair.first;
    const auto* b = pair.second;
    if (!a || !b) {
      d.relation_changes.push_back({id, a ? std::optional(a->relation) : std::nullopt,
                                    b ? std::optional(b->relation) : std::nullopt,
                                    a && a->fallen, b && b->fallen});
      continue;
    }
    if (!same_relation(a->relation, b->relation) || a->fallen != b->fallen) {
      d.relation_changes.push_back({id, a->relation, b->relation, a->fallen, b->fallen});
    }
    if (!poses_close(a->pose, b->pose)) d.moved.push_back({id, a->pose, b->pose});
  }
  std::map<std::string, std::pair<std::optional<bool>, std::optional<bool>>> cs;
  for (const auto& c : before.containers) cs[c.id].first = c.open;
  for (const auto& c : after.containers) cs[c.id].second = c.open;
  for (const auto& [id, p] : cs) {
    if (p.first && p.second && *p.first != *p.second) d.container_changes.push_back({id, *p.first, *p.second});
  }
  return d;
}

bool object_at(const WorldState& world, const SceneObject& obj, const std::string& location) {
  if (location == "table") return obj.relation.type == RelationType::OnTable && !obj.fallen;
  if (location == "belt") return obj.relation.type == RelationType::OnBelt;
  if (location == "user") return obj.relation.type == RelationType::Delivered;
  auto c = try_resolve_container(location, world, world.gripper.arm);
  return c && obj.relation.type == RelationType::Inside && obj.relation.target == *c;
}

namespace {

bool is_location_keyword(const std::string& s) { return s == "table" || s == "belt" || s == "user"; }

std::string expected_relation(const WorldState& world, const std::string& location) {
  if (location == "table") return "OnTable";
  if (location == "belt") return "OnBelt";
  if (location == "user") return "Delivered";
  auto c = try_resolve_container(location, world, world.gripper.arm);
  return "Inside(" + (c ? *c : location) + ")";
}

std::string found(const SceneObject& o) {
  return to_string(o.relation) + (o.fallen ? " (fallen)" : "");
}

// Returns the object for a selector or records an unmet entry.
const SceneObject* lookup(const WorldState& world, const std::string& selector, bool strict,
                          std::size_t index, const Condition& c, GoalEvaluation& ev) {
  auto id = try_resolve_object(selector, world, world.gripper.arm);
  if (id) return &world.objects.at(*id);
  if (strict) {
    throw WorldError(WorldErrc::UnresolvableSelector, selector, "no object matches '" + selector + "'");
  }
  ev.unmet.push_back({index, describe(c), selector + ": not visible"});
  return nullptr;
}

GoalEvaluation evaluate(const GoalPredicate& goal, const WorldState& world, bool strict) {
  GoalEvaluation ev;
  for (std::size_t i = 0; i < goal.conditions.size(); ++i) {
    const auto& c = goal.conditions[i];
    const std::size_t before = ev.unmet.size();
    auto unmet = [&](std::string detail) { ev.unmet.push_back({i, describe(c), std::move(detail)}); };
    switch (c.type) {
      case ConditionType::ObjectIn: {
        const auto* o = lookup(world, c.object, strict, i, c, ev);
        if (o && !object_at(world, *o, c.target)) {
          unmet(c.object + ": expected " + expected_relation(world, c.target) + ", found " + found(*o));
        }
        break;
      }
      case ConditionType::Delivered: {
        const auto* o = lookup(world, c.object, strict, i, c, ev);
        if (o && o->relation.type != RelationType::Delivered) {
          unmet(c.object + ": expected Delivered, found " + found(*o));
        }
        break;
      }
      case ConditionType::StackOrder: {
        const SceneObject* prev = nullptr;
        for (std::size_t k = 0; k < c.order.size(); ++k) {
          const auto* o = lookup(world, c.order[k], strict, i, c, ev);
          if (!o) break;
          if (k == 0) {
            if (o->relation.type != RelationType::OnTable || o->fallen) {
              unmet(c.order[k] + ": expected OnTable, found " + found(*o));
              break;
            }
          } else if (!(o->relation.type == RelationType::OnTopOf && o->relation.target == prev->id)) {
            unmet(c.order[k] + ": expected OnTopOf(" + prev->id + "), found " + found(*o));
            break;
          }
          prev = o;
        }
        break;
      }
      case ConditionType::BeltOrder: {
        const SceneObject* prev = nullptr;
        for (const auto& sel : c.order) {
          const auto* o = lookup(world, sel, strict, i, c, ev);
          if (!o) break;
          if (o->relation.type != RelationType::OnBelt) {
            unmet(sel + ": expected OnBelt, found " + found(*o));
            break;
          }
          if (prev && !(o->relation.offset < prev->relation.offset)) {
            unmet(sel + ": expected behind " + prev->id + " on the belt");
            break;
          }
          prev = o;
        }
        break;
      }
      case ConditionType::AttributeAt: {
        std::size_t carriers = 0;
        for (const auto& [id, o] : world.objects) {
          if (!o.attributes.contains(c.attribute)) continue;
          ++carriers;
          if (!object_at(world, o, c.target)) {
            unmet(id + " (" + c.attribute + "): expected " + expected_relation(world, c.target) + ", found " +
                  found(o));
          }
        }
        if (carriers == 0) {
          if (strict) {
            throw WorldError(WorldErrc::UnresolvableSelector, c.attribute,
                             "no object carries attribute '" + c.attribute + "'");
          }
          unmet("no visible object is " + c.attribute);
        }
        break;
      }
    }
    // Keep one entry per condition.
    if (ev.unmet.size() > before + 1) ev.unmet.resize(before + 1);
  }
  ev.satisfied = ev.unmet.empty();
  return ev;
}

}  // namespace

GoalEvaluation eval_goal(const GoalPredicate& goal, const WorldState& world) {
  return evaluate(goal, world, true);
}

GoalEvaluation eval_goal_lenient(const GoalPredicate& goal, const WorldState& world) {
  return evaluate(goal, world, false);
}

void validate_goal(const GoalPredicate& goal, const WorldState& world) {
  auto check_object = [&](const std::string& sel) {
    if (!try_resolve_object(sel, world, world.gripper.arm)) {
      throw WorldError(WorldErrc::UnresolvableSelector, sel, "goal selector '" + sel + "' matches no object");
    }
  };
  auto check_location = [&](const std::string& loc) {
    if (is_location_keyword(loc)) return;
    if (!try_resolve_container(loc, world, world.gripper.arm)) {
      throw WorldError(WorldErrc::UnresolvableSelector, loc, "goal location '" + loc + "' matches nothing");
    }
  };
  for (const auto& c : goal.conditions) {
    switch (c.type) {
      case ConditionType::ObjectIn:
        check_object(c.object);
        check_location(c.target);
        break;
      case ConditionType::Delivered:
        check_object(c.object);
        break;
      case ConditionType::StackOrder:
      case ConditionType::BeltOrder:
        if (c.order.empty()) throw WorldError(WorldErrc::UnresolvableSelector, "", "empty order list");
        for (const auto& s : c.order) check_object(s);
        break;
      case ConditionType::AttributeAt: {
        check_location(c.target);
        bool any = std::any_of(world.objects.begin(), world.objects.end(),
                               [&](const auto& kv) { return kv.second.attributes.contains(c.attribute); });
        if (!any) {
          throw WorldError(WorldErrc::UnresolvableSelector, c.attribute,
                           "no object carries attribute '" + c.attribute + "'");
        }
        break;
      }
    }
  }
}

}  // namespace replanvlm::sim

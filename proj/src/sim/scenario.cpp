#include "replanvlm/sim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "replanvlm/sim/world.hpp"

namespace replanvlm::sim {
namespace {

using nlohmann::json;

[[noreturn]] void field_error(const std::string& field, const std::string& message) {
  throw ScenarioParseError(0, field, message);
}

const json& require(const json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) field_error(path + "." + key, "missing required field");
  return j.at(key);
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) field_error(path, "expected a number");
  return j.get<double>();
}

std::string string_field(const json& j, const char* key, const std::string& path) {
  const auto& v = require(j, key, path);
  if (!v.is_string()) field_error(path + "." + key, "expected a string");
  return v.get<std::string>();
}

Vec3 vec3(const json& j, const std::string& path) {
  if (!j.is_object()) field_error(path, "expected an object with x, y, z");
  return {number(require(j, "x", path), path + ".x"), number(require(j, "y", path), path + ".y"),
          j.contains("z") ? number(j.at("z"), path + ".z") : 0.0};
}

Pose pose(const json& j, const std::string& path) {
  if (!j.is_object()) field_error(path, "expected an object with x, y, z, yaw");
  Pose p;
  p.x = number(require(j, "x", path), path + ".x");
  p.y = number(require(j, "y", path), path + ".y");
  p.z = j.contains("z") ? number(j.at("z"), path + ".z") : 0.0;
  p.yaw = j.contains("yaw") ? number(j.at("yaw"), path + ".yaw") : 0.0;
  return p;
}

Relation relation(const json& j, const std::string& path) {
  const auto type_name = string_field(j, "type", path);
  auto type = relation_type_from_string(type_name);
  if (!type) field_error(path + ".type", "unknown relation '" + type_name + "'");
  Relation r;
  r.type = *type;
  if (r.type == RelationType::OnTopOf || r.type == RelationType::Inside) {
    r.target = string_field(j, "target", path);
  }
  if (r.type == RelationType::OnBelt) r.offset = number(require(j, "offset", path), path + ".offset");
  return r;
}

std::vector<std::string> string_list(const json& j, const std::string& path) {
  if (!j.is_array()) field_error(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_string()) field_error(path + "[" + std::to_string(i) + "]", "expected a string");
    out.push_back(j[i].get<std::string>());
  }
  return out;
}

Condition condition(const json& j, const std::string& path) {
  Condition c;
  const auto type = string_field(j, "type", path);
  if (type == "ObjectIn") {
    c.type = ConditionType::ObjectIn;
    c.object = string_field(j, "object", path);
    c.target = string_field(j, "target", path);
  } else if (type == "StackOrder") {
    c.type = ConditionType::StackOrder;
    c.order = string_list(require(j, "order", path), path + ".order");
  } else if (type == "Delivered") {
    c.type = ConditionType::Delivered;
    c.object = string_field(j, "object", path);
  } else if (type == "BeltOrder") {
    c.type = ConditionType::BeltOrder;
    c.order = string_list(require(j, "order", path), path + ".order");
  } else if (type == "AttributeAt") {
    c.type = ConditionType::AttributeAt;
    c.attribute = string_field(j, "attribute", path);
    c.target = string_field(j, "zone", path);
  } else {
    field_error(path + ".type", "unknown condition '" + type + "'");
  }
  return c;
}

std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

}  // namespace

GoalPredicate goal_from_json(const json& j, const std::string& path) {
  GoalPredicate g;
  const auto& conds = require(j, "conditions", path);
  if (!conds.is_array()) field_error(path + ".conditions", "expected an array");
  for (std::size_t i = 0; i < conds.size(); ++i) {
    g.conditions.push_back(condition(conds[i], path + ".conditions[" + std::to_string(i) + "]"));
  }
  return g;
}

WorldFaultSpec fault_from_json(const json& j) {
  WorldFaultSpec f;
  const auto kind = string_field(j, "kind", "fault");
  auto k = fault_kind_from_string(kind);
  if (!k) field_error("fault.kind", "unknown fault kind '" + kind + "'");
  f.kind = *k;
  if (j.contains("at_step") && !j.at("at_step").is_null()) f.at_step = j.at("at_step").get<std::size_t>();
  if (j.contains("probability")) f.probability = number(j.at("probability"), "fault.probability");
  if (j.contains("displacement")) f.displacement = vec3(j.at("displacement"), "fault.displacement");
  if (j.contains("seed")) f.seed = j.at("seed").get<std::uint64_t>();
  f.validate();
  return f;
}

Scenario parse_scenario(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioParseError(line_of(text, e.byte == 0 ? 0 : e.byte - 1), "", e.what());
  }
  if (!root.is_object()) field_error("", "scenario must be a JSON object");

  Scenario sc;
  auto& w = sc.world;
  if (root.contains("seed")) w.rng_seed = root.at("seed").get<std::uint64_t>();

  if (root.contains("objects")) {
    const auto& objs = root.at("objects");
    if (!objs.is_array()) field_error("objects", "expected an array");
    for (std::size_t i = 0; i < objs.size(); ++i) {
      const std::string path = "objects[" + std::to_string(i) + "]";
      const auto& o = objs[i];
      SceneObject obj;
      obj.id = string_field(o, "id", path);
      obj.kind = string_field(o, "kind", path);
      obj.color = o.contains("color") ? string_field(o, "color", path) : std::string{};
      if (o.contains("attributes")) {
        for (auto& a : string_list(o.at("attributes"), path + ".attributes")) obj.attributes.insert(a);
      }
      obj.pose = o.contains("pose") ? pose(o.at("pose"), path + ".pose") : Pose{};
      obj.relation = o.contains("relation") ? relation(o.at("relation"), path + ".relation") : Relation{};
      obj.fallen = o.value("fallen", false);
      if (w.objects.contains(obj.id)) field_error(path + ".id", "duplicate object id '" + obj.id + "'");
      if (obj.relation.type == RelationType::HeldByGripper) w.gripper.holding = obj.id;
      w.objects[obj.id] = std::move(obj);
    }
  }

  if (root.contains("containers")) {
    const auto& cs = root.at("containers");
    if (!cs.is_array()) field_error("containers", "expected an array");
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const std::string path = "containers[" + std::to_string(i) + "]";
      const auto& c = cs[i];
      ContainerState st;
      st.id = string_field(c, "id", path);
      const auto kind = string_field(c, "kind", path);
      auto k = container_kind_from_string(kind);
      if (!k) field_error(path + ".kind", "unknown container kind '" + kind + "'");
      st.kind = *k;
      st.open = st.kind == ContainerKind::Drawer ? c.value("open", false) : true;
      if (st.kind != ContainerKind::Drawer && c.contains("open") && !c.at("open").get<bool>()) {
        field_error(path + ".open", "only drawers can be closed");
      }
      st.capacity = c.value("capacity", 4);
      st.pose = c.contains("pose") ? pose(c.at("pose"), path + ".pose") : Pose{};
      if (w.containers.contains(st.id) || w.objects.contains(st.id)) {
        field_error(path + ".id", "duplicate id '" + st.id + "'");
      }
      w.containers[st.id] = st;
    }
  }

  if (root.contains("belt") && !root.at("belt").is_null()) {
    const auto& b = root.at("belt");
    ConveyorBelt belt;
    belt.axis = vec3(require(b, "axis", "belt"), "belt.axis");
    belt.speed = number(require(b, "speed", "belt"), "belt.speed");
    const auto& span = require(b, "span", "belt");
    belt.start = vec3(require(span, "start", "belt.span"), "belt.span.start");
    belt.end = vec3(require(span, "end", "belt.span"), "belt.span.end");
    belt.active = b.value("active", true);
    const double n = std::sqrt(belt.axis.x * belt.axis.x + belt.axis.y * belt.axis.y + belt.axis.z * belt.axis.z);
    if (std::fabs(n - 1.0) > 1e-6) field_error("belt.axis", "axis must be a unit vector");
    if (belt.speed < 0.0) field_error("belt.speed", "speed must be non-negative");
    w.belt = belt;
  }

  if (root.contains("metadata")) {
    const auto& m = root.at("metadata");
    sc.metadata.task_id = m.value("task_id", 0);
    sc.metadata.instruction = m.value("instruction", std::string{});
    sc.metadata.ms_expected = m.value("ms_expected", 0);
  }

  validate_world(w);
  settle_poses(w);

  if (root.contains("goal")) {
    sc.goal = goal_from_json(root.at("goal"));
    validate_goal(sc.goal, w);
  }
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioParseError(0, path.string(), "cannot open scenario file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

json to_json(const Pose& p) { return {{"x", p.x}, {"y", p.y}, {"z", p.z}, {"yaw", p.yaw}}; }

json to_json(const Relation& r) {
  json j{{"type", to_string(r.type)}};
  if (r.type == RelationType::OnTopOf || r.type == RelationType::Inside) j["target"] = r.target;
  if (r.type == RelationType::OnBelt) j["offset"] = r.offset;
  return j;
}

json to_json(const Condition& c) {
  json j{{"type", to_string(c.type)}};
  switch (c.type) {
    case ConditionType::ObjectIn:
      j["object"] = c.object;
      j["target"] = c.target;
      break;
    case ConditionType::Delivered:
      j["object"] = c.object;
      break;
    case ConditionType::StackOrder:
    case ConditionType::BeltOrder:
      j["order"] = c.order;
      break;
    case ConditionType::AttributeAt:
      j["attribute"] = c.attribute;
      j["zone"] = c.target;
      break;
  }
  return j;
}

json to_json(const GoalPredicate& g) {
  json conds = json::array();
  for (const auto& c : g.conditions) conds.push_back(to_json(c));
  return {{"conditions", conds}};
}

namespace {
json vec_json(const Vec3& v) { return {{"x", v.x}, {"y", v.y}, {"z", v.z}}; }

json belt_json(const ConveyorBelt& b) {
  return {{"axis", vec_json(b.axis)},
          {"speed", b.speed},
          {"span", {{"start", vec_json(b.start)}, {"end", vec_json(b.end)}}},
          {"active", b.active}};
}

json object_json(const std::string& id, const std::string& kind, const std::string& color,
                 const std::set<std::string>& attrs, const Pose& p, const Relation& r, bool fallen) {
  json j{{"id", id},          {"kind", kind},          {"color", color},
         {"attributes", attrs}, {"pose", to_json(p)}, {"relation", to_json(r)}};
  if (fallen) j["fallen"] = true;
  return j;
}
}  // namespace

json to_json(const WorldState& w) {
  json objs = json::array();
  for (const auto& [id, o] : w.objects) {
    objs.push_back(object_json(o.id, o.kind, o.color, o.attributes, o.pose, o.relation, o.fallen));
  }
  json cs = json::array();
  for (const auto& [id, c] : w.containers) {
    cs.push_back({{"id", c.id}, {"kind", to_string(c.kind)}, {"open", c.open}, {"capacity", c.capacity},
                  {"pose", to_json(c.pose)}});
  }
  json j{{"tick", w.tick}, {"objects", objs}, {"containers", cs}, {"seed", w.rng_seed}};
  j["belt"] = w.belt ? belt_json(*w.belt) : json(nullptr);
  j["gripper"] = {{"holding", w.gripper.holding ? json(*w.gripper.holding) : json(nullptr)},
                  {"arm", to_json(w.gripper.arm)}};
  return j;
}

json to_json(const PerceptionSnapshot& s) {
  json objs = json::array();
  for (const auto& o : s.observations) {
    objs.push_back(object_json(o.id, o.kind, o.color, o.attributes, o.pose, o.relation, o.fallen));
  }
  json cs = json::array();
  for (const auto& c : s.containers) {
    cs.push_back({{"id", c.id}, {"kind", to_string(c.kind)}, {"open", c.open}, {"capacity", c.capacity},
                  {"pose", to_json(c.pose)}});
  }
  json j{{"tick", s.taken_at_tick}, {"objects", objs}, {"containers", cs}};
  j["belt"] = s.belt ? belt_json(*s.belt) : json(nullptr);
  j["holding"] = s.holding ? json(*s.holding) : json(nullptr);
  j["arm"] = to_json(s.arm);
  return j;
}

json to_json(const Event& e) {
  return {{"tick", e.tick}, {"kind", to_string(e.kind)}, {"subject", e.subject}, {"detail", e.detail}};
}

json to_json(const WorldFaultSpec& f) {
  json j{{"kind", to_string(f.kind)},
         {"probability", f.probability},
         {"displacement", vec_json(f.displacement)},
         {"seed", f.seed}};
  j["at_step"] = f.at_step ? json(*f.at_step) : json(nullptr);
  return j;
}

}  // namespace replanvlm::sim

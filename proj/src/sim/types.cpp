#include "replanvlm/sim/types.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace replanvlm::sim {

double distance(const Pose& a, const Pose& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) +
                   (a.z - b.z) * (a.z - b.z));
}

double planar_distance(const Pose& a, const Pose& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

double yaw_difference(double a, double b) {
  double d = std::fmod(std::fabs(a - b), 2.0 * std::numbers::pi);
  return d > std::numbers::pi ? 2.0 * std::numbers::pi - d : d;
}

bool poses_close(const Pose& a, const Pose& b) {
  return distance(a, b) <= kPoseTolerance && yaw_difference(a.yaw, b.yaw) <= kYawTolerance;
}

bool same_relation(const Relation& a, const Relation& b) {
  return a.type == b.type && a.target == b.target;
}

std::string to_string(RelationType t) {
  switch (t) {
    case RelationType::OnTable: return "OnTable";
    case RelationType::OnTopOf: return "OnTopOf";
    case RelationType::Inside: return "Inside";
    case RelationType::OnBelt: return "OnBelt";
    case RelationType::HeldByGripper: return "HeldByGripper";
    case RelationType::Delivered: return "Delivered";
  }
  return "?";
}

std::optional<RelationType> relation_type_from_string(const std::string& s) {
  for (auto t : {RelationType::OnTable, RelationType::OnTopOf, RelationType::Inside,
                 RelationType::OnBelt, RelationType::HeldByGripper, RelationType::Delivered}) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

std::string to_string(const Relation& r) {
  switch (r.type) {
    case RelationType::OnTopOf:
    case RelationType::Inside:
      return to_string(r.type) + "(" + r.target + ")";
    case RelationType::OnBelt: {
      std::ostringstream os;
      os.setf(std::ios::fixed);
      os.precision(3);
      os << "OnBelt(" << r.offset << ")";
      return os.str();
    }
    default:
      return to_string(r.type);
  }
}

std::string to_string(ContainerKind k) {
  switch (k) {
    case ContainerKind::Drawer: return "drawer";
    case ContainerKind::Box: return "box";
    case ContainerKind::Plate: return "plate";
  }
  return "?";
}

std::optional<ContainerKind> container_kind_from_string(const std::string& s) {
  if (s == "drawer") return ContainerKind::Drawer;
  if (s == "box") return ContainerKind::Box;
  if (s == "plate") return ContainerKind::Plate;
  return std::nullopt;
}

double ConveyorBelt::length() const {
  return std::sqrt((end.x - start.x) * (end.x - start.x) + (end.y - start.y) * (end.y - start.y) +
                   (end.z - start.z) * (end.z - start.z));
}

Pose ConveyorBelt::pose_at(double offset) const {
  return {start.x + axis.x * offset, start.y + axis.y * offset, start.z + axis.z * offset, 0.0};
}

std::string to_string(TargetKind k) {
  switch (k) {
    case TargetKind::None: return "none";
    case TargetKind::Object: return "object";
    case TargetKind::Container: return "container";
    case TargetKind::TablePose: return "table";
    case TargetKind::BeltLoad: return "belt";
    case TargetKind::User: return "user";
    case TargetKind::DrawerPull: return "pull";
    case TargetKind::Hover: return "hover";
  }
  return "?";
}

std::string to_string(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::MoveAbove: return "MoveAbove";
    case PrimitiveKind::Lower: return "Lower";
    case PrimitiveKind::CloseGripper: return "CloseGripper";
    case PrimitiveKind::Lift: return "Lift";
    case PrimitiveKind::Transfer: return "Transfer";
    case PrimitiveKind::OpenGripper: return "OpenGripper";
  }
  return "?";
}

bool is_movement(PrimitiveKind k) {
  return k == PrimitiveKind::MoveAbove || k == PrimitiveKind::Lower || k == PrimitiveKind::Lift ||
         k == PrimitiveKind::Transfer;
}

std::string to_string(const PrimitiveStep& s) {
  std::string out = to_string(s.kind);
  const auto& t = s.target;
  switch (t.kind) {
    case TargetKind::None:
      break;
    case TargetKind::Object:
    case TargetKind::Container:
    case TargetKind::DrawerPull:
      out += "(" + (t.late_bound() ? "?" + t.selector : t.id) + ")";
      break;
    case TargetKind::TablePose: {
      std::ostringstream os;
      os.setf(std::ios::fixed);
      os.precision(3);
      os << "(table@" << t.pose.x << "," << t.pose.y << ")";
      out += os.str();
      break;
    }
    default:
      out += "(" + to_string(t.kind) + ")";
  }
  return out;
}

const ObjectObservation* PerceptionSnapshot::find(const std::string& id) const {
  for (const auto& o : observations) {
    if (o.id == id) return &o;
  }
  return nullptr;
}

std::string to_string(FaultKind k) {
  switch (k) {
    case FaultKind::GripSlip: return "grip-slip";
    case FaultKind::Displace: return "displace";
    case FaultKind::DropDuringTransfer: return "drop";
  }
  return "?";
}

std::optional<FaultKind> fault_kind_from_string(const std::string& s) {
  if (s == "grip-slip" || s == "GripSlip") return FaultKind::GripSlip;
  if (s == "displace" || s == "Displace") return FaultKind::Displace;
  if (s == "drop" || s == "DropDuringTransfer") return FaultKind::DropDuringTransfer;
  return std::nullopt;
}

void WorldFaultSpec::validate() const {
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw std::invalid_argument("fault probability must lie in [0,1]");
  }
}

bool fault_applicable(FaultKind kind, PrimitiveKind step, bool holding) {
  switch (kind) {
    case FaultKind::GripSlip: return step == PrimitiveKind::CloseGripper && !holding;
    case FaultKind::DropDuringTransfer: return step == PrimitiveKind::Transfer && holding;
    case FaultKind::Displace: return step == PrimitiveKind::OpenGripper && holding;
  }
  return false;
}

std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::Grasp: return "Grasp";
    case EventKind::Release: return "Release";
    case EventKind::Collision: return "Collision";
    case EventKind::Drop: return "Drop";
    case EventKind::Fallen: return "Fallen";
    case EventKind::DrawerOpened: return "DrawerOpened";
    case EventKind::Missed: return "Missed";
    case EventKind::FaultFired: return "FaultFired";
  }
  return "?";
}

namespace {
std::string relation_or_hidden(const std::optional<Relation>& r, bool fallen) {
  if (!r) return "not visible";
  return to_string(*r) + (fallen ? "[fallen]" : "");
}
}  // namespace

std::vector<std::string> StateDiff::lines() const {
  std::vector<std::string> out;
  for (const auto& c : relation_changes) {
    out.push_back(c.id + ": " + relation_or_hidden(c.before, c.fallen_before) + " -> " +
                  relation_or_hidden(c.after, c.fallen_after));
  }
  for (const auto& m : moved) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(3);
    os << m.id << ": moved (" << m.before.x << "," << m.before.y << "," << m.before.z << ") -> ("
       << m.after.x << "," << m.after.y << "," << m.after.z << ")";
    out.push_back(os.str());
  }
  for (const auto& c : container_changes) {
    out.push_back(c.id + ": " + (c.open_before ? "open" : "closed") + " -> " +
                  (c.open_after ? "open" : "closed"));
  }
  return out;
}

std::string to_string(ConditionType t) {
  switch (t) {
    case ConditionType::ObjectIn: return "ObjectIn";
    case ConditionType::StackOrder: return "StackOrder";
    case ConditionType::Delivered: return "Delivered";
    case ConditionType::BeltOrder: return "BeltOrder";
    case ConditionType::AttributeAt: return "AttributeAt";
  }
  return "?";
}

std::string describe(const Condition& c) {
  auto join = [](const std::vector<std::string>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
    return s + "]";
  };
  switch (c.type) {
    case ConditionType::ObjectIn: return "ObjectIn(" + c.object + ", " + c.target + ")";
    case ConditionType::StackOrder: return "StackOrder(" + join(c.order) + ")";
    case ConditionType::Delivered: return "Delivered(" + c.object + ")";
    case ConditionType::BeltOrder: return "BeltOrder(" + join(c.order) + ")";
    case ConditionType::AttributeAt: return "AttributeAt(" + c.attribute + ", " + c.target + ")";
  }
  return "?";
}

std::string to_string(WorldErrc e) {
  switch (e) {
    case WorldErrc::Parse: return "ParseError";
    case WorldErrc::InvariantViolation: return "InvariantViolation";
    case WorldErrc::UnreachableTarget: return "UnreachableTarget";
    case WorldErrc::GripperBusy: return "GripperBusy";
    case WorldErrc::VocabularyMismatch: return "VocabularyMismatch";
    case WorldErrc::UnresolvableSelector: return "UnresolvableSelector";
    case WorldErrc::AmbiguousSelector: return "AmbiguousSelector";
  }
  return "?";
}

WorldError::WorldError(WorldErrc code, std::string subject, const std::string& message)
    : std::runtime_error(to_string(code) + ": " + message), code_(code), subject_(std::move(subject)) {}

ScenarioParseError::ScenarioParseError(std::size_t line, std::string field,
                                       const std::string& message)
    : WorldError(WorldErrc::Parse, field,
                 (line ? "line " + std::to_string(line) + ": " : std::string{}) +
                     (field.empty() ? std::string{} : field + ": ") + message),
      line_(line),
      field_(std::move(field)) {}

}  // namespace replanvlm::sim

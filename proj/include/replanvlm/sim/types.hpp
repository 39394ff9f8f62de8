#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace replanvlm::sim {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;

  friend bool operator==(const Pose&, const Pose&) = default;
};

double distance(const Pose& a, const Pose& b);
double planar_distance(const Pose& a, const Pose& b);
/// Absolute yaw difference wrapped into [0, pi].
double yaw_difference(double a, double b);
bool poses_close(const Pose& a, const Pose& b);

// Equality tolerances used by diff and state comparison.
inline constexpr double kPoseTolerance = 0.01;
inline constexpr double kYawTolerance = 0.05;

// Scene geometry defaults. Scenario files supply belt geometry and object poses;
// these cover what the scenario format does not carry.
inline constexpr double kObjectHeight = 0.05;
inline constexpr double kHoverHeight = 0.15;
inline constexpr double kTableSlotClearance = 0.08;
inline constexpr double kContainerClearance = 0.12;
inline constexpr double kBeltClearance = 0.10;
inline constexpr Pose kUserPose{0.0, 0.65, 0.30, 0.0};
inline constexpr Pose kHomePose{0.30, 0.0, 0.40, 0.0};

enum class RelationType { OnTable, OnTopOf, Inside, OnBelt, HeldByGripper, Delivered };

struct Relation {
  RelationType type = RelationType::OnTable;
  std::string target;   // OnTopOf / Inside
  double offset = 0.0;  // OnBelt, meters from belt start

  static Relation on_table() { return {}; }
  static Relation on_top_of(std::string id) { return {RelationType::OnTopOf, std::move(id), 0.0}; }
  static Relation inside(std::string id) { return {RelationType::Inside, std::move(id), 0.0}; }
  static Relation on_belt(double offset) { return {RelationType::OnBelt, {}, offset}; }
  static Relation held() { return {RelationType::HeldByGripper, {}, 0.0}; }
  static Relation delivered() { return {RelationType::Delivered, {}, 0.0}; }

  friend bool operator==(const Relation&, const Relation&) = default;
};

/// Type and target equality; belt offsets are geometry, not relation identity.
bool same_relation(const Relation& a, const Relation& b);
std::string to_string(const Relation& r);
std::string to_string(RelationType t);
std::optional<RelationType> relation_type_from_string(const std::string& s);

struct SceneObject {
  std::string id;
  std::string kind;
  std::string color;
  std::set<std::string> attributes;
  Pose pose;
  Relation relation;
  bool fallen = false;

  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

enum class ContainerKind { Drawer, Box, Plate };
std::string to_string(ContainerKind k);
std::optional<ContainerKind> container_kind_from_string(const std::string& s);

struct ContainerState {
  std::string id;
  ContainerKind kind = ContainerKind::Box;
  bool open = true;
  int capacity = 4;
  Pose pose;

  friend bool operator==(const ContainerState&, const ContainerState&) = default;
};

struct ConveyorBelt {
  Vec3 axis{0.0, 1.0, 0.0};
  double speed = 0.0;  // meters per primitive step
  Vec3 start;
  Vec3 end;
  bool active = true;

  double length() const;
  Pose pose_at(double offset) const;

  friend bool operator==(const ConveyorBelt&, const ConveyorBelt&) = default;
};

enum class TargetKind { None, Object, Container, TablePose, BeltLoad, User, DrawerPull, Hover };
std::string to_string(TargetKind k);

struct Target {
  TargetKind kind = TargetKind::None;
  std::string id;        // object or container id
  Pose pose;             // TablePose
  std::string selector;  // non-empty when the object is bound at execution time

  bool late_bound() const { return !selector.empty(); }

  friend bool operator==(const Target&, const Target&) = default;
};

enum class PrimitiveKind { MoveAbove, Lower, CloseGripper, Lift, Transfer, OpenGripper };
std::string to_string(PrimitiveKind k);
bool is_movement(PrimitiveKind k);

struct PrimitiveStep {
  PrimitiveKind kind = PrimitiveKind::MoveAbove;
  Target target;

  friend bool operator==(const PrimitiveStep&, const PrimitiveStep&) = default;
};
std::string to_string(const PrimitiveStep& s);

struct Gripper {
  std::optional<std::string> holding;
  std::optional<std::string> handle;  // drawer whose handle is grasped
  Pose arm = kHomePose;
  Target aligned;                      // last MoveAbove target
  std::optional<Target> transfer;      // last Transfer target since the grasp
  bool slip_pending = false;
  Relation pre_grasp_relation;
  Pose pre_grasp_pose;
  std::uint64_t grasp_tick = 0;

  friend bool operator==(const Gripper&, const Gripper&) = default;
};

struct WorldState {
  std::uint64_t tick = 0;
  std::map<std::string, SceneObject> objects;
  std::map<std::string, ContainerState> containers;
  std::optional<ConveyorBelt> belt;
  Gripper gripper;
  std::uint64_t rng_seed = 0;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct ObjectObservation {
  std::string id;
  std::string kind;
  std::string color;
  std::set<std::string> attributes;
  Pose pose;
  Relation relation;
  bool fallen = false;

  friend bool operator==(const ObjectObservation&, const ObjectObservation&) = default;
};

struct ContainerObservation {
  std::string id;
  ContainerKind kind = ContainerKind::Box;
  bool open = true;
  int capacity = 4;
  Pose pose;

  friend bool operator==(const ContainerObservation&, const ContainerObservation&) = default;
};

struct PerceptionSnapshot {
  std::uint64_t taken_at_tick = 0;
  std::vector<ObjectObservation> observations;  // id order
  std::vector<ContainerObservation> containers;  // id order
  std::optional<ConveyorBelt> belt;
  Pose arm;
  std::optional<std::string> holding;

  const ObjectObservation* find(const std::string& id) const;

  friend bool operator==(const PerceptionSnapshot&, const PerceptionSnapshot&) = default;
};

enum class FaultKind { GripSlip, Displace, DropDuringTransfer };
std::string to_string(FaultKind k);
std::optional<FaultKind> fault_kind_from_string(const std::string& s);

struct WorldFaultSpec {
  FaultKind kind = FaultKind::GripSlip;
  std::optional<std::size_t> at_step;  // primitive-step index within the faulted execution
  double probability = 0.0;            // used when at_step is unset
  Vec3 displacement{0.05, 0.05, 0.0};  // Displace only
  std::uint64_t seed = 0;

  void validate() const;

  friend bool operator==(const WorldFaultSpec&, const WorldFaultSpec&) = default;
};

/// Whether a fault of this kind can take effect on the given primitive while
/// the gripper is in the given state.
bool fault_applicable(FaultKind kind, PrimitiveKind step, bool holding);

enum class EventKind { Grasp, Release, Collision, Drop, Fallen, DrawerOpened, Missed, FaultFired };
std::string to_string(EventKind k);

struct Event {
  std::uint64_t tick = 0;
  EventKind kind = EventKind::Grasp;
  std::string subject;
  std::string detail;

  friend bool operator==(const Event&, const Event&) = default;
};

struct StepResult {
  WorldState world;
  std::vector<Event> events;
  bool fault_fired = false;
};

struct PoseChange {
  std::string id;
  Pose before;
  Pose after;
};

struct RelationChange {
  std::string id;
  std::optional<Relation> before;  // nullopt: not observed
  std::optional<Relation> after;
  bool fallen_before = false;
  bool fallen_after = false;
};

struct ContainerChange {
  std::string id;
  bool open_before = false;
  bool open_after = false;
};

struct StateDiff {
  std::vector<PoseChange> moved;
  std::vector<RelationChange> relation_changes;
  std::vector<ContainerChange> container_changes;

  bool empty() const {
    return moved.empty() && relation_changes.empty() && container_changes.empty();
  }
  /// One human-readable line per change.
  std::vector<std::string> lines() const;
};

enum class ConditionType { ObjectIn, StackOrder, Delivered, BeltOrder, AttributeAt };
std::string to_string(ConditionType t);

struct Condition {
  ConditionType type = ConditionType::ObjectIn;
  std::string object;               // ObjectIn, Delivered
  std::string target;               // ObjectIn location, AttributeAt zone
  std::vector<std::string> order;   // StackOrder (base first), BeltOrder (leading first)
  std::string attribute;            // AttributeAt

  friend bool operator==(const Condition&, const Condition&) = default;
};
std::string describe(const Condition& c);

struct GoalPredicate {
  std::vector<Condition> conditions;

  friend bool operator==(const GoalPredicate&, const GoalPredicate&) = default;
};

struct UnmetCondition {
  std::size_t index = 0;
  std::string condition;  // describe(condition)
  std::string detail;     // e.g. "red cube: expected Inside(box), found OnTable"
};

struct GoalEvaluation {
  bool satisfied = false;
  std::vector<UnmetCondition> unmet;
};

enum class WorldErrc {
  Parse,
  InvariantViolation,
  UnreachableTarget,
  GripperBusy,
  VocabularyMismatch,
  UnresolvableSelector,
  AmbiguousSelector,
};
std::string to_string(WorldErrc e);

class WorldError : public std::runtime_error {
 public:
  WorldError(WorldErrc code, std::string subject, const std::string& message);

  WorldErrc code() const noexcept { return code_; }
  const std::string& subject() const noexcept { return subject_; }

 private:
  WorldErrc code_;
  std::string subject_;
};

class ScenarioParseError : public WorldError {
 public:
  ScenarioParseError(std::size_t line, std::string field, const std::string& message);

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

}  // namespace replanvlm::sim

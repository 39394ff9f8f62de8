#include <gtest/gtest.h>

#include "replanvlm/sim/scenario.hpp"
#include "replanvlm/sim/selector.hpp"
#include "replanvlm/sim/world.hpp"
#include "test_support.hpp"

using namespace replanvlm::sim;
using replanvlm::fixtures::scenario_path;

namespace {

PrimitiveStep step(PrimitiveKind k, Target t = {}) { return {k, std::move(t)}; }
Target obj(const std::string& id) { return {TargetKind::Object, id, {}, {}}; }
Target box(const std::string& id) { return {TargetKind::Container, id, {}, {}}; }

WorldState run(WorldState w, const std::vector<PrimitiveStep>& steps, std::vector<Event>* events = nullptr) {
  for (const auto& s : steps) {
    auto r = apply_step(w, s);
    if (events) events->insert(events->end(), r.events.begin(), r.events.end());
    w = std::move(r.world);
  }
  return w;
}

bool has_event(const std::vector<Event>& ev, EventKind k) {
  return std::any_of(ev.begin(), ev.end(), [&](const Event& e) { return e.kind == k; });
}

}  // namespace

TEST(LoadScenario, Task2StackIsRedYellowBlue) {
  auto sc = load_scenario(scenario_path(2));
  const auto& o = sc.world.objects;
  EXPECT_EQ(o.at("red_cube").relation.type, RelationType::OnTable);
  EXPECT_EQ(o.at("yellow_cube").relation, Relation::on_top_of("red_cube"));
  EXPECT_EQ(o.at("blue_cube").relation, Relation::on_top_of("yellow_cube"));
  EXPECT_EQ(sc.metadata.ms_expected, 21);
}

TEST(LoadScenario, EmptyTableIsValid) {
  auto sc = load_scenario(scenario_path("empty"));
  EXPECT_TRUE(sc.world.objects.empty());
  EXPECT_NO_THROW(validate_world(sc.world));
}

TEST(LoadScenario, StackCycleIsInvariantViolation) {
  const std::string text = R"({"objects": [
    {"id": "a", "kind": "cube", "relation": {"type": "OnTopOf", "target": "b"}},
    {"id": "b", "kind": "cube", "relation": {"type": "OnTopOf", "target": "a"}}]})";
  try {
    parse_scenario(text);
    FAIL() << "expected an invariant violation";
  } catch (const WorldError& e) {
    EXPECT_EQ(e.code(), WorldErrc::InvariantViolation);
    EXPECT_TRUE(e.subject() == "a" || e.subject() == "b");
  }
}

TEST(LoadScenario, SyntaxErrorCarriesLine) {
  try {
    parse_scenario("{\n  \"objects\": [\n    oops\n  ]\n}");
    FAIL();
  } catch (const ScenarioParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(LoadScenario, FieldErrorNamesPath) {
  try {
    parse_scenario(R"({"objects": [{"id": "a", "kind": "cube", "relation": {"type": "Floating"}}]})");
    FAIL();
  } catch (const ScenarioParseError& e) {
    EXPECT_EQ(e.field(), "objects[0].relation.type");
  }
}

TEST(LoadScenario, DeterministicForIdenticalFiles) {
  EXPECT_EQ(load_scenario(scenario_path(4)).world, load_scenario(scenario_path(4)).world);
}

TEST(Snapshot, ClosedDrawerHidesBlock) {
  auto w = load_scenario(scenario_path(6)).world;
  auto s = snapshot(w);
  EXPECT_EQ(s.find("green_block"), nullptr);
  EXPECT_NE(s.find("red_block"), nullptr);
  ASSERT_EQ(s.containers.size(), 1u);
  EXPECT_FALSE(s.containers[0].open);
}

TEST(Snapshot, OpenedDrawerRevealsBlock) {
  auto w = load_scenario(scenario_path(6)).world;
  w = run(w, {step(PrimitiveKind::MoveAbove, box("drawer")), step(PrimitiveKind::Lower),
              step(PrimitiveKind::CloseGripper, box("drawer")),
              step(PrimitiveKind::Transfer, {TargetKind::DrawerPull, "drawer", {}, {}}),
              step(PrimitiveKind::OpenGripper), step(PrimitiveKind::Lift)});
  EXPECT_TRUE(w.containers.at("drawer").open);
  const auto s = snapshot(w);
  EXPECT_NE(s.find("green_block"), nullptr);
  EXPECT_EQ(w.tick, 6u);
}

TEST(Snapshot, BeltPoseTracksMotion) {
  auto w0 = load_scenario(scenario_path(4)).world;
  auto w = w0;
  for (int i = 0; i < 5; ++i) w = run(w, {step(PrimitiveKind::MoveAbove, {TargetKind::Hover, {}, {}, {}})});
  const auto s0 = snapshot(w0);
  const auto s5 = snapshot(w);
  const auto* a = s0.find("blue_cube");
  const auto* b = s5.find("blue_cube");
  ASSERT_TRUE(a && b);
  // axis is +x, speed 0.01 m per step
  EXPECT_NEAR(b->pose.x - a->pose.x, 0.05, 1e-9);
  EXPECT_NEAR(b->relation.offset, 0.35, 1e-9);
}

TEST(ApplyStep, BlockedGraspCollides) {
  auto w = load_scenario(scenario_path(2)).world;
  std::vector<Event> ev;
  w = run(w, {step(PrimitiveKind::MoveAbove, obj("red_cube")), step(PrimitiveKind::Lower),
              step(PrimitiveKind::CloseGripper, obj("red_cube"))},
          &ev);
  EXPECT_TRUE(has_event(ev, EventKind::Collision));
  EXPECT_FALSE(w.gripper.holding.has_value());
  EXPECT_EQ(w.objects.at("red_cube").relation.type, RelationType::OnTable);
}

TEST(ApplyStep, OpenWithNothingHeldIsNoop) {
  auto w = load_scenario(scenario_path(1)).world;
  auto r = apply_step(w, step(PrimitiveKind::OpenGripper));
  EXPECT_EQ(r.world.tick, w.tick + 1);
  EXPECT_EQ(r.world.objects, w.objects);
}

TEST(ApplyStep, PickPlaceSevenSteps) {
  auto w0 = load_scenario(scenario_path(3)).world;
  auto w = run(w0, {step(PrimitiveKind::MoveAbove, obj("red_block")), step(PrimitiveKind::Lower),
                    step(PrimitiveKind::CloseGripper, obj("red_block")), step(PrimitiveKind::Lift),
                    step(PrimitiveKind::Transfer, obj("yellow_block")), step(PrimitiveKind::Lower),
                    step(PrimitiveKind::OpenGripper)});
  EXPECT_EQ(w.tick, w0.tick + 7);
  EXPECT_EQ(w.objects.at("red_block").relation, Relation::on_top_of("yellow_block"));
  EXPECT_NO_THROW(validate_world(w));
}

TEST(ApplyStep, HiddenTargetUnreachable) {
  auto w = load_scenario(scenario_path(6)).world;
  try {
    apply_step(w, step(PrimitiveKind::MoveAbove, obj("green_block")));
    FAIL();
  } catch (const WorldError& e) {
    EXPECT_EQ(e.code(), WorldErrc::UnreachableTarget);
  }
  EXPECT_THROW(apply_step(w, step(PrimitiveKind::MoveAbove, obj("ghost"))), WorldError);
}

TEST(ApplyStep, CloseWhileHoldingIsBusy) {
  auto w = load_scenario(scenario_path(3)).world;
  w = run(w, {step(PrimitiveKind::MoveAbove, obj("red_block")), step(PrimitiveKind::Lower),
              step(PrimitiveKind::CloseGripper, obj("red_block"))});
  try {
    apply_step(w, step(PrimitiveKind::CloseGripper, obj("red_block")));
    FAIL();
  } catch (const WorldError& e) {
    EXPECT_EQ(e.code(), WorldErrc::GripperBusy);
  }
}

TEST(ApplyStep, GripSlipDropsAtNextMovement) {
  auto w = load_scenario(scenario_path(3)).world;
  WorldFaultSpec f;
  f.kind = FaultKind::GripSlip;
  w = run(w, {step(PrimitiveKind::MoveAbove, obj("red_block")), step(PrimitiveKind::Lower)});
  auto r = apply_step(w, step(PrimitiveKind::CloseGripper, obj("red_block")), &f);
  EXPECT_TRUE(r.fault_fired);
  EXPECT_EQ(r.world.gripper.holding, std::optional<std::string>("red_block"));
  auto after = apply_step(r.world, step(PrimitiveKind::Lift));
  EXPECT_FALSE(after.world.gripper.holding.has_value());
  EXPECT_EQ(after.world.objects.at("red_block").relation.type, RelationType::OnTable);
  EXPECT_TRUE(has_event(after.events, EventKind::Drop));
}

TEST(ApplyStep, InapplicableFaultDoesNotFire) {
  auto w = load_scenario(scenario_path(3)).world;
  WorldFaultSpec f;
  f.kind = FaultKind::DropDuringTransfer;
  auto r = apply_step(w, step(PrimitiveKind::MoveAbove, obj("red_block")), &f);
  EXPECT_FALSE(r.fault_fired);
}

TEST(ApplyStep, BeltObjectsFallAtSpanEnd) {
  auto w = load_scenario(scenario_path(4)).world;
  std::vector<Event> ev;
  std::vector<PrimitiveStep> waits(61, step(PrimitiveKind::MoveAbove, {TargetKind::Hover, {}, {}, {}}));
  w = run(w, waits, &ev);
  const auto& blue = w.objects.at("blue_cube");
  EXPECT_TRUE(blue.fallen);
  EXPECT_EQ(blue.relation.type, RelationType::OnTable);
  EXPECT_TRUE(has_event(ev, EventKind::Fallen));
  EXPECT_EQ(w.objects.at("red_cube").relation.type, RelationType::OnBelt);
  EXPECT_NO_THROW(validate_world(w));
  EXPECT_THROW(apply_step(w, step(PrimitiveKind::MoveAbove, obj("blue_cube"))), WorldError);
}

TEST(ApplyStep, DeterministicReplay) {
  auto w0 = load_scenario(scenario_path(5)).world;
  std::vector<PrimitiveStep> s{step(PrimitiveKind::MoveAbove, obj("apple")), step(PrimitiveKind::Lower),
                               step(PrimitiveKind::CloseGripper, obj("apple")), step(PrimitiveKind::Lift),
                               step(PrimitiveKind::Transfer, box("left_plate")), step(PrimitiveKind::Lower),
                               step(PrimitiveKind::OpenGripper)};
  std::vector<Event> e1, e2;
  auto a = run(w0, s, &e1);
  auto b = run(w0, s, &e2);
  EXPECT_EQ(a, b);
  EXPECT_EQ(e1, e2);
  EXPECT_EQ(a.objects.at("apple").relation, Relation::inside("left_plate"));
  EXPECT_EQ(a.objects.size(), w0.objects.size());
}

TEST(Diff, IdenticalIsEmpty) {
  auto w = load_scenario(scenario_path(2)).world;
  EXPECT_TRUE(diff(w, w).empty());
}

TEST(Diff, FailedGrabLeavesRedUnmoved) {
  auto w0 = load_scenario(scenario_path(2)).world;
  auto w = run(w0, {step(PrimitiveKind::MoveAbove, obj("red_cube")), step(PrimitiveKind::Lower),
                    step(PrimitiveKind::CloseGripper, obj("red_cube")), step(PrimitiveKind::Lift),
                    step(PrimitiveKind::Transfer, box("box")), step(PrimitiveKind::Lower),
                    step(PrimitiveKind::OpenGripper)});
  auto d = diff(w0, w);
  for (const auto& c : d.relation_changes) EXPECT_NE(c.id, "red_cube");
  for (const auto& m : d.moved) EXPECT_NE(m.id, "red_cube");
}

TEST(Diff, SuccessfulTask2ShowsRelationChange) {
  auto w0 = load_scenario(scenario_path(2)).world;
  std::vector<PrimitiveStep> s;
  for (auto id : {"blue_cube", "yellow_cube"}) {
    s.insert(s.end(), {step(PrimitiveKind::MoveAbove, obj(id)), step(PrimitiveKind::Lower),
                       step(PrimitiveKind::CloseGripper, obj(id)), step(PrimitiveKind::Lift)});
    s.insert(s.end(), {step(PrimitiveKind::Transfer, {TargetKind::TablePose, {}, free_table_pose(run(w0, s)), {}}),
                       step(PrimitiveKind::Lower), step(PrimitiveKind::OpenGripper)});
  }
  s.insert(s.end(), {step(PrimitiveKind::MoveAbove, obj("red_cube")), step(PrimitiveKind::Lower),
                     step(PrimitiveKind::CloseGripper, obj("red_cube")), step(PrimitiveKind::Lift),
                     step(PrimitiveKind::Transfer, box("box")), step(PrimitiveKind::Lower),
                     step(PrimitiveKind::OpenGripper)});
  auto w = run(w0, s);
  auto d = diff(w0, w);
  auto it = std::find_if(d.relation_changes.begin(), d.relation_changes.end(),
                         [](const RelationChange& c) { return c.id == "red_cube"; });
  ASSERT_NE(it, d.relation_changes.end());
  EXPECT_EQ(it->before->type, RelationType::OnTable);
  EXPECT_EQ(*it->after, Relation::inside("box"));
}

TEST(Diff, VocabularyMismatch) {
  auto a = load_scenario(scenario_path(1)).world;
  auto b = load_scenario(scenario_path(2)).world;
  try {
    diff(a, b);
    FAIL();
  } catch (const WorldError& e) {
    EXPECT_EQ(e.code(), WorldErrc::VocabularyMismatch);
  }
}

TEST(Diff, SubToleranceMoveSuppressed) {
  auto a = load_scenario(scenario_path(1)).world;
  auto b = a;
  b.objects.at("apple").pose.x += 0.005;
  EXPECT_TRUE(diff(a, b).empty());
  b.objects.at("apple").pose.x += 0.02;
  EXPECT_EQ(diff(a, b).moved.size(), 1u);
}

TEST(EvalGoal, Task2InitialUnmet) {
  auto sc = load_scenario(scenario_path(2));
  auto e = eval_goal(sc.goal, sc.world);
  EXPECT_FALSE(e.satisfied);
  ASSERT_EQ(e.unmet.size(), 1u);
  EXPECT_NE(e.unmet[0].condition.find("ObjectIn"), std::string::npos) << e.unmet[0].condition;
}

TEST(EvalGoal, StackOrderHoldsOnTask2Initial) {
  auto sc = load_scenario(scenario_path(2));
  GoalPredicate g;
  Condition c;
  c.type = ConditionType::StackOrder;
  c.order = {"red", "yellow", "blue"};
  g.conditions.push_back(c);
  EXPECT_TRUE(eval_goal(g, sc.world).satisfied);
  std::swap(g.conditions[0].order[0], g.conditions[0].order[2]);
  EXPECT_FALSE(eval_goal(g, sc.world).satisfied);
}

TEST(EvalGoal, UnresolvableSelectorThrows) {
  auto sc = load_scenario(scenario_path(1));
  GoalPredicate g;
  Condition c;
  c.type = ConditionType::Delivered;
  c.object = "unicorn";
  g.conditions.push_back(c);
  EXPECT_THROW(eval_goal(g, sc.world), WorldError);
  EXPECT_FALSE(eval_goal_lenient(g, sc.world).satisfied);
}

TEST(EvalGoal, CoherentWithEmptyDiff) {
  auto sc = load_scenario(scenario_path(3));
  auto b = sc.world;
  b.objects.at("red_block").pose.y += 0.004;
  ASSERT_TRUE(diff(sc.world, b).empty());
  EXPECT_EQ(eval_goal(sc.goal, sc.world).satisfied, eval_goal(sc.goal, b).satisfied);
}

TEST(Selector, NormalizesAndTieBreaks) {
  auto w = load_scenario(scenario_path(2)).world;
  EXPECT_EQ(resolve_object("the red block", w, w.gripper.arm), "red_cube");
  EXPECT_EQ(resolve_object("yellow_cube", w, w.gripper.arm), "yellow_cube");
  // all three at the same xy: blue (highest) is nearest the arm
  EXPECT_EQ(resolve_object("cube", w, w.gripper.arm), "blue_cube");
  EXPECT_FALSE(try_resolve_object("green cube", w, w.gripper.arm).has_value());
}

TEST(Selector, DescribeRoundTrips) {
  auto w = load_scenario(scenario_path(7)).world;
  for (const auto& [id, o] : w.objects) {
    auto text = describe_object(w, id, w.gripper.arm);
    EXPECT_EQ(resolve_object(text, w, w.gripper.arm), id) << text;
  }
}

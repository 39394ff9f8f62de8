#include <gtest/gtest.h>

#include "replanvlm/engine/engine.hpp"
#include "replanvlm/sim/scenario.hpp"
#include "replanvlm/sim/world.hpp"
#include "replanvlm/vlm/oracle.hpp"
#include "test_support.hpp"

using namespace replanvlm;
using namespace replanvlm::engine;
using replanvlm::fixtures::scenario_path;

namespace {

struct Loaded {
  TaskSpec task;
  sim::WorldState world;
};

Loaded load(int n) {
  auto sc = sim::load_scenario(scenario_path(n));
  Loaded l;
  l.task.id = n;
  l.task.instruction = sc.metadata.instruction;
  l.task.goal = sc.goal;
  l.task.scenario = scenario_path(n);
  l.world = sc.world;
  return l;
}

vlm::Gateway oracle(vlm::VlmFaultProfile p = {}) {
  return vlm::Gateway(std::make_shared<vlm::OracleBackend>(p), vlm::PromptLibrary::builtin());
}

EngineConfig config(std::uint64_t seed = 1) {
  EngineConfig c;
  c.seed = seed;
  return c;
}

std::vector<std::size_t> close_steps(const Loaded& l) {
  const auto s = sim::snapshot(l.world);
  const auto trace = dsl::expand(vlm::plan_oracle(s, l.task.goal).program(), s);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    if (trace.steps[i].step.kind == sim::PrimitiveKind::CloseGripper) out.push_back(i);
  }
  return out;
}

std::size_t last_close_step(const Loaded& l) { return close_steps(l).back(); }

sim::WorldFaultSpec slip_at(std::size_t step) {
  sim::WorldFaultSpec f;
  f.kind = sim::FaultKind::GripSlip;
  f.at_step = step;
  return f;
}

}  // namespace

TEST(Engine, ZeroFaultAllTasksOneRound) {
  const std::size_t steps[] = {6, 21, 14, 21, 14, 13, 7};
  auto gw = oracle();
  for (int n = 1; n <= 7; ++n) {
    auto l = load(n);
    auto rec = run_episode(l.task, l.world, gw, config(n));
    EXPECT_EQ(rec.outcome, Outcome::Success) << n;
    EXPECT_TRUE(rec.goal_satisfied) << n;
    ASSERT_EQ(rec.rounds.size(), 1u) << n;
    EXPECT_EQ(rec.rounds[0].cycles.size(), 1u);
    EXPECT_EQ(rec.total_steps, steps[n - 1]) << n;
    EXPECT_FALSE(rec.failure_injected);
    EXPECT_EQ(rec.feedback_count(), 0u);
    // decision, inner review, extra assessment
    EXPECT_EQ(rec.transcript.size(), 3u);
  }
}

TEST(Engine, OmittedBlockerCaughtAfterExecution) {
  auto l = load(2);
  vlm::VlmFaultProfile p;
  p.schedule[0] = {vlm::VlmFault::OmitBlocker};
  auto c = config();
  c.inner_enabled = false;
  auto rec = run_episode(l.task, l.world, oracle(p), c);
  ASSERT_EQ(rec.rounds.size(), 2u);
  EXPECT_EQ(rec.rounds[0].code, "pick('red cube')\nplace('box')");
  EXPECT_EQ(rec.rounds[0].extra_verdict, false);
  EXPECT_NE(rec.rounds[0].extra_reason.find("red cube"), std::string::npos) << rec.rounds[0].extra_reason;
  EXPECT_EQ(rec.rounds[1].extra_verdict, true);
  EXPECT_EQ(rec.outcome, Outcome::Success);
  EXPECT_TRUE(rec.failure_injected);
  EXPECT_TRUE(rec.failure_detected);
  EXPECT_TRUE(rec.failure_corrected);
}

TEST(Engine, OmittedBlockerCaughtBeforeExecution) {
  auto l = load(2);
  vlm::VlmFaultProfile p;
  p.schedule[0] = {vlm::VlmFault::OmitBlocker};
  auto rec = run_episode(l.task, l.world, oracle(p), config());
  ASSERT_EQ(rec.rounds.size(), 1u);
  ASSERT_EQ(rec.rounds[0].cycles.size(), 2u);
  EXPECT_FALSE(rec.rounds[0].cycles[0].check.verification_ok);
  EXPECT_TRUE(rec.rounds[0].cycles[0].check.matching_ok);
  EXPECT_EQ(rec.outcome, Outcome::Success);
  EXPECT_EQ(rec.total_steps, 21u);
  EXPECT_FALSE(rec.failure_injected);
}

TEST(Engine, PersistentDisagreementDeadlocksAtFive) {
  vlm::VlmFaultProfile p;
  p.inner_wrong_verdict = 1.0;
  auto gw = oracle(p);
  for (int n = 1; n <= 7; ++n) {
    auto l = load(n);
    auto rec = run_episode(l.task, l.world, gw, config(n));
    EXPECT_EQ(rec.outcome, Outcome::InnerDeadlock);
    ASSERT_EQ(rec.rounds.size(), 1u);
    EXPECT_EQ(rec.rounds[0].cycles.size(), 5u);
    EXPECT_FALSE(rec.rounds[0].executed);
    EXPECT_EQ(rec.total_steps, 0u);
    EXPECT_EQ(rec.feedback_count(), 5u);
  }
}

TEST(Engine, CapIsConfigurable) {
  vlm::VlmFaultProfile p;
  p.malformed_code = 1.0;
  auto l = load(1);
  auto c = config();
  c.inner_cycle_cap = 3;
  auto rec = run_episode(l.task, l.world, oracle(p), c);
  EXPECT_EQ(rec.outcome, Outcome::InnerDeadlock);
  EXPECT_EQ(rec.rounds[0].cycles.size(), 3u);
}

TEST(Engine, MalformedBlocksEvenWithoutInnerChecks) {
  vlm::VlmFaultProfile p;
  p.malformed_code = 1.0;
  auto l = load(3);
  auto c = config();
  c.inner_enabled = false;
  auto rec = run_episode(l.task, l.world, oracle(p), c);
  EXPECT_EQ(rec.outcome, Outcome::InnerDeadlock);
  EXPECT_EQ(rec.rounds[0].cycles.size(), 5u);
  EXPECT_FALSE(rec.rounds[0].cycles[0].checked);
  EXPECT_FALSE(rec.rounds[0].cycles[0].check.format_ok);
}

TEST(Engine, MismatchBlocksExecution) {
  vlm::VlmFaultProfile p;
  p.plan_code_mismatch = 1.0;
  auto gw = oracle(p);
  for (int n = 1; n <= 7; ++n) {
    auto l = load(n);
    auto rec = run_episode(l.task, l.world, gw, config(n));
    EXPECT_EQ(rec.outcome, Outcome::InnerDeadlock) << n;
    EXPECT_FALSE(rec.rounds[0].executed);
    EXPECT_FALSE(rec.rounds[0].cycles[0].check.matching_ok) << rec.rounds[0].cycles[0].check.reason;
  }
}

TEST(InnerCheck, OracleTask1Passes) {
  auto l = load(1);
  const auto s = sim::snapshot(l.world);
  auto plan = vlm::plan_oracle(s, l.task.goal);
  auto gw = oracle();
  vlm::RequestContext ctx(0, l.task.goal);
  vlm::Transcript t;
  auto c = inner_check(l.task.instruction, plan.plan_lines(), plan.code(), s, gw, ctx, t);
  EXPECT_TRUE(c.pass());
  EXPECT_EQ(c.reason, "");
  EXPECT_EQ(t.size(), 1u);
}

TEST(InnerCheck, ProseFailsFormat) {
  auto l = load(1);
  auto gw = oracle();
  vlm::RequestContext ctx(0, l.task.goal);
  vlm::Transcript t;
  auto c = inner_check(l.task.instruction, {"Grab the food"}, "grab food", sim::snapshot(l.world), gw, ctx, t);
  EXPECT_FALSE(c.format_ok);
  EXPECT_FALSE(c.pass());
  EXPECT_FALSE(c.reason.empty());
  EXPECT_TRUE(t.empty());
  EXPECT_FALSE(format_check({}, "pick('apple')").format_ok);
  EXPECT_FALSE(format_check({"x"}, "").format_ok);
}

TEST(InnerCheck, MissingBlockNamed) {
  auto l = load(3);
  const std::vector<std::string> plan{"Pick up the red block", "Place it on the yellow block", "Pick up the blue block",
                                      "Place it on the red block"};
  const std::string code = "pick('red block')\nplace('yellow block')";
  auto gw = oracle();
  vlm::RequestContext ctx(0, l.task.goal);
  vlm::Transcript t;
  auto c = inner_check(l.task.instruction, plan, code, sim::snapshot(l.world), gw, ctx, t);
  EXPECT_TRUE(c.format_ok);
  EXPECT_FALSE(c.matching_ok);
  EXPECT_NE(c.reason.find("blue block"), std::string::npos) << c.reason;
}

TEST(MatchingCheck, Alignment) {
  EXPECT_EQ(matching_check({"Pick up the apple and give it to the user"}, dsl::parse("pick('apple')\ngive()")), "");
  EXPECT_EQ(matching_check({"Open the drawer", "Grab the green cube", "Put it on the table"},
                           dsl::parse("open_drawer('drawer'); pick('green block'); place('table')")),
            "");
  EXPECT_EQ(matching_check({"Wait 3 steps"}, dsl::parse("wait(3)")), "");
  EXPECT_NE(matching_check({"Pick up the apple"}, dsl::parse("pick('apple'); give()")).find("give()"),
            std::string::npos);
  EXPECT_NE(matching_check({"Pick up the mug", "Give it to the user"}, dsl::parse("pick('apple'); give()")), "");
  EXPECT_NE(matching_check({"Give it to the user", "Pick up the apple"}, dsl::parse("pick('apple'); give()")), "");
}

TEST(ExtraAssess, UnchangedScene) {
  auto l = load(2);
  const auto s = sim::snapshot(l.world);
  auto gw = oracle();
  vlm::RequestContext ctx(0, l.task.goal);
  vlm::Transcript t;
  auto a = extra_assess(s, s, l.task, 0, {}, "", gw, ctx, t);
  EXPECT_FALSE(a.yes);
  ASSERT_TRUE(a.feedback);
  EXPECT_EQ(a.feedback->source, FeedbackSource::Extra);
  EXPECT_TRUE(a.feedback->advisory);
  EXPECT_NE(a.feedback->reason.find("red cube"), std::string::npos);
  EXPECT_NE(a.feedback->reason.find("Nothing in the scene changed"), std::string::npos) << a.feedback->reason;
}

TEST(ExtraAssess, WrongStackNamesBlueBlock) {
  auto l = load(3);
  const auto before = sim::snapshot(l.world);
  auto w = l.world;
  w.objects.at("red_block").relation = sim::Relation::on_top_of("yellow_block");
  sim::settle_poses(w);
  auto gw = oracle();
  vlm::RequestContext ctx(0, l.task.goal);
  vlm::Transcript t;
  auto a = extra_assess(before, sim::snapshot(w), l.task, 0, {}, "", gw, ctx, t);
  EXPECT_FALSE(a.yes);
  EXPECT_NE(a.feedback->reason.find("blue"), std::string::npos) << a.feedback->reason;
}

TEST(ExtraAssess, GoalStateYes) {
  auto l = load(7);
  const auto before = sim::snapshot(l.world);
  auto run = dsl::interpret(dsl::expand(dsl::parse("pick('monster toy'); place('box')"), before), l.world);
  auto gw = oracle();
  vlm::RequestContext ctx(0, l.task.goal);
  vlm::Transcript t;
  auto a = extra_assess(before, sim::snapshot(run.world), l.task, 0, {}, "", gw, ctx, t);
  EXPECT_TRUE(a.yes);
  EXPECT_FALSE(a.feedback);
}

TEST(Engine, GripSlipDetectedAndCorrected) {
  auto gw = oracle();
  for (int n = 1; n <= 7; ++n) {
    auto l = load(n);
    auto c = config(n);
    c.world_fault = slip_at(last_close_step(l));
    auto rec = run_episode(l.task, l.world, gw, c);
    EXPECT_TRUE(rec.rounds[0].world_fault_fired) << n;
    EXPECT_TRUE(rec.failure_injected) << n;
    EXPECT_TRUE(rec.failure_detected) << n;
    EXPECT_TRUE(rec.failure_corrected) << n;
    EXPECT_EQ(rec.outcome, Outcome::Success) << n;
    EXPECT_LE(rec.rounds.size(), 2u) << n;
  }
}

TEST(Engine, GripSlipAtAnyGraspCorrected) {
  auto gw = oracle();
  for (int n = 1; n <= 7; ++n) {
    auto l = load(n);
    for (auto step : close_steps(l)) {
      auto c = config(n);
      c.world_fault = slip_at(step);
      auto rec = run_episode(l.task, l.world, gw, c);
      // a slip can be harmless, e.g. the cube already leads on the belt
      EXPECT_EQ(rec.failure_injected, !rec.rounds[0].goal_met_after) << n << " @" << step;
      EXPECT_EQ(rec.failure_detected, rec.failure_injected) << n << " @" << step;
      EXPECT_TRUE(rec.goal_satisfied) << n << " @" << step;
      EXPECT_LE(rec.rounds.size(), 2u) << n << " @" << step;
    }
  }
}

TEST(Engine, FlippedAssessorMissesSlip) {
  vlm::VlmFaultProfile p;
  p.extra_wrong_verdict = 1.0;
  auto l = load(2);
  auto c = config();
  c.world_fault = slip_at(last_close_step(l));
  auto rec = run_episode(l.task, l.world, oracle(p), c);
  EXPECT_TRUE(rec.failure_injected);
  EXPECT_FALSE(rec.failure_detected);
  EXPECT_FALSE(rec.failure_corrected);
  EXPECT_EQ(rec.outcome, Outcome::Success);
  EXPECT_FALSE(rec.goal_satisfied);
}

TEST(Engine, PersistentWorldFaultExhaustsRounds) {
  auto l = load(1);
  auto c = config();
  sim::WorldFaultSpec f;
  f.kind = sim::FaultKind::GripSlip;
  f.probability = 1.0;
  c.world_fault = f;
  c.fault_rounds = FaultRounds::Every;
  auto rec = run_episode(l.task, l.world, oracle(), c);
  EXPECT_EQ(rec.outcome, Outcome::OuterExhausted);
  EXPECT_EQ(rec.rounds.size(), 5u);
  EXPECT_TRUE(rec.failure_detected);
  EXPECT_FALSE(rec.failure_corrected);
  c.outer_round_cap = 2;
  EXPECT_EQ(run_episode(l.task, l.world, oracle(), c).rounds.size(), 2u);
}

TEST(Engine, ExtraDisabledTrustsExecution) {
  auto l = load(2);
  auto c = config();
  c.extra_enabled = false;
  c.world_fault = slip_at(last_close_step(l));
  auto rec = run_episode(l.task, l.world, oracle(), c);
  ASSERT_EQ(rec.rounds.size(), 1u);
  EXPECT_FALSE(rec.rounds[0].extra_verdict.has_value());
  EXPECT_FALSE(rec.goal_satisfied);
  EXPECT_TRUE(rec.failure_injected);
  EXPECT_FALSE(rec.failure_detected);
  EXPECT_EQ(rec.outcome, rec.rounds[0].execution_error ? Outcome::OuterExhausted : Outcome::Success);
}

TEST(Engine, FeedbackGrowsAndIsAdvisory) {
  vlm::VlmFaultProfile p;
  p.omit_blocker_step = 0.5;
  p.malformed_code = 0.3;
  p.wrong_object = 0.3;
  auto gw = oracle(p);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto l = load(2);
    auto rec = run_episode(l.task, l.world, gw, config(seed));
    std::size_t failures = 0;
    for (const auto& r : rec.rounds) {
      for (const auto& cy : r.cycles) failures += cy.check.pass() ? 0 : 1;
      if (r.extra_verdict == false) ++failures;
      for (const auto& f : r.feedback) {
        EXPECT_TRUE(f.advisory);
        EXPECT_EQ(f.round, r.index);
      }
    }
    EXPECT_EQ(rec.feedback_count(), failures);
  }
}

TEST(Engine, DetectionMatchesGroundTruth) {
  vlm::VlmFaultProfile p;
  p.omit_blocker_step = 0.4;
  p.wrong_object = 0.3;
  p.malformed_code = 0.2;
  auto gw = oracle(p);
  for (int n = 1; n <= 7; ++n) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto l = load(n);
      auto c = config(seed);
      c.inner_enabled = false;
      auto rec = run_episode(l.task, l.world, gw, c);
      for (const auto& r : rec.rounds) {
        if (r.executed) EXPECT_EQ(*r.extra_verdict, r.goal_met_after);
      }
      if (rec.failure_detected) EXPECT_TRUE(rec.failure_injected);
      if (rec.failure_corrected) EXPECT_TRUE(rec.failure_detected);
      if (rec.outcome == Outcome::Success) EXPECT_TRUE(rec.goal_satisfied);
    }
  }
}

TEST(Engine, TerminatesUnderAllVariants) {
  vlm::VlmFaultProfile p;
  p.omit_blocker_step = 0.5;
  p.malformed_code = 0.5;
  p.plan_code_mismatch = 0.5;
  p.empty_output = 0.2;
  auto gw = oracle(p);
  for (int v = 0; v < 4; ++v) {
    auto l = load(5);
    auto c = config(v);
    c.inner_enabled = v & 1;
    c.extra_enabled = v & 2;
    auto rec = run_episode(l.task, l.world, gw, c);
    EXPECT_LE(rec.rounds.size(), 5u);
    for (const auto& r : rec.rounds) EXPECT_LE(r.cycles.size(), 5u);
  }
}

TEST(Engine, DeterministicLog) {
  vlm::VlmFaultProfile p;
  p.omit_blocker_step = 0.3;
  p.malformed_code = 0.2;
  auto gw = oracle(p);
  auto l = load(4);
  auto c = config(42);
  EXPECT_EQ(to_jsonl(run_episode(l.task, l.world, gw, c)), to_jsonl(run_episode(l.task, l.world, gw, c)));
  const auto line = to_jsonl(run_episode(l.task, l.world, gw, c));
  EXPECT_EQ(line.find('\n'), std::string::npos);
  auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j.at("task_id"), 4);
  EXPECT_EQ(engine_config_from_json(j.at("config")).seed, 42u);
}

TEST(Engine, BackendFailureDistinguished) {
  auto l = load(1);
  vlm::Gateway gw(std::make_shared<vlm::ScriptedBackend>(std::vector<vlm::ReplayRecord>{}), vlm::PromptLibrary::builtin());
  auto rec = run_episode(l.task, l.world, gw, config());
  EXPECT_EQ(rec.outcome, Outcome::BackendFailure);
  EXPECT_NE(rec.backend_error.find("ReplayMiss"), std::string::npos);
}

TEST(Engine, ReplayReproducesEpisode) {
  vlm::VlmFaultProfile p;
  p.omit_blocker_step = 0.5;
  p.wrong_object = 0.3;
  auto l = load(2);
  auto c = config(7);
  auto first = run_episode(l.task, l.world, oracle(p), c);
  std::vector<vlm::ReplayRecord> table;
  for (const auto& e : first.transcript) table.push_back({e.digest, e.raw, std::nullopt});
  vlm::Gateway replay(std::make_shared<vlm::ScriptedBackend>(table), vlm::PromptLibrary::builtin());
  auto again = run_episode(l.task, l.world, replay, c);
  EXPECT_EQ(again.outcome, first.outcome);
  EXPECT_EQ(again.total_steps, first.total_steps);
  EXPECT_EQ(again.rounds.size(), first.rounds.size());
}

TEST(EngineConfig, JsonAndValidation) {
  EngineConfig c;
  c.inner_enabled = false;
  c.world_fault = slip_at(3);
  c.fault_rounds = FaultRounds::Every;
  auto back = engine_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_THROW(engine_config_from_json({{"inner_cycle_cap", 0}}), std::invalid_argument);
  EXPECT_THROW(engine_config_from_json({{"bogus", 1}}), std::invalid_argument);
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 1));
  EXPECT_EQ(derive_seed(1, 2), derive_seed(1, 2));
}

#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "replanvlm/dsl/interpreter.hpp"
#include "replanvlm/sim/scenario.hpp"
#include "replanvlm/sim/world.hpp"
#include "replanvlm/vlm/backend.hpp"
#include "replanvlm/vlm/oracle.hpp"
#include "test_support.hpp"

using namespace replanvlm;
using namespace replanvlm::vlm;
using replanvlm::fixtures::scenario_path;

namespace {

sim::Scenario task(int n) { return sim::load_scenario(scenario_path(n)); }

PromptBundle decision_bundle(const sim::Scenario& sc, std::vector<std::string> feedback = {}) {
  return build_decision_prompt(sc.metadata.instruction, sim::snapshot(sc.world), feedback, PromptLibrary::builtin());
}

std::string ask_oracle(const VlmFaultProfile& p, const sim::Scenario& sc, RequestContext& ctx) {
  return OracleBackend(p).complete(decision_bundle(sc), ctx);
}

}  // namespace

TEST(Prompt, DecisionBundleHasFiveParts) {
  auto sc = task(1);
  auto b = decision_bundle(sc);
  EXPECT_FALSE(b.role_playing.empty());
  EXPECT_TRUE(b.error_messages.empty());
  EXPECT_FALSE(b.code_repository.empty());
  EXPECT_FALSE(b.cot.empty());
  EXPECT_FALSE(b.examples.empty());
  EXPECT_EQ(b.instruction, "I'm hungry");
  const auto text = serialize(b);
  for (const char* part : {"## ROLE", "## ERROR MESSAGES", "## CODE REPOSITORY", "## COT", "## EXAMPLES"}) {
    EXPECT_NE(text.find(part), std::string::npos) << part;
  }
}

TEST(Prompt, FeedbackKeptOldestFirst) {
  auto sc = task(2);
  auto b = decision_bundle(sc, {"first", "remove the yellow cube first"});
  ASSERT_EQ(b.error_messages.size(), 2u);
  EXPECT_EQ(b.error_messages[1], "remove the yellow cube first");
  const auto text = serialize(b);
  EXPECT_LT(text.find("1. first"), text.find("2. remove the yellow cube first"));
}

TEST(Prompt, DeterministicDigest) {
  auto sc = task(4);
  EXPECT_EQ(serialize(decision_bundle(sc)), serialize(decision_bundle(sc)));
  EXPECT_EQ(digest(decision_bundle(sc)), digest(decision_bundle(sc)));
  EXPECT_NE(digest(decision_bundle(sc)), digest(decision_bundle(sc, {"x"})));
  EXPECT_EQ(digest(decision_bundle(sc)).size(), 16u);
}

TEST(Prompt, FnvKnownValues) {
  // FNV-1a 64 reference values
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(Prompt, InnerAndExtraBundles) {
  auto sc = task(2);
  const auto s = sim::snapshot(sc.world);
  auto inner = build_inner_prompt("x", s, {"Pick up the red cube"}, "pick('red cube')", PromptLibrary::builtin());
  EXPECT_EQ(inner.scenes.size(), 1u);
  EXPECT_TRUE(inner.examples.empty());
  auto extra = build_extra_prompt("x", s, s, {}, "", PromptLibrary::builtin());
  EXPECT_EQ(extra.scenes.size(), 2u);
  const auto text = serialize(extra);
  EXPECT_NE(text.find("(before)"), std::string::npos);
  EXPECT_NE(text.find("## DECISION INFO"), std::string::npos);
  EXPECT_EQ(text.find("## COT"), std::string::npos);
}

TEST(PromptLibrary, LoadsShippedFile) {
  auto lib = load_prompt_library(fixtures::data_dir() / "prompts" / "library.json");
  EXPECT_FALSE(lib.examples.empty());
  for (const auto& e : lib.examples) EXPECT_NO_THROW(dsl::parse(e.code)) << e.input;
}

TEST(ParseResponse, Verdicts) {
  auto r = parse_bot_response("VERDICT: yes\nREASON: consistent", BotKind::Inner);
  EXPECT_TRUE(r.verdict);
  EXPECT_EQ(r.reason, "consistent");
  auto n = parse_bot_response("VERDICT: No\nREASON: red cube did not move\nit is blocked", BotKind::Extra);
  EXPECT_FALSE(n.verdict);
  EXPECT_EQ(n.reason, "red cube did not move\nit is blocked");
}

TEST(ParseResponse, GarbledAndMissing) {
  try {
    parse_bot_response("VERDICT: maybe\nREASON: unsure", BotKind::Inner);
    FAIL();
  } catch (const ResponseParseError& e) {
    EXPECT_EQ(e.code(), ResponseErrc::GarbledVerdict);
  }
  try {
    parse_bot_response("VERDICT: yes\nREASON: a\nVERDICT: no", BotKind::Inner);
    FAIL();
  } catch (const ResponseParseError& e) {
    EXPECT_EQ(e.code(), ResponseErrc::BothVerdicts);
  }
  try {
    parse_bot_response("VERDICT: yes", BotKind::Extra);
    FAIL();
  } catch (const ResponseParseError& e) {
    EXPECT_EQ(e.section(), "REASON");
  }
}

TEST(ParseResponse, DecisionWithoutCode) {
  try {
    parse_bot_response("PLAN:\n1. grab the food\nI think that is enough.", BotKind::Decision);
    FAIL();
  } catch (const ResponseParseError& e) {
    EXPECT_EQ(e.code(), ResponseErrc::MissingSection);
    EXPECT_EQ(e.section(), "CODE");
  }
  EXPECT_THROW(parse_bot_response("", BotKind::Decision), ResponseParseError);
}

TEST(ParseResponse, FormatRoundTrip) {
  const std::vector<std::string> plan{"Pick up the apple", "Give it to the user"};
  const std::string code = "pick('apple')\ngive()";
  auto r = parse_bot_response(format_decision(plan, code), BotKind::Decision);
  EXPECT_EQ(r.plan, plan);
  EXPECT_EQ(r.code, code);
  auto v = parse_bot_response(format_verdict(false, "blue block misplaced"), BotKind::Extra);
  EXPECT_FALSE(v.verdict);
  EXPECT_EQ(v.reason, "blue block misplaced");
  EXPECT_EQ(parse_bot_response(format_verdict(true, ""), BotKind::Inner).reason, "");
}

TEST(PlanOracle, Task2UnstacksFirst) {
  auto sc = task(2);
  auto p = plan_oracle(sim::snapshot(sc.world), sc.goal);
  EXPECT_EQ(p.code(), "pick('blue cube')\nplace('table')\npick('yellow cube')\nplace('table')\npick('red cube')\nplace('box')");
  EXPECT_EQ(dsl::count_steps(p.program(), sim::snapshot(sc.world)), 21u);
  EXPECT_EQ(p.calls[0].role, CallRole::Prerequisite);
  EXPECT_EQ(p.calls[4].role, CallRole::Goal);
  EXPECT_EQ(p.plan_lines().size(), p.calls.size());
}

TEST(PlanOracle, Task1PickGive) {
  auto sc = task(1);
  EXPECT_EQ(plan_oracle(sim::snapshot(sc.world), sc.goal).code(), "pick('apple')\ngive()");
}

TEST(PlanOracle, Task6OpensDrawer) {
  auto sc = task(6);
  auto p = plan_oracle(sim::snapshot(sc.world), sc.goal);
  EXPECT_EQ(p.code(), "open_drawer('drawer')\npick('green block')\nplace('table')");
}

TEST(PlanOracle, AllTasksReachGoal) {
  for (int n = 1; n <= 7; ++n) {
    auto sc = task(n);
    const auto s = sim::snapshot(sc.world);
    auto p = plan_oracle(s, sc.goal);
    auto r = dsl::interpret(dsl::expand(p.program(), s), sc.world);
    EXPECT_FALSE(r.error) << n;
    EXPECT_TRUE(sim::eval_goal(sc.goal, r.world).satisfied) << "task " << n << "\n" << p.code();
  }
}

TEST(PlanOracle, AbsentObjectNoPlan) {
  auto sc = task(1);
  sim::GoalPredicate g;
  sim::Condition c;
  c.type = sim::ConditionType::Delivered;
  c.object = "unicorn";
  g.conditions.push_back(c);
  EXPECT_THROW(plan_oracle(sim::snapshot(sc.world), g), NoPlanFound);
}

TEST(PlanOracle, StackPrefixKept) {
  auto sc = task(3);
  auto w = sc.world;
  w.objects.at("red_block").relation = sim::Relation::on_top_of("yellow_block");
  sim::settle_poses(w);
  auto p = plan_oracle(sim::snapshot(w), sc.goal);
  EXPECT_EQ(p.code(), "pick('blue cube')\nplace('red cube')");
}

TEST(ReviewOracle, CorrectAndMissingUnstack) {
  auto sc = task(2);
  const auto s = sim::snapshot(sc.world);
  const auto good = plan_oracle(s, sc.goal);
  auto yes = review_oracle(good.plan_lines(), good.code(), s, sc.goal);
  EXPECT_TRUE(yes.yes);
  EXPECT_EQ(yes.reason, "");
  auto no = review_oracle({"Pick up the red cube", "Place it in the box"}, "pick('red cube')\nplace('box')", s, sc.goal);
  EXPECT_FALSE(no.yes);
  EXPECT_NE(no.reason.find("red_cube"), std::string::npos) << no.reason;
}

TEST(AssessOracle, UnmovedRedCube) {
  auto sc = task(2);
  const auto s = sim::snapshot(sc.world);
  auto r = assess_oracle(s, s, sc.goal);
  EXPECT_FALSE(r.yes);
  EXPECT_NE(r.reason.find("red cube: expected Inside(box), found OnTable"), std::string::npos) << r.reason;
  EXPECT_NE(r.reason.find("remove blue_cube first"), std::string::npos) << r.reason;
}

TEST(AssessOracle, SatisfiedAfterState) {
  auto sc = task(7);
  const auto s = sim::snapshot(sc.world);
  auto run = dsl::interpret(dsl::expand(dsl::parse("pick('purple toy'); place('box')"), s), sc.world);
  EXPECT_TRUE(assess_oracle(s, sim::snapshot(run.world), sc.goal).yes);
}

TEST(OracleBackend, ZeroProfileAlwaysClean) {
  for (int n = 1; n <= 7; ++n) {
    auto sc = task(n);
    RequestContext ctx(n, sc.goal);
    const auto raw = ask_oracle({}, sc, ctx);
    auto r = parse_bot_response(raw, BotKind::Decision);
    EXPECT_NO_THROW(dsl::parse(r.code));
    EXPECT_TRUE(ctx.applied.empty());
    EXPECT_TRUE(review_oracle(r.plan, r.code, sim::snapshot(sc.world), sc.goal).yes);
    EXPECT_EQ(format_decision(r.plan, r.code), raw);
  }
}

TEST(OracleBackend, FaultsReproducible) {
  VlmFaultProfile p;
  p.omit_blocker_step = 0.3;
  p.malformed_code = 0.2;
  p.wrong_object = 0.2;
  p.plan_code_mismatch = 0.2;
  auto sc = task(2);
  auto run = [&](std::uint64_t seed) {
    RequestContext ctx(seed, sc.goal);
    std::vector<std::string> out;
    for (int i = 0; i < 30; ++i) out.push_back(ask_oracle(p, sc, ctx));
    return out;
  };
  EXPECT_EQ(run(9), run(9));
  EXPECT_NE(run(9), run(10));
}

TEST(OracleBackend, MalformedAlwaysFailsFormat) {
  VlmFaultProfile p;
  p.malformed_code = 1.0;
  for (int n = 1; n <= 7; ++n) {
    auto sc = task(n);
    RequestContext ctx(n * 7, sc.goal);
    for (int i = 0; i < 8; ++i) {
      const auto raw = ask_oracle(p, sc, ctx);
      bool ok = true;
      try {
        dsl::parse(parse_bot_response(raw, BotKind::Decision).code);
      } catch (const std::exception&) {
        ok = false;
      }
      EXPECT_FALSE(ok) << raw;
    }
  }
}

TEST(OracleBackend, OmitBlockerDropsPrefix) {
  VlmFaultProfile p;
  p.omit_blocker_step = 1.0;
  auto sc = task(2);
  RequestContext ctx(1, sc.goal);
  auto r = parse_bot_response(ask_oracle(p, sc, ctx), BotKind::Decision);
  EXPECT_EQ(r.code, "pick('red cube')\nplace('box')");
  EXPECT_EQ(r.plan.size(), 2u);
  ASSERT_EQ(ctx.applied.size(), 1u);
  EXPECT_EQ(ctx.applied[0], VlmFault::OmitBlocker);
}

TEST(OracleBackend, ScheduleForcesFault) {
  VlmFaultProfile p;
  p.schedule[1] = {VlmFault::PlanCodeMismatch};
  auto sc = task(1);
  RequestContext ctx(1, sc.goal);
  auto first = parse_bot_response(ask_oracle(p, sc, ctx), BotKind::Decision);
  EXPECT_TRUE(ctx.applied.empty());
  auto second = parse_bot_response(ask_oracle(p, sc, ctx), BotKind::Decision);
  EXPECT_EQ(second.code, "pick('apple')");
  EXPECT_EQ(second.plan.size(), 2u);
}

TEST(OracleBackend, WrongVerdictFlips) {
  VlmFaultProfile p;
  p.extra_wrong_verdict = 1.0;
  auto sc = task(2);
  const auto s = sim::snapshot(sc.world);
  RequestContext ctx(3, sc.goal);
  auto raw = OracleBackend(p).complete(build_extra_prompt("x", s, s, {}, "", PromptLibrary::builtin()), ctx);
  EXPECT_TRUE(parse_bot_response(raw, BotKind::Extra).verdict);
}

TEST(OracleBackend, NeedsGoal) {
  auto sc = task(1);
  RequestContext ctx(1, std::nullopt);
  try {
    ask_oracle({}, sc, ctx);
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.code(), GatewayErrc::MissingGoal);
  }
}

TEST(ScriptedBackend, LookupAndMiss) {
  auto sc = task(1);
  const auto b = decision_bundle(sc);
  ScriptedBackend backend({{digest(b), "first", std::nullopt}, {digest(b), "second", std::nullopt}});
  RequestContext ctx(0, std::nullopt);
  EXPECT_EQ(backend.complete(b, ctx), "first");
  EXPECT_EQ(backend.complete(b, ctx), "second");
  try {
    backend.complete(b, ctx);
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.code(), GatewayErrc::ReplayMiss);
  }
  // a fresh episode context starts over: the table itself never changes
  RequestContext again(0, std::nullopt);
  EXPECT_EQ(backend.complete(b, again), "first");
  RequestContext other(0, std::nullopt);
  EXPECT_THROW(backend.complete(decision_bundle(sc, {"x"}), other), GatewayError);
}

TEST(ScriptedBackend, LoadsFromFile) {
  auto sc = task(1);
  const auto b = decision_bundle(sc);
  const auto path = std::filesystem::temp_directory_path() / "replanvlm_replay_test.json";
  {
    std::ofstream out(path);
    out << nlohmann::json::array({{{"digest", digest(b)}, {"response", "canned"}}}).dump();
  }
  BackendConfig c;
  c.kind = BackendKind::Scripted;
  c.replay_table = path;
  auto backend = make_backend(c);
  RequestContext ctx(0, std::nullopt);
  EXPECT_EQ(backend->complete(b, ctx), "canned");
  std::filesystem::remove(path);
}

TEST(BackendConfig, JsonRoundTripAndForeignFields) {
  BackendConfig c;
  c.kind = BackendKind::Oracle;
  c.seed = 5;
  c.fault_profile.omit_blocker_step = 0.25;
  c.fault_profile.schedule[0] = {VlmFault::EmptyOutput};
  auto back = backend_config_from_json(to_json(c));
  EXPECT_EQ(back.fault_profile.omit_blocker_step, 0.25);
  EXPECT_EQ(back.fault_profile.schedule.at(0).at(0), VlmFault::EmptyOutput);
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_THROW(backend_config_from_json({{"kind", "remote"}, {"model", "m"}}), GatewayError);
  EXPECT_THROW(backend_config_from_json({{"kind", "oracle"}, {"endpoint", "http://x"}}), GatewayError);
  EXPECT_THROW(backend_config_from_json({{"kind", "oracle"}, {"fault_profile", {{"wrong_object", 1.5}}}}), GatewayError);
  EXPECT_THROW(backend_config_from_json({{"kind", "scripted"}}), GatewayError);
}

namespace {

class LocalServer {
 public:
  LocalServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

BackendConfig remote_config(const std::string& url) {
  BackendConfig c;
  c.kind = BackendKind::Remote;
  c.endpoint = url;
  c.model = "test-model";
  c.credential_env = "REPLANVLM_TEST_KEY";
  c.timeout_s = 2.0;
  c.retries = 2;
  c.backoff_s = 0.01;
  return c;
}

}  // namespace

TEST(RemoteBackend, CredentialMissingBeforeNetwork) {
  ::unsetenv("REPLANVLM_TEST_KEY");
  RemoteBackend backend(remote_config("http://127.0.0.1:1/v1/chat"));
  RequestContext ctx(0, std::nullopt);
  try {
    backend.complete(decision_bundle(task(1)), ctx);
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.code(), GatewayErrc::CredentialMissing);
  }
}

TEST(RemoteBackend, PostsChatCompletionAndRetries) {
  LocalServer srv;
  std::atomic<int> calls{0};
  nlohmann::json seen;
  std::string auth;
  srv.server().Post("/v1/chat", [&](const httplib::Request& req, httplib::Response& res) {
    if (calls++ == 0) {
      res.status = 503;
      return;
    }
    seen = nlohmann::json::parse(req.body);
    auth = req.get_header_value("Authorization");
    nlohmann::json reply{{"choices", {{{"message", {{"role", "assistant"}, {"content", "VERDICT: yes\nREASON: fine"}}}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  ::setenv("REPLANVLM_TEST_KEY", "secret", 1);
  RemoteBackend backend(remote_config(srv.url("/v1/chat")));
  RequestContext ctx(0, std::nullopt);
  auto sc = task(2);
  const auto s = sim::snapshot(sc.world);
  auto text = backend.complete(build_inner_prompt("x", s, {"p"}, "pick('red cube')", PromptLibrary::builtin()), ctx);
  EXPECT_EQ(text, "VERDICT: yes\nREASON: fine");
  EXPECT_EQ(calls.load(), 2);
  EXPECT_EQ(auth, "Bearer secret");
  EXPECT_EQ(seen.at("model"), "test-model");
  EXPECT_EQ(seen.at("messages").size(), 2u);
  EXPECT_EQ(seen.at("messages")[1].at("content")[0].at("type"), "text");
  EXPECT_TRUE(seen.contains("temperature"));
}

TEST(RemoteBackend, ClientErrorNotRetried) {
  LocalServer srv;
  std::atomic<int> calls{0};
  srv.server().Post("/v1/chat", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 401;
  });
  ::setenv("REPLANVLM_TEST_KEY", "secret", 1);
  RemoteBackend backend(remote_config(srv.url("/v1/chat")));
  RequestContext ctx(0, std::nullopt);
  try {
    backend.complete(decision_bundle(task(1)), ctx);
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.code(), GatewayErrc::RemoteHTTP);
    EXPECT_EQ(e.status(), 401);
  }
  EXPECT_EQ(calls.load(), 1);
}

TEST(RemoteBackend, PersistentServerErrorExhaustsRetries) {
  LocalServer srv;
  std::atomic<int> calls{0};
  srv.server().Post("/v1/chat", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 500;
  });
  ::setenv("REPLANVLM_TEST_KEY", "secret", 1);
  RemoteBackend backend(remote_config(srv.url("/v1/chat")));
  RequestContext ctx(0, std::nullopt);
  try {
    backend.complete(decision_bundle(task(1)), ctx);
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.code(), GatewayErrc::RemoteHTTP);
    EXPECT_EQ(e.status(), 500);
  }
  EXPECT_EQ(calls.load(), 3);
}

TEST(RemoteBackend, UnreachableIsTimeout) {
  ::setenv("REPLANVLM_TEST_KEY", "secret", 1);
  auto c = remote_config("http://127.0.0.1:9/v1/chat");
  c.retries = 1;
  RemoteBackend backend(c);
  RequestContext ctx(0, std::nullopt);
  try {
    backend.complete(decision_bundle(task(1)), ctx);
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.code(), GatewayErrc::RemoteTimeout);
  }
}

TEST(Gateway, RecordsTranscript) {
  auto sc = task(1);
  Gateway gw(std::make_shared<OracleBackend>(VlmFaultProfile{}), PromptLibrary::builtin());
  RequestContext ctx(1, sc.goal);
  Transcript t;
  const auto& e = gw.ask(decision_bundle(sc), ctx, t);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_TRUE(e.parsed.has_value());
  EXPECT_EQ(e.latency_ms, 0.0);
  EXPECT_EQ(e.digest, digest(decision_bundle(sc)));
  EXPECT_EQ(e.backend, BackendKind::Oracle);
}

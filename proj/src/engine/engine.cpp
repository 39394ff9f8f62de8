#include "replanvlm/engine/engine.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "replanvlm/sim/scenario.hpp"
#include "replanvlm/sim/selector.hpp"
#include "replanvlm/sim/world.hpp"

namespace replanvlm::engine {

using nlohmann::json;

namespace {

const std::set<std::string>& verbs(dsl::Skill s) {
  static const std::set<std::string> pick{"pick", "grab", "grasp", "take", "lift", "get"};
  static const std::set<std::string> place{"place", "put", "set", "drop", "load", "release", "stack"};
  static const std::set<std::string> give{"give", "hand", "deliver", "pass"};
  static const std::set<std::string> open{"open", "pull"};
  static const std::set<std::string> wait{"wait", "pause", "hold"};
  switch (s) {
    case dsl::Skill::Pick: return pick;
    case dsl::Skill::Place: return place;
    case dsl::Skill::Give: return give;
    case dsl::Skill::OpenDrawer: return open;
    case dsl::Skill::Wait: return wait;
  }
  return wait;
}

std::vector<std::string> line_words(const std::string& line) {
  // normalize_tokens drops digits, which "Wait 3 steps" does not need
  return sim::normalize_tokens(line);
}

bool call_matches_line(const dsl::SkillCall& call, const std::vector<std::string>& words) {
  const auto& vs = verbs(call.skill);
  if (std::none_of(words.begin(), words.end(), [&](const std::string& w) { return vs.contains(w); })) return false;
  if (call.skill == dsl::Skill::Wait || call.skill == dsl::Skill::Give) return true;
  for (const auto& t : sim::normalize_tokens(call.selector())) {
    if (std::find(words.begin(), words.end(), t) == words.end()) return false;
  }
  return true;
}

std::string quoted(const std::string& s) { return "'" + s + "'"; }

std::vector<std::string> feedback_texts(const std::vector<Feedback>& history) {
  std::vector<std::string> out;
  out.reserve(history.size());
  for (const auto& f : history) {
    out.push_back((f.source == FeedbackSource::Inner ? "Inner check: " : "Execution review (round " +
                                                                             std::to_string(f.round + 1) + "): ") +
                  f.reason);
  }
  return out;
}

std::vector<std::string> fault_names(const std::vector<vlm::VlmFault>& faults) {
  std::vector<std::string> out;
  for (auto f : faults) out.push_back(vlm::to_string(f));
  return out;
}

bool decision_fault(vlm::VlmFault f) {
  return f != vlm::VlmFault::InnerWrongVerdict && f != vlm::VlmFault::ExtraWrongVerdict;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ ((b << 29) | (b >> 35)) ^ (b * 0x9E3779B97F4A7C15ULL);
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void EngineConfig::validate() const {
  if (inner_cycle_cap < 1) throw std::invalid_argument("inner_cycle_cap must be >= 1");
  if (outer_round_cap < 1) throw std::invalid_argument("outer_round_cap must be >= 1");
  backend.validate();
  if (world_fault) world_fault->validate();
}

std::string to_string(FeedbackSource s) { return s == FeedbackSource::Inner ? "inner" : "extra"; }

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::Success: return "Success";
    case Outcome::InnerDeadlock: return "InnerDeadlock";
    case Outcome::OuterExhausted: return "OuterExhausted";
    case Outcome::BackendFailure: return "BackendFailure";
  }
  return "?";
}

std::size_t EpisodeRecord::feedback_count() const {
  std::size_t n = 0;
  for (const auto& r : rounds) n += r.feedback.size();
  return n;
}

CheckOutcome format_check(const std::vector<std::string>& plan, const std::string& code) {
  CheckOutcome out;
  try {
    dsl::parse(code);
  } catch (const dsl::DslError& e) {
    out.reason = std::string("Format check failed: the code is not valid skill code (") + e.what() +
                 "). Use only pick(object), place(location), give(), open_drawer(drawer) and wait(n), one call per line.";
    return out;
  }
  if (plan.empty()) {
    out.reason = "Format check failed: the task plan is empty.";
    return out;
  }
  out.format_ok = true;
  return out;
}

std::string matching_check(const std::vector<std::string>& plan, const dsl::ActionProgram& program) {
  const auto& calls = program.calls;
  std::size_t j = 0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto words = line_words(plan[i]);
    if (j >= calls.size() || !call_matches_line(calls[j], words)) {
      std::string reason = "Matching check failed: plan step " + std::to_string(i + 1) + " " + quoted(plan[i]);
      if (j >= calls.size()) return reason + " has no matching code call.";
      return reason + " does not match code call " + dsl::print(calls[j]) + ".";
    }
    ++j;
    while (j < calls.size() && call_matches_line(calls[j], words)) ++j;
  }
  if (j < calls.size()) {
    return "Matching check failed: code call " + dsl::print(calls[j]) + " does not appear in the task plan.";
  }
  return {};
}

CheckOutcome inner_check(const std::string& instruction, const std::vector<std::string>& plan,
                         const std::string& code, const sim::PerceptionSnapshot& snapshot,
                         const vlm::Gateway& gateway, vlm::RequestContext& ctx, vlm::Transcript& transcript) {
  CheckOutcome out = format_check(plan, code);
  if (!out.format_ok) return out;
  const auto program = dsl::parse(code);
  const auto mismatch = matching_check(plan, program);
  if (!mismatch.empty()) {
    out.reason = mismatch;
    return out;
  }
  out.matching_ok = true;

  const auto bundle = vlm::build_inner_prompt(instruction, snapshot, plan, code, gateway.library());
  const auto& entry = gateway.ask(bundle, ctx, transcript);
  if (!entry.parsed) {
    out.reason = "Verification failed: the review could not be read (" + entry.parse_error + ").";
    return out;
  }
  if (!entry.parsed->verdict) {
    out.reason = "Verification failed: " + (entry.parsed->reason.empty() ? "no reason given" : entry.parsed->reason);
    return out;
  }
  out.verification_ok = true;
  return out;
}

Assessment extra_assess(const sim::PerceptionSnapshot& before, const sim::PerceptionSnapshot& after,
                        const TaskSpec& task, int round, const std::vector<std::string>& plan,
                        const std::string& code, const vlm::Gateway& gateway, vlm::RequestContext& ctx,
                        vlm::Transcript& transcript) {
  const auto bundle = vlm::build_extra_prompt(task.instruction, before, after, plan, code, gateway.library());
  const auto& entry = gateway.ask(bundle, ctx, transcript);
  Assessment a;
  if (entry.parsed && entry.parsed->verdict) {
    a.yes = true;
    return a;
  }
  Feedback f;
  f.source = FeedbackSource::Extra;
  f.round = round;
  f.reason = entry.parsed ? entry.parsed->reason : "the assessment could not be read (" + entry.parse_error + ")";
  if (f.reason.empty()) f.reason = "the task was not completed";
  a.feedback = f;
  return a;
}

EpisodeRecord run_episode(const TaskSpec& task, const sim::WorldState& initial, const vlm::Gateway& gateway,
                          const EngineConfig& config) {
  config.validate();
  EpisodeRecord rec;
  rec.task_id = task.id;
  rec.seed = config.seed;
  rec.config = to_json(config);

  vlm::RequestContext ctx(derive_seed(config.backend.fault_profile.seed, config.seed), task.goal);
  sim::WorldState world = initial;
  std::vector<Feedback> history;
  std::optional<int> affected_round;
  bool done = false;

  auto add_feedback = [&](RoundRecord& round, Feedback f) {
    round.feedback.push_back(f);
    history.push_back(std::move(f));
  };

  try {
    for (int r = 0; r < config.outer_round_cap && !done; ++r) {
      RoundRecord round;
      round.index = r;
      round.before = sim::snapshot(world);

      // internal loop
      std::optional<dsl::ActionProgram> accepted;
      while (!accepted) {
        CycleRecord cycle;
        const auto bundle =
            vlm::build_decision_prompt(task.instruction, round.before, feedback_texts(history), gateway.library());
        const auto& entry = gateway.ask(bundle, ctx, rec.transcript);
        cycle.faults = entry.faults;
        if (!entry.parsed) {
          cycle.check.reason = "Format check failed: the reply has no readable plan and code (" + entry.parse_error + ").";
        } else {
          cycle.plan = entry.parsed->plan;
          cycle.code = entry.parsed->code;
          if (config.inner_enabled) {
            cycle.checked = true;
            cycle.check = inner_check(task.instruction, cycle.plan, cycle.code, round.before, gateway, ctx, rec.transcript);
          } else {
            // unparseable code cannot run in any variant; nothing else is checked
            cycle.check = format_check({"-"}, cycle.code);
            cycle.check.matching_ok = cycle.check.verification_ok = cycle.check.format_ok;
          }
        }
        const bool pass = cycle.check.pass();
        if (pass) {
          accepted = dsl::parse(cycle.code);
          round.plan = cycle.plan;
          round.code = cycle.code;
          for (auto f : cycle.faults) {
            if (decision_fault(f)) round.decision_faults.push_back(f);
          }
        } else {
          add_feedback(round, {FeedbackSource::Inner, r, cycle.check.reason, true});
        }
        round.cycles.push_back(std::move(cycle));
        if (!pass && static_cast<int>(round.cycles.size()) >= config.inner_cycle_cap) break;
      }
      if (!accepted) {
        rec.outcome = Outcome::InnerDeadlock;
        rec.rounds.push_back(std::move(round));
        done = true;
        break;
      }

      // execution
      round.executed = true;
      std::optional<sim::WorldFaultSpec> fault;
      if (config.world_fault && (config.fault_rounds == FaultRounds::Every || r == 0)) {
        fault = config.world_fault;
        fault->seed = derive_seed(config.world_fault->seed, derive_seed(config.seed, static_cast<std::uint64_t>(r)));
      }
      try {
        const auto trace = dsl::expand(*accepted, round.before);
        for (const auto& s : trace.steps) round.trace.push_back(sim::to_string(s.step));
        auto result = dsl::interpret(trace, world, fault);
        world = std::move(result.world);
        round.steps_applied = result.steps_applied;
        round.world_fault_fired = result.fault_fired;
        round.world_fault_step = result.fault_step;
        round.events = std::move(result.events);
        round.execution_error = result.error;
      } catch (const dsl::DslError& e) {
        round.execution_error = e.what();
      }
      rec.total_steps += round.steps_applied;
      round.after = sim::snapshot(world);
      round.goal_met_after = sim::eval_goal(task.goal, world).satisfied;
      if (!affected_round && !round.goal_met_after && (round.world_fault_fired || !round.decision_faults.empty())) {
        affected_round = r;
      }

      // external check
      if (config.extra_enabled) {
        auto a = extra_assess(round.before, *round.after, task, r, round.plan, round.code, gateway, ctx, rec.transcript);
        round.extra_verdict = a.yes;
        if (a.yes) {
          rec.outcome = Outcome::Success;
          done = true;
        } else {
          round.extra_reason = a.feedback->reason;
          add_feedback(round, *a.feedback);
        }
      } else {
        rec.outcome = round.execution_error ? Outcome::OuterExhausted : Outcome::Success;
        done = true;
      }
      rec.rounds.push_back(std::move(round));
    }
    if (!done) rec.outcome = Outcome::OuterExhausted;
  } catch (const vlm::GatewayError& e) {
    rec.outcome = Outcome::BackendFailure;
    rec.backend_error = e.what();
  }

  rec.goal_satisfied = sim::eval_goal(task.goal, world).satisfied;
  if (affected_round) {
    rec.failure_injected = true;
    const auto& r = rec.rounds.at(static_cast<std::size_t>(*affected_round));
    rec.failure_detected = r.extra_verdict.has_value() && !*r.extra_verdict;
    rec.failure_corrected = rec.failure_detected && rec.goal_satisfied;
  }
  return rec;
}

// ---- json

json to_json(const EngineConfig& c) {
  json j{{"inner_enabled", c.inner_enabled},
         {"extra_enabled", c.extra_enabled},
         {"inner_cycle_cap", c.inner_cycle_cap},
         {"outer_round_cap", c.outer_round_cap},
         {"seed", c.seed},
         {"backend", vlm::to_json(c.backend)},
         {"fault_rounds", c.fault_rounds == FaultRounds::First ? "first" : "every"}};
  j["world_fault"] = c.world_fault ? sim::to_json(*c.world_fault) : json(nullptr);
  return j;
}

EngineConfig engine_config_from_json(const json& j) {
  static const std::set<std::string> known{"inner_enabled", "extra_enabled", "inner_cycle_cap", "outer_round_cap",
                                           "seed",          "backend",       "world_fault",     "fault_rounds"};
  if (!j.is_object()) throw std::invalid_argument("engine config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw std::invalid_argument("unknown engine config field '" + k + "'");
  }
  EngineConfig c;
  c.inner_enabled = j.value("inner_enabled", c.inner_enabled);
  c.extra_enabled = j.value("extra_enabled", c.extra_enabled);
  c.inner_cycle_cap = j.value("inner_cycle_cap", c.inner_cycle_cap);
  c.outer_round_cap = j.value("outer_round_cap", c.outer_round_cap);
  c.seed = j.value("seed", c.seed);
  if (j.contains("backend")) c.backend = vlm::backend_config_from_json(j.at("backend"));
  if (j.contains("world_fault") && !j.at("world_fault").is_null()) c.world_fault = sim::fault_from_json(j.at("world_fault"));
  const auto rounds = j.value("fault_rounds", std::string("first"));
  if (rounds == "first") {
    c.fault_rounds = FaultRounds::First;
  } else if (rounds == "every") {
    c.fault_rounds = FaultRounds::Every;
  } else {
    throw std::invalid_argument("fault_rounds must be 'first' or 'every'");
  }
  c.validate();
  return c;
}

namespace {

json to_json(const CheckOutcome& c) {
  return {{"format_ok", c.format_ok}, {"matching_ok", c.matching_ok}, {"verification_ok", c.verification_ok},
          {"reason", c.reason}};
}

json to_json(const Feedback& f) {
  return {{"source", to_string(f.source)}, {"round", f.round}, {"reason", f.reason}, {"advisory", f.advisory}};
}

json to_json(const RoundRecord& r) {
  json cycles = json::array();
  for (const auto& c : r.cycles) {
    cycles.push_back({{"plan", c.plan}, {"code", c.code}, {"checked", c.checked}, {"check", to_json(c.check)},
                      {"faults", fault_names(c.faults)}});
  }
  json events = json::array();
  for (const auto& e : r.events) events.push_back(sim::to_json(e));
  json feedback = json::array();
  for (const auto& f : r.feedback) feedback.push_back(to_json(f));
  json j{{"index", r.index},
         {"before", sim::to_json(r.before)},
         {"cycles", cycles},
         {"executed", r.executed},
         {"plan", r.plan},
         {"code", r.code},
         {"trace", r.trace},
         {"steps_applied", r.steps_applied},
         {"world_fault_fired", r.world_fault_fired},
         {"decision_faults", fault_names(r.decision_faults)},
         {"events", events},
         {"goal_met_after", r.goal_met_after},
         {"extra_reason", r.extra_reason},
         {"feedback", feedback}};
  j["execution_error"] = r.execution_error ? json(*r.execution_error) : json(nullptr);
  j["world_fault_step"] = r.world_fault_step ? json(*r.world_fault_step) : json(nullptr);
  j["after"] = r.after ? sim::to_json(*r.after) : json(nullptr);
  j["extra_verdict"] = r.extra_verdict ? json(*r.extra_verdict) : json(nullptr);
  return j;
}

}  // namespace

json to_json(const EpisodeRecord& e) {
  json rounds = json::array();
  for (const auto& r : e.rounds) rounds.push_back(to_json(r));
  json transcript = json::array();
  for (const auto& t : e.transcript) transcript.push_back(vlm::to_json(t));
  return {{"task_id", e.task_id},
          {"seed", e.seed},
          {"outcome", to_string(e.outcome)},
          {"total_steps", e.total_steps},
          {"goal_satisfied", e.goal_satisfied},
          {"failure_injected", e.failure_injected},
          {"failure_detected", e.failure_detected},
          {"failure_corrected", e.failure_corrected},
          {"backend_error", e.backend_error},
          {"config", e.config},
          {"rounds", rounds},
          {"transcript", transcript}};
}

std::string to_jsonl(const EpisodeRecord& e) { return to_json(e).dump(); }

}  // namespace replanvlm::engine

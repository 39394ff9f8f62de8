#include "replanvlm/vlm/backend.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

#include "replanvlm/sim/selector.hpp"
#include "replanvlm/sim/world.hpp"
#include "replanvlm/vlm/oracle.hpp"

namespace replanvlm::vlm {

using nlohmann::json;

std::string to_string(BackendKind k) {
  switch (k) {
    case BackendKind::Scripted: return "scripted";
    case BackendKind::Oracle: return "oracle";
    case BackendKind::Remote: return "remote";
  }
  return "?";
}

std::optional<BackendKind> backend_kind_from_string(const std::string& s) {
  for (auto k : {BackendKind::Scripted, BackendKind::Oracle, BackendKind::Remote}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

namespace {
constexpr VlmFault kAllFaults[] = {VlmFault::EmptyOutput,       VlmFault::MalformedCode,       VlmFault::OmitBlocker,
                                   VlmFault::WrongObject,       VlmFault::PlanCodeMismatch,    VlmFault::InnerWrongVerdict,
                                   VlmFault::ExtraWrongVerdict};
}

std::string to_string(VlmFault f) {
  switch (f) {
    case VlmFault::EmptyOutput: return "empty_output";
    case VlmFault::MalformedCode: return "malformed_code";
    case VlmFault::OmitBlocker: return "omit_blocker";
    case VlmFault::WrongObject: return "wrong_object";
    case VlmFault::PlanCodeMismatch: return "plan_code_mismatch";
    case VlmFault::InnerWrongVerdict: return "inner_wrong_verdict";
    case VlmFault::ExtraWrongVerdict: return "extra_wrong_verdict";
  }
  return "?";
}

std::optional<VlmFault> vlm_fault_from_string(const std::string& s) {
  for (auto f : kAllFaults) {
    if (to_string(f) == s) return f;
  }
  if (s == "omit_blocker_step") return VlmFault::OmitBlocker;
  return std::nullopt;
}

std::string to_string(GatewayErrc e) {
  switch (e) {
    case GatewayErrc::Config: return "ConfigError";
    case GatewayErrc::ReplayMiss: return "ReplayMiss";
    case GatewayErrc::RemoteTimeout: return "RemoteTimeout";
    case GatewayErrc::RemoteHTTP: return "RemoteHTTP";
    case GatewayErrc::CredentialMissing: return "CredentialMissing";
    case GatewayErrc::MissingGoal: return "MissingGoal";
  }
  return "?";
}

GatewayError::GatewayError(GatewayErrc code, const std::string& message, int status)
    : std::runtime_error(to_string(code) + (code == GatewayErrc::RemoteHTTP ? "(" + std::to_string(status) + ")" : "") +
                         ": " + message),
      code_(code),
      status_(status) {}

void VlmFaultProfile::validate() const {
  for (double p : {omit_blocker_step, wrong_object, malformed_code, plan_code_mismatch, empty_output,
                   inner_wrong_verdict, extra_wrong_verdict}) {
    if (!(p >= 0.0 && p <= 1.0)) throw GatewayError(GatewayErrc::Config, "fault probabilities must lie in [0, 1]");
  }
}

bool VlmFaultProfile::zero() const {
  return omit_blocker_step == 0 && wrong_object == 0 && malformed_code == 0 && plan_code_mismatch == 0 &&
         empty_output == 0 && inner_wrong_verdict == 0 && extra_wrong_verdict == 0 && schedule.empty();
}

void BackendConfig::validate() const {
  switch (kind) {
    case BackendKind::Oracle: fault_profile.validate(); break;
    case BackendKind::Scripted:
      if (replay_table.empty()) throw GatewayError(GatewayErrc::Config, "scripted backend needs replay_table");
      break;
    case BackendKind::Remote:
      if (endpoint.empty()) throw GatewayError(GatewayErrc::Config, "remote backend needs endpoint");
      if (model.empty()) throw GatewayError(GatewayErrc::Config, "remote backend needs model");
      if (credential_env.empty()) throw GatewayError(GatewayErrc::Config, "credential_env must not be empty");
      if (timeout_s <= 0) throw GatewayError(GatewayErrc::Config, "timeout_s must be positive");
      if (retries < 0) throw GatewayError(GatewayErrc::Config, "retries must be non-negative");
      break;
  }
}

RequestContext::RequestContext(std::uint64_t fault_seed, std::optional<sim::GoalPredicate> goal_hint)
    : goal(std::move(goal_hint)), rng(fault_seed) {}

double RequestContext::draw() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// ---- scripted

ScriptedBackend::ScriptedBackend(std::vector<ReplayRecord> table) {
  for (auto& r : table) by_digest_[r.digest].push_back(std::move(r));
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw GatewayError(GatewayErrc::Config, "cannot open replay table " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw GatewayError(GatewayErrc::Config, "replay table " + path.string() + ": " + e.what());
  }
  const json& records = j.is_object() ? j.at("records") : j;
  std::vector<ReplayRecord> table;
  for (const auto& r : records) {
    ReplayRecord rec{r.at("digest").get<std::string>(), r.at("response").get<std::string>(), std::nullopt};
    if (r.contains("occurrence")) rec.occurrence = r.at("occurrence").get<std::size_t>();
    table.push_back(std::move(rec));
  }
  return ScriptedBackend(std::move(table));
}

std::string ScriptedBackend::complete(const PromptBundle& bundle, RequestContext& ctx) const {
  const auto d = digest(bundle);
  const std::size_t n = ctx.occurrences[d]++;
  auto it = by_digest_.find(d);
  if (it != by_digest_.end()) {
    for (const auto& r : it->second) {
      if (r.occurrence == n) return r.response;
    }
    std::size_t k = 0;
    for (const auto& r : it->second) {
      if (r.occurrence) continue;
      if (k++ == n) return r.response;
    }
  }
  throw GatewayError(GatewayErrc::ReplayMiss,
                     "no " + to_string(bundle.bot) + " response for digest " + d + " (occurrence " + std::to_string(n) + ")");
}

// ---- oracle

OracleBackend::OracleBackend(VlmFaultProfile profile) : profile_(std::move(profile)) { profile_.validate(); }

namespace {

bool forced(const VlmFaultProfile& p, std::size_t ordinal, VlmFault f) {
  auto it = p.schedule.find(ordinal);
  return it != p.schedule.end() && std::find(it->second.begin(), it->second.end(), f) != it->second.end();
}

std::set<std::string> goal_objects(const sim::GoalPredicate& goal, const sim::WorldState& w) {
  std::set<std::string> ids;
  auto add = [&](const std::string& sel) {
    for (const auto& [id, o] : w.objects) {
      if (sim::object_matches(sel, o)) ids.insert(id);
    }
  };
  for (const auto& c : goal.conditions) {
    if (!c.object.empty()) add(c.object);
    for (const auto& s : c.order) add(s);
    if (c.type == sim::ConditionType::AttributeAt) {
      for (const auto& [id, o] : w.objects) {
        if (o.attributes.contains(c.attribute)) ids.insert(id);
      }
    }
  }
  return ids;
}

std::string malformed(const OraclePlan& plan, int variant) {
  const auto code = plan.code();
  switch (variant) {
    case 0: {
      std::string first = plan.calls.empty() ? "finish the task" : plan.calls.front().line;
      if (!first.empty()) first[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(first[0])));
      return "I will " + first + " and then complete the rest of the request.";
    }
    case 1: return "for obj in target_objects:\n    pick(obj)\n    place(destination)";
    case 2: {
      auto p = code.rfind(')');
      return p == std::string::npos ? "pick(" : code.substr(0, p) + code.substr(p + 1);
    }
    default: return "";
  }
}

}  // namespace

std::string OracleBackend::decide(const PromptBundle& bundle, RequestContext& ctx) const {
  const auto& snap = bundle.scenes.at(0);
  const std::size_t ordinal = ctx.decision_requests++;
  double u[5];
  for (double& x : u) x = ctx.draw();
  auto hit = [&](VlmFault f, double draw, double p) { return forced(profile_, ordinal, f) || draw < p; };

  OraclePlan plan;
  try {
    plan = plan_oracle(snap, *ctx.goal);
  } catch (const NoPlanFound& e) {
    return format_decision({std::string("No plan reaches the goal: ") + e.what()}, "");
  }

  if (hit(VlmFault::EmptyOutput, u[0], profile_.empty_output)) {
    ctx.applied.push_back(VlmFault::EmptyOutput);
    return "";
  }
  if (hit(VlmFault::MalformedCode, u[1], profile_.malformed_code)) {
    ctx.applied.push_back(VlmFault::MalformedCode);
    const int variant = u[1] < profile_.malformed_code
                            ? std::min(3, static_cast<int>(std::floor(u[1] / profile_.malformed_code * 4.0)))
                            : static_cast<int>(ordinal % 4);
    return format_decision(plan.plan_lines(), malformed(plan, variant));
  }
  if (hit(VlmFault::OmitBlocker, u[2], profile_.omit_blocker_step)) {
    const auto before = plan.calls.size();
    std::erase_if(plan.calls, [](const PlannedCall& c) { return c.role == CallRole::Prerequisite; });
    if (plan.calls.size() != before) ctx.applied.push_back(VlmFault::OmitBlocker);
  }
  if (hit(VlmFault::WrongObject, u[3], profile_.wrong_object)) {
    const auto world = sim::world_from_snapshot(snap);
    const auto needed = goal_objects(*ctx.goal, world);
    auto target = std::find_if(plan.calls.begin(), plan.calls.end(), [](const PlannedCall& c) {
      return c.role == CallRole::Goal && c.call.skill == dsl::Skill::Pick;
    });
    std::optional<std::string> decoy;
    for (const auto& [id, o] : world.objects) {
      if (!needed.contains(id) && !o.fallen && o.relation.type != sim::RelationType::Delivered) {
        decoy = id;
        break;
      }
    }
    if (target != plan.calls.end() && decoy) {
      target->call.args = {sim::describe_object(world, *decoy, world.gripper.arm)};
      target->line = plan_line(target->call);
      ctx.applied.push_back(VlmFault::WrongObject);
    }
  }
  std::string code = plan.code();
  if (hit(VlmFault::PlanCodeMismatch, u[4], profile_.plan_code_mismatch) && !plan.calls.empty()) {
    OraclePlan shorter = plan;
    shorter.calls.pop_back();
    code = shorter.code();
    ctx.applied.push_back(VlmFault::PlanCodeMismatch);
  }
  return format_decision(plan.plan_lines(), code);
}

std::string OracleBackend::complete(const PromptBundle& bundle, RequestContext& ctx) const {
  if (!ctx.goal) throw GatewayError(GatewayErrc::MissingGoal, "oracle backend needs the task goal in the request context");
  switch (bundle.bot) {
    case BotKind::Decision: return decide(bundle, ctx);
    case BotKind::Inner: {
      const double u = ctx.draw();
      auto r = review_oracle(bundle.plan, bundle.code, bundle.scenes.at(0), *ctx.goal);
      if (u < profile_.inner_wrong_verdict) {
        ctx.applied.push_back(VlmFault::InnerWrongVerdict);
        r = r.yes ? Review{false, "the plan and code do not look consistent with the scene"} : Review{true, ""};
      }
      return format_verdict(r.yes, r.reason);
    }
    case BotKind::Extra: {
      const double u = ctx.draw();
      auto r = assess_oracle(bundle.scenes.at(0), bundle.scenes.at(1), *ctx.goal);
      if (u < profile_.extra_wrong_verdict) {
        ctx.applied.push_back(VlmFault::ExtraWrongVerdict);
        r = r.yes ? Review{false, "the scene does not look like the requested result"} : Review{true, ""};
      }
      return format_verdict(r.yes, r.reason);
    }
  }
  return {};
}

std::shared_ptr<const Backend> make_backend(const BackendConfig& config) {
  config.validate();
  switch (config.kind) {
    case BackendKind::Oracle: return std::make_shared<OracleBackend>(config.fault_profile);
    case BackendKind::Scripted: return std::make_shared<ScriptedBackend>(ScriptedBackend::from_file(config.replay_table));
    case BackendKind::Remote: return std::make_shared<RemoteBackend>(config);
  }
  return nullptr;
}

// ---- json

json to_json(const VlmFaultProfile& p) {
  json j{{"omit_blocker_step", p.omit_blocker_step},   {"wrong_object", p.wrong_object},
         {"malformed_code", p.malformed_code},         {"plan_code_mismatch", p.plan_code_mismatch},
         {"empty_output", p.empty_output},             {"inner_wrong_verdict", p.inner_wrong_verdict},
         {"extra_wrong_verdict", p.extra_wrong_verdict}, {"seed", p.seed}};
  if (!p.schedule.empty()) {
    json s = json::object();
    for (const auto& [n, faults] : p.schedule) {
      json names = json::array();
      for (auto f : faults) names.push_back(to_string(f));
      s[std::to_string(n)] = names;
    }
    j["schedule"] = s;
  }
  return j;
}

VlmFaultProfile fault_profile_from_json(const json& j) {
  if (!j.is_object()) throw GatewayError(GatewayErrc::Config, "fault_profile must be an object");
  VlmFaultProfile p;
  for (const auto& [key, v] : j.items()) {
    if (key == "seed") {
      p.seed = v.get<std::uint64_t>();
    } else if (key == "schedule") {
      for (const auto& [n, names] : v.items()) {
        auto& list = p.schedule[std::stoul(n)];
        for (const auto& name : names) {
          auto f = vlm_fault_from_string(name.get<std::string>());
          if (!f) throw GatewayError(GatewayErrc::Config, "unknown fault '" + name.get<std::string>() + "'");
          list.push_back(*f);
        }
      }
    } else {
      double* slot = key == "omit_blocker_step" || key == "omit_blocker" ? &p.omit_blocker_step
                     : key == "wrong_object"                            ? &p.wrong_object
                     : key == "malformed_code"                          ? &p.malformed_code
                     : key == "plan_code_mismatch"                      ? &p.plan_code_mismatch
                     : key == "empty_output"                            ? &p.empty_output
                     : key == "inner_wrong_verdict"                     ? &p.inner_wrong_verdict
                     : key == "extra_wrong_verdict"                     ? &p.extra_wrong_verdict
                                                                        : nullptr;
      if (!slot) throw GatewayError(GatewayErrc::Config, "unknown fault_profile field '" + key + "'");
      if (!v.is_number()) throw GatewayError(GatewayErrc::Config, "fault_profile." + key + " must be a number");
      *slot = v.get<double>();
    }
  }
  p.validate();
  return p;
}

json to_json(const BackendConfig& c) {
  json j{{"kind", to_string(c.kind)}, {"seed", c.seed}};
  switch (c.kind) {
    case BackendKind::Oracle: j["fault_profile"] = to_json(c.fault_profile); break;
    case BackendKind::Scripted: j["replay_table"] = c.replay_table.string(); break;
    case BackendKind::Remote: {
      j["endpoint"] = c.endpoint;
      j["model"] = c.model;
      j["credential_env"] = c.credential_env;
      j["timeout_s"] = c.timeout_s;
      j["retries"] = c.retries;
      j["backoff_s"] = c.backoff_s;
      j["temperature"] = c.temperature;
      json imgs = json::array();
      for (const auto& p : c.images) imgs.push_back(p.string());
      j["images"] = imgs;
      break;
    }
  }
  return j;
}

BackendConfig backend_config_from_json(const json& j) {
  if (!j.is_object()) throw GatewayError(GatewayErrc::Config, "backend config must be an object");
  BackendConfig c;
  const auto kind_name = j.value("kind", std::string("oracle"));
  auto kind = backend_kind_from_string(kind_name);
  if (!kind) throw GatewayError(GatewayErrc::Config, "unknown backend kind '" + kind_name + "'");
  c.kind = *kind;
  static const std::map<BackendKind, std::set<std::string>> allowed{
      {BackendKind::Oracle, {"fault_profile"}},
      {BackendKind::Scripted, {"replay_table"}},
      {BackendKind::Remote,
       {"endpoint", "model", "credential_env", "timeout_s", "retries", "backoff_s", "temperature", "images"}},
  };
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "kind") continue;
      if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
        continue;
      }
      if (!allowed.at(c.kind).contains(key)) {
        throw GatewayError(GatewayErrc::Config, "field '" + key + "' does not apply to a " + kind_name + " backend");
      }
      if (key == "fault_profile") c.fault_profile = fault_profile_from_json(v);
      if (key == "replay_table") c.replay_table = v.get<std::string>();
      if (key == "endpoint") c.endpoint = v.get<std::string>();
      if (key == "model") c.model = v.get<std::string>();
      if (key == "credential_env") c.credential_env = v.get<std::string>();
      if (key == "timeout_s") c.timeout_s = v.get<double>();
      if (key == "retries") c.retries = v.get<int>();
      if (key == "backoff_s") c.backoff_s = v.get<double>();
      if (key == "temperature") c.temperature = v.get<double>();
      if (key == "images") {
        for (const auto& p : v) c.images.emplace_back(p.get<std::string>());
      }
    }
  } catch (const json::exception& e) {
    throw GatewayError(GatewayErrc::Config, std::string("backend config: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const TranscriptEntry& e) {
  json faults = json::array();
  for (auto f : e.faults) faults.push_back(to_string(f));
  json j{{"bot", to_string(e.bot)},   {"digest", e.digest},           {"raw", e.raw},
         {"latency_ms", e.latency_ms}, {"backend", to_string(e.backend)}, {"faults", faults}};
  if (e.parsed) {
    if (e.bot == BotKind::Decision) {
      j["parsed"] = {{"plan", e.parsed->plan}, {"code", e.parsed->code}};
    } else {
      j["parsed"] = {{"verdict", e.parsed->verdict ? "yes" : "no"}, {"reason", e.parsed->reason}};
    }
  } else {
    j["parse_error"] = e.parse_error;
  }
  return j;
}

// ---- gateway

Gateway::Gateway(std::shared_ptr<const Backend> backend, PromptLibrary library)
    : backend_(std::move(backend)), library_(std::move(library)) {}

const TranscriptEntry& Gateway::ask(const PromptBundle& bundle, RequestContext& ctx, Transcript& transcript) const {
  TranscriptEntry e;
  e.bot = bundle.bot;
  e.digest = digest(bundle);
  e.backend = backend_->kind();
  ctx.applied.clear();
  const auto t0 = std::chrono::steady_clock::now();
  e.raw = backend_->complete(bundle, ctx);
  // Local backends report zero latency so logs stay byte-identical.
  if (e.backend == BackendKind::Remote) {
    e.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
  e.faults = ctx.applied;
  try {
    e.parsed = parse_bot_response(e.raw, bundle.bot);
  } catch (const ResponseParseError& err) {
    e.parse_error = err.what();
  }
  transcript.push_back(std::move(e));
  return transcript.back();
}

}  // namespace replanvlm::vlm

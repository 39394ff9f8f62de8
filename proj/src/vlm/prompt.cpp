#include "replanvlm/vlm/prompt.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace replanvlm::vlm {

using nlohmann::json;

std::string to_string(BotKind b) {
  switch (b) {
    case BotKind::Decision: return "decision";
    case BotKind::Inner: return "inner";
    case BotKind::Extra: return "extra";
  }
  return "?";
}

PromptLibrary PromptLibrary::builtin() {
  PromptLibrary lib;
  lib.decision_role =
      "You are the Decision Bot of a robot arm working at a table. Read the scene and the user's request, "
      "then write a numbered task plan and the skill code that carries it out.";
  lib.inner_role =
      "You are the Inner Bot. Before anything runs, review the Decision Bot's plan and code against the scene. "
      "Answer yes only if the code is well formed, matches the plan step by step, and achieves the request.";
  lib.extra_role =
      "You are the Extra Bot. Compare the scene before and after the robot acted and decide whether the "
      "request has been fulfilled. If not, say what went wrong.";
  lib.code_repository =
      "pick(object)        # move above the object, lower, close the gripper, lift\n"
      "place(location)     # carry the held object to a container, another object, 'table' or 'belt'\n"
      "give()              # hand the held object to the user\n"
      "open_drawer(drawer) # pull a drawer open so its contents become visible\n"
      "wait(n)             # hold position for n steps";
  lib.cot =
      "Think step by step: identify the objects the request refers to, check what rests on top of them or hides "
      "them, clear those first, then move each object to where it belongs.";
  lib.examples = {
      {"Give me something to drink", {"Pick up the cola", "Give it to the user"}, "pick('cola')\ngive()"},
      {"Put the green cube in the box",
       {"Pick up the red cube", "Place it on the table", "Pick up the green cube", "Place it in the box"},
       "pick('red cube')\nplace('table')\npick('green cube')\nplace('box')"},
  };
  return lib;
}

PromptLibrary load_prompt_library(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open prompt library " + path.string());
  const json j = json::parse(in);
  PromptLibrary lib = PromptLibrary::builtin();
  lib.decision_role = j.value("decision_role", lib.decision_role);
  lib.inner_role = j.value("inner_role", lib.inner_role);
  lib.extra_role = j.value("extra_role", lib.extra_role);
  lib.code_repository = j.value("code_repository", lib.code_repository);
  lib.cot = j.value("cot", lib.cot);
  if (j.contains("examples")) {
    lib.examples.clear();
    for (const auto& e : j.at("examples")) {
      lib.examples.push_back(
          {e.at("input").get<std::string>(), e.at("plan").get<std::vector<std::string>>(), e.at("code").get<std::string>()});
    }
  }
  return lib;
}

PromptBundle build_decision_prompt(const std::string& instruction, const sim::PerceptionSnapshot& snapshot,
                                   const std::vector<std::string>& feedback, const PromptLibrary& lib) {
  PromptBundle b;
  b.bot = BotKind::Decision;
  b.role_playing = lib.decision_role;
  b.error_messages = feedback;
  b.code_repository = lib.code_repository;
  b.cot = lib.cot;
  b.examples = lib.examples;
  b.scenes = {snapshot};
  b.instruction = instruction;
  return b;
}

PromptBundle build_inner_prompt(const std::string& instruction, const sim::PerceptionSnapshot& snapshot,
                                const std::vector<std::string>& plan, const std::string& code,
                                const PromptLibrary& lib) {
  PromptBundle b;
  b.bot = BotKind::Inner;
  b.role_playing = lib.inner_role;
  b.scenes = {snapshot};
  b.plan = plan;
  b.code = code;
  b.instruction = instruction;
  return b;
}

PromptBundle build_extra_prompt(const std::string& instruction, const sim::PerceptionSnapshot& before,
                                const sim::PerceptionSnapshot& after, const std::vector<std::string>& plan,
                                const std::string& code, const PromptLibrary& lib) {
  PromptBundle b;
  b.bot = BotKind::Extra;
  b.role_playing = lib.extra_role;
  b.scenes = {before, after};
  b.plan = plan;
  b.code = code;
  b.instruction = instruction;
  return b;
}

namespace {

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  // avoid "-0.000"
  if (std::string(buf) == "-0.000") return "0.000";
  return buf;
}

std::string describe_relation(const sim::Relation& r) {
  if (r.type == sim::RelationType::OnBelt) return "OnBelt(" + fmt3(r.offset) + ")";
  return to_string(r);
}

}  // namespace

std::string render_scene(const sim::PerceptionSnapshot& s) {
  std::ostringstream os;
  os << "tick " << s.taken_at_tick << "\n";
  os << "objects:\n";
  if (s.observations.empty()) os << "  (none)\n";
  for (const auto& o : s.observations) {
    os << "  " << o.id << ": " << (o.color.empty() ? "" : o.color + " ") << o.kind;
    if (!o.attributes.empty()) {
      os << " [";
      bool first = true;
      for (const auto& a : o.attributes) {
        os << (first ? "" : ", ") << a;
        first = false;
      }
      os << "]";
    }
    os << " at (" << fmt3(o.pose.x) << ", " << fmt3(o.pose.y) << ", " << fmt3(o.pose.z) << ") "
       << describe_relation(o.relation) << (o.fallen ? " fallen" : "") << "\n";
  }
  if (!s.containers.empty()) {
    os << "containers:\n";
    for (const auto& c : s.containers) {
      os << "  " << c.id << ": " << to_string(c.kind) << (c.open ? " open" : " closed") << " at ("
         << fmt3(c.pose.x) << ", " << fmt3(c.pose.y) << ")\n";
    }
  }
  if (s.belt) {
    os << "belt: " << (s.belt->active ? "moving" : "stopped") << " " << fmt3(s.belt->speed)
       << " m/step, length " << fmt3(s.belt->length()) << "\n";
  }
  os << "gripper: " << (s.holding ? "holding " + *s.holding : std::string("empty")) << "\n";
  return os.str();
}

std::string serialize(const PromptBundle& b) {
  std::ostringstream os;
  os << "## BOT\n" << to_string(b.bot) << "\n";
  os << "## ROLE\n" << b.role_playing << "\n";
  if (b.bot == BotKind::Decision) {
    os << "## ERROR MESSAGES\n";
    if (b.error_messages.empty()) os << "(none)\n";
    for (std::size_t i = 0; i < b.error_messages.size(); ++i) os << i + 1 << ". " << b.error_messages[i] << "\n";
    os << "## CODE REPOSITORY\n" << b.code_repository << "\n";
    os << "## COT\n" << b.cot << "\n";
    os << "## EXAMPLES\n";
    for (const auto& e : b.examples) {
      os << "input: " << e.input << "\nPLAN:\n";
      for (std::size_t i = 0; i < e.plan.size(); ++i) os << i + 1 << ". " << e.plan[i] << "\n";
      os << "CODE:\n```\n" << e.code << "\n```\n";
    }
  }
  for (std::size_t i = 0; i < b.scenes.size(); ++i) {
    const char* label = b.scenes.size() == 2 ? (i == 0 ? " (before)" : " (after)") : "";
    os << "## SCENE" << label << "\n" << render_scene(b.scenes[i]);
  }
  if (b.bot != BotKind::Decision) {
    os << "## DECISION INFO\nPLAN:\n";
    for (std::size_t i = 0; i < b.plan.size(); ++i) os << i + 1 << ". " << b.plan[i] << "\n";
    os << "CODE:\n```\n" << b.code << "\n```\n";
  }
  os << "## INSTRUCTION\n" << b.instruction << "\n";
  return os.str();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string digest(const PromptBundle& bundle) { return fnv1a_hex(serialize(bundle)); }

}  // namespace replanvlm::vlm

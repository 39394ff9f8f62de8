#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "replanvlm/sim/types.hpp"

namespace replanvlm::vlm {

enum class BotKind { Decision, Inner, Extra };
std::string to_string(BotKind b);

struct Exemplar {
  std::string input;
  std::vector<std::string> plan;
  std::string code;

  friend bool operator==(const Exemplar&, const Exemplar&) = default;
};

/// Editable prompt texts. Defaults are compiled in; a JSON file may override
/// any of them (see data/prompts/library.json).
struct PromptLibrary {
  std::string decision_role;
  std::string inner_role;
  std::string extra_role;
  std::string code_repository;
  std::string cot;
  std::vector<Exemplar> examples;

  static PromptLibrary builtin();
};

PromptLibrary load_prompt_library(const std::filesystem::path& path);

struct PromptBundle {
  BotKind bot = BotKind::Decision;
  std::string role_playing;
  std::vector<std::string> error_messages;  // Decision only, oldest first
  std::string code_repository;              // Decision only
  std::string cot;                          // Decision only
  std::vector<Exemplar> examples;           // Decision only
  std::vector<sim::PerceptionSnapshot> scenes;  // one, or before+after for Extra
  std::vector<std::string> plan;            // decision info (Inner/Extra)
  std::string code;                         // decision info (Inner/Extra)
  std::string instruction;
};

PromptBundle build_decision_prompt(const std::string& instruction, const sim::PerceptionSnapshot& snapshot,
                                   const std::vector<std::string>& feedback, const PromptLibrary& lib);
PromptBundle build_inner_prompt(const std::string& instruction, const sim::PerceptionSnapshot& snapshot,
                                const std::vector<std::string>& plan, const std::string& code,
                                const PromptLibrary& lib);
PromptBundle build_extra_prompt(const std::string& instruction, const sim::PerceptionSnapshot& before,
                                const sim::PerceptionSnapshot& after, const std::vector<std::string>& plan,
                                const std::string& code, const PromptLibrary& lib);

/// Scene text handed to the model in place of a camera image.
std::string render_scene(const sim::PerceptionSnapshot& snapshot);

/// Deterministic text form of the whole bundle, sectioned by part.
std::string serialize(const PromptBundle& bundle);

/// FNV-1a 64 of serialize(bundle), 16 lowercase hex digits.
std::string digest(const PromptBundle& bundle);
std::string fnv1a_hex(const std::string& text);

}  // namespace replanvlm::vlm

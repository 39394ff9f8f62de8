#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "replanvlm/dsl/interpreter.hpp"
#include "replanvlm/sim/types.hpp"
#include "replanvlm/vlm/backend.hpp"

namespace replanvlm::engine {

struct TaskSpec {
  int id = 0;
  std::string name;
  std::string instruction;
  std::filesystem::path scenario;
  sim::GoalPredicate goal;
  bool su = false;  // semantic understanding
  bool sr = false;  // spatial reasoning
  bool ec = false;  // environmental change
  bool ua = false;  // uncertain attribute
  bool as = false;  // action sequence
  int ms_expected = 0;
};

/// When the harness-supplied world fault is armed.
enum class FaultRounds { First, Every };

struct EngineConfig {
  bool inner_enabled = true;
  bool extra_enabled = true;
  int inner_cycle_cap = 5;
  int outer_round_cap = 5;
  std::uint64_t seed = 0;
  vlm::BackendConfig backend;
  std::optional<sim::WorldFaultSpec> world_fault;
  FaultRounds fault_rounds = FaultRounds::First;

  void validate() const;
};

/// 64-bit mix of two seeds (splitmix64 finalizer over a ^ rotated b).
std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b);

enum class FeedbackSource { Inner, Extra };
std::string to_string(FeedbackSource s);

/// Advisory only: becomes an error message in the next Decision prompt.
struct Feedback {
  FeedbackSource source = FeedbackSource::Inner;
  int round = 0;
  std::string reason;
  bool advisory = true;
};

struct CheckOutcome {
  bool format_ok = false;
  bool matching_ok = false;
  bool verification_ok = false;
  std::string reason;

  bool pass() const { return format_ok && matching_ok && verification_ok; }
};

struct CycleRecord {
  std::vector<std::string> plan;
  std::string code;
  CheckOutcome check;
  bool checked = false;  // false when the inner mechanism is disabled
  std::vector<vlm::VlmFault> faults;
};

struct RoundRecord {
  int index = 0;
  sim::PerceptionSnapshot before;
  std::vector<CycleRecord> cycles;
  bool executed = false;
  std::vector<std::string> plan;
  std::string code;
  std::vector<std::string> trace;  // primitive steps, printed
  std::size_t steps_applied = 0;
  std::optional<std::string> execution_error;
  bool world_fault_fired = false;
  std::optional<std::size_t> world_fault_step;
  std::vector<vlm::VlmFault> decision_faults;  // faults in the executed response
  std::vector<sim::Event> events;
  std::optional<sim::PerceptionSnapshot> after;
  bool goal_met_after = false;
  std::optional<bool> extra_verdict;
  std::string extra_reason;
  std::vector<Feedback> feedback;  // added during this round, in order
};

enum class Outcome { Success, InnerDeadlock, OuterExhausted, BackendFailure };
std::string to_string(Outcome o);

struct EpisodeRecord {
  int task_id = 0;
  std::uint64_t seed = 0;
  Outcome outcome = Outcome::OuterExhausted;
  std::vector<RoundRecord> rounds;
  vlm::Transcript transcript;
  std::size_t total_steps = 0;
  bool goal_satisfied = false;  // ground truth on the final world
  bool failure_injected = false;
  bool failure_detected = false;
  bool failure_corrected = false;
  std::string backend_error;
  nlohmann::json config;  // engine config the episode ran under

  std::size_t feedback_count() const;
};

CheckOutcome inner_check(const std::string& instruction, const std::vector<std::string>& plan,
                         const std::string& code, const sim::PerceptionSnapshot& snapshot,
                         const vlm::Gateway& gateway, vlm::RequestContext& ctx, vlm::Transcript& transcript);

/// Format check alone: parse(code) succeeds and the plan is non-empty.
CheckOutcome format_check(const std::vector<std::string>& plan, const std::string& code);

/// Lexical plan/code alignment. Each plan line consumes one or more
/// consecutive calls whose skill verb and selector words all appear in it.
/// Returns an empty string on success, otherwise the reason.
std::string matching_check(const std::vector<std::string>& plan, const dsl::ActionProgram& program);

struct Assessment {
  bool yes = false;
  std::optional<Feedback> feedback;
};

Assessment extra_assess(const sim::PerceptionSnapshot& before, const sim::PerceptionSnapshot& after,
                        const TaskSpec& task, int round, const std::vector<std::string>& plan,
                        const std::string& code, const vlm::Gateway& gateway, vlm::RequestContext& ctx,
                        vlm::Transcript& transcript);

EpisodeRecord run_episode(const TaskSpec& task, const sim::WorldState& world, const vlm::Gateway& gateway,
                          const EngineConfig& config);

nlohmann::json to_json(const EngineConfig& c);
EngineConfig engine_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EpisodeRecord& e);
/// One JSONL line, no trailing newline.
std::string to_jsonl(const EpisodeRecord& e);

}  // namespace replanvlm::engine

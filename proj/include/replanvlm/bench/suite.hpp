#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "replanvlm/engine/engine.hpp"

namespace replanvlm::bench {

enum class Variant { Full, NoInternal, NoExternal, NoBoth };
/// "full", "-internal", "-external", "-both".
std::string to_string(Variant v);
std::optional<Variant> variant_from_string(const std::string& s);
void apply_variant(engine::EngineConfig& c, Variant v);
inline constexpr Variant kAllVariants[] = {Variant::Full, Variant::NoInternal, Variant::NoExternal, Variant::NoBoth};

struct SuiteConfig {
  int rounds = 10;
  engine::EngineConfig engine;  // engine.seed is overwritten per episode
  std::uint64_t base_seed = 0;
  std::filesystem::path out_dir;         // empty: nothing written
  std::filesystem::path prompt_library;  // empty: built-in prompts
  int threads = 1;

  void validate() const;
};

/// base + 1000 * task + round
std::uint64_t episode_seed(std::uint64_t base, int task, int round);

/// Flat JSON: suite fields plus engine fields (see engine_config_from_json).
nlohmann::json to_json(const SuiteConfig& c);
SuiteConfig suite_config_from_json(const nlohmann::json& j);
SuiteConfig load_suite_config(const std::filesystem::path& path);

struct TaskMetrics {
  int task_id = 0;
  std::size_t episodes = 0;  // completed, backend failures excluded
  std::size_t successes = 0;
  std::size_t injected = 0;
  std::size_t detected = 0;
  std::size_t corrected = 0;
  std::size_t backend_failures = 0;
  std::size_t total_steps = 0;

  double success_rate() const;
  std::optional<double> detection_rate() const;   // nullopt when nothing was injected
  std::optional<double> correction_rate() const;
  double mean_steps() const;

  friend bool operator==(const TaskMetrics&, const TaskMetrics&) = default;
};

struct MetricsTable {
  std::string label;
  std::vector<TaskMetrics> rows;

  /// Unweighted means over task rows; rate means skip tasks without injections.
  double average_success() const;
  std::optional<double> average_detection() const;
  std::optional<double> average_correction() const;
  double average_steps() const;
  std::size_t backend_failures() const;
  const TaskMetrics* find(int task_id) const;

  friend bool operator==(const MetricsTable&, const MetricsTable&) = default;
};

/// Counts successes by the final world's goal state.
MetricsTable aggregate(const std::string& label, const std::vector<engine::TaskSpec>& tasks,
                       const std::vector<engine::EpisodeRecord>& episodes);

struct SuiteResult {
  MetricsTable metrics;
  std::vector<engine::EpisodeRecord> episodes;  // task order, then round
};

class SuiteError : public std::runtime_error {
 public:
  SuiteError(const std::string& message, std::size_t completed = 0)
      : std::runtime_error(message), completed_(completed) {}
  std::size_t completed() const noexcept { return completed_; }

 private:
  std::size_t completed_;
};

SuiteResult run_suite(const std::vector<engine::TaskSpec>& tasks, const SuiteConfig& config);
/// Same, with a caller-owned gateway (backend settings in config are ignored).
SuiteResult run_suite(const std::vector<engine::TaskSpec>& tasks, const SuiteConfig& config,
                      const vlm::Gateway& gateway);

struct AblationResult {
  std::vector<SuiteResult> variants;  // kAllVariants order
};

/// Four variants, identical seeds and fault profile. Logs go to out_dir/<variant>/.
AblationResult run_ablation(const std::vector<engine::TaskSpec>& tasks, const SuiteConfig& config);

/// Primitive index the injection fires at for a task. With injection.at_step
/// set it is checked against the canonical trace; otherwise the last step of
/// the canonical trace the fault kind applies to (the last grasp for GripSlip).
/// Throws SuiteError when the step is out of range or not applicable.
std::size_t injection_step(const engine::TaskSpec& task, const sim::WorldFaultSpec& injection);

/// One world fault per episode, on the first outer round.
SuiteResult run_error_correction(const std::vector<engine::TaskSpec>& tasks, const sim::WorldFaultSpec& injection,
                                 const SuiteConfig& config);

}  // namespace replanvlm::bench

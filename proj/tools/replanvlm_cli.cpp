// replanvlm command-line driver: run, ablate, inject, replay.
//
// Exit codes: 0 all episodes completed, 1 harness or configuration error,
// 2 usage error, 3 some episodes ended in a backend failure, 4 replay diverged.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "replanvlm/bench/catalog.hpp"
#include "replanvlm/bench/report.hpp"
#include "replanvlm/bench/suite.hpp"
#include "replanvlm/sim/scenario.hpp"
#include "replanvlm/sim/world.hpp"

#ifndef REPLANVLM_DATA_DIR
#define REPLANVLM_DATA_DIR "data"
#endif

using namespace replanvlm;

namespace {

constexpr int kOk = 0;
constexpr int kHarnessError = 1;
constexpr int kUsage = 2;
constexpr int kBackendFailures = 3;
constexpr int kReplayDiverged = 4;

struct Common {
  std::string task = "all";
  std::optional<int> rounds;
  std::optional<std::string> backend;
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::string data = REPLANVLM_DATA_DIR;
  std::optional<int> threads;
  std::optional<std::string> variant;
  std::optional<std::string> replay_table;
  std::optional<std::string> endpoint;
  std::optional<std::string> model;
  std::string prompts;
  std::string format = "text";
};

void add_common(CLI::App* cmd, Common& o, bool with_variant) {
  cmd->add_option("--task", o.task, "Task id 1-7 or 'all'")->capture_default_str();
  cmd->add_option("--rounds", o.rounds, "Episodes per task (default 10)");
  cmd->add_option("--backend", o.backend, "oracle | scripted | remote")
      ->check(CLI::IsMember({"oracle", "scripted", "remote"}));
  cmd->add_option("--seed", o.seed, "Base seed; episode seed = base + 1000*task + round");
  cmd->add_option("--config", o.config, "Suite config JSON");
  cmd->add_option("--out", o.out, "Directory for episode logs and metric files");
  cmd->add_option("--data", o.data, "Data directory with scenarios/")->capture_default_str();
  cmd->add_option("--threads", o.threads, "Concurrent episodes");
  if (with_variant) {
    cmd->add_option("--variant", o.variant, "full | -internal | -external | -both")
        ->check(CLI::IsMember({"full", "-internal", "-external", "-both"}));
  }
  cmd->add_option("--replay-table", o.replay_table, "Replay table for the scripted backend");
  cmd->add_option("--endpoint", o.endpoint, "Chat-completion URL for the remote backend");
  cmd->add_option("--model", o.model, "Model name for the remote backend");
  cmd->add_option("--prompts", o.prompts, "Prompt library JSON");
  cmd->add_option("--format", o.format, "Report format on stdout: text | csv | json")
      ->check(CLI::IsMember({"text", "csv", "json"}))
      ->capture_default_str();
}

bench::SuiteConfig build_config(const Common& o) {
  bench::SuiteConfig c = o.config.empty() ? bench::SuiteConfig{} : bench::load_suite_config(o.config);
  if (o.rounds) c.rounds = *o.rounds;
  if (o.seed) c.base_seed = *o.seed;
  if (!o.out.empty()) c.out_dir = o.out;
  if (o.threads) c.threads = *o.threads;
  if (!o.prompts.empty()) c.prompt_library = o.prompts;
  if (o.variant) bench::apply_variant(c.engine, *bench::variant_from_string(*o.variant));
  auto& b = c.engine.backend;
  if (o.backend) {
    const auto kind = *vlm::backend_kind_from_string(*o.backend);
    if (kind != b.kind) {
      const auto keep_profile = b.fault_profile;
      b = vlm::BackendConfig{};
      b.kind = kind;
      if (kind == vlm::BackendKind::Oracle) b.fault_profile = keep_profile;
    }
  }
  if (o.replay_table) b.replay_table = *o.replay_table;
  if (o.endpoint) b.endpoint = *o.endpoint;
  if (o.model) b.model = *o.model;
  c.validate();
  return c;
}

std::vector<engine::TaskSpec> select_tasks(const Common& o) {
  if (o.task == "all") return bench::task_catalog(o.data);
  int id = 0;
  try {
    std::size_t used = 0;
    id = std::stoi(o.task, &used);
    if (used != o.task.size()) throw std::invalid_argument("");
  } catch (const std::logic_error&) {
    throw bench::SuiteError("--task must be 1-7 or 'all', got '" + o.task + "'");
  }
  if (id < 1 || id > 7) throw bench::SuiteError("--task must be 1-7 or 'all', got '" + o.task + "'");
  return {bench::task_spec(id, o.data)};
}

bench::ExportFormat format_of(const Common& o) { return *bench::export_format_from_string(o.format); }

int completion_code(const std::vector<engine::EpisodeRecord>& episodes) {
  std::size_t failed = 0;
  for (const auto& e : episodes) failed += e.outcome == engine::Outcome::BackendFailure ? 1 : 0;
  if (failed == 0) return kOk;
  std::cerr << failed << " episode(s) ended in a backend failure";
  for (const auto& e : episodes) {
    if (e.outcome == engine::Outcome::BackendFailure) {
      std::cerr << "; first: " << e.backend_error;
      break;
    }
  }
  std::cerr << "\n";
  return kBackendFailures;
}

int cmd_run(const Common& o) {
  const auto config = build_config(o);
  const auto result = bench::run_suite(select_tasks(o), config);
  std::cout << bench::render(result.metrics, format_of(o));
  return completion_code(result.episodes);
}

int cmd_ablate(const Common& o) {
  const auto config = build_config(o);
  const auto result = bench::run_ablation(select_tasks(o), config);
  if (format_of(o) == bench::ExportFormat::Text) {
    std::cout << bench::ablation_table(result);
  } else {
    for (const auto& v : result.variants) std::cout << bench::render(v.metrics, format_of(o));
  }
  std::vector<engine::EpisodeRecord> all;
  for (const auto& v : result.variants) all.insert(all.end(), v.episodes.begin(), v.episodes.end());
  return completion_code(all);
}

int cmd_inject(const Common& o, const std::string& fault, std::optional<std::size_t> at_step) {
  const auto config = build_config(o);
  sim::WorldFaultSpec f;
  f.kind = *sim::fault_kind_from_string(fault);
  f.at_step = at_step;
  const auto result = bench::run_error_correction(select_tasks(o), f, config);
  std::cout << bench::render(result.metrics, format_of(o));
  return completion_code(result.episodes);
}

void print_episode(const engine::EpisodeRecord& e) {
  std::cout << "task " << e.task_id << "  seed " << e.seed << "  outcome " << engine::to_string(e.outcome)
            << "  steps " << e.total_steps << "  goal " << (e.goal_satisfied ? "met" : "unmet") << "\n";
  for (const auto& r : e.rounds) {
    std::cout << "round " << r.index + 1 << "\n";
    for (std::size_t i = 0; i < r.cycles.size(); ++i) {
      const auto& c = r.cycles[i];
      std::cout << "  cycle " << i + 1 << ": " << (c.check.pass() ? "accepted" : c.check.reason) << "\n";
    }
    if (!r.executed) continue;
    std::cout << "  code:\n";
    std::istringstream code(r.code);
    for (std::string line; std::getline(code, line);) std::cout << "    " << line << "\n";
    std::cout << "  executed " << r.steps_applied << " step(s)";
    if (r.world_fault_fired) std::cout << ", world fault at step " << r.world_fault_step.value_or(0);
    if (r.execution_error) std::cout << ", stopped: " << *r.execution_error;
    std::cout << "\n";
    if (r.extra_verdict) {
      std::cout << "  assessment: " << (*r.extra_verdict ? "yes" : "no");
      if (!*r.extra_verdict) std::cout << " (" << r.extra_reason << ")";
      std::cout << "\n";
    }
  }
}

int cmd_replay(const std::string& log, std::size_t index, const std::string& data, const std::string& prompts) {
  std::ifstream in(log);
  if (!in) throw bench::SuiteError("cannot open log " + log);
  std::string line;
  for (std::size_t i = 0; i <= index; ++i) {
    if (!std::getline(in, line)) {
      throw bench::SuiteError("log " + log + " has only " + std::to_string(i) + " episode(s)");
    }
  }
  const auto logged = nlohmann::json::parse(line);
  const auto task = bench::task_spec(logged.at("task_id").get<int>(), data);
  auto config = engine::engine_config_from_json(logged.at("config"));

  std::vector<vlm::ReplayRecord> table;
  for (const auto& t : logged.at("transcript")) {
    table.push_back({t.at("digest").get<std::string>(), t.at("raw").get<std::string>(), std::nullopt});
  }
  vlm::Gateway gw(std::make_shared<vlm::ScriptedBackend>(table),
                  prompts.empty() ? vlm::PromptLibrary::builtin() : vlm::load_prompt_library(prompts));
  const auto again = engine::run_episode(task, bench::task_world(task), gw, config);
  print_episode(again);

  // fault annotations come from the oracle; a replay only reproduces behaviour
  auto behaviour = [](nlohmann::json rounds) {
    for (auto& r : rounds) {
      r.erase("decision_faults");
      for (auto& c : r.at("cycles")) c.erase("faults");
    }
    return rounds;
  };
  const auto replayed = engine::to_json(again);
  const bool same = behaviour(replayed.at("rounds")) == behaviour(logged.at("rounds")) &&
                    replayed.at("outcome") == logged.at("outcome");
  std::cout << (same ? "replay matches the log\n" : "replay diverges from the log\n");
  return same ? kOk : kReplayDiverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plan, check, execute and replan tabletop tasks against a simulated scene"};
  app.require_subcommand(1);

  Common run_opts, ablate_opts, inject_opts;
  auto* run = app.add_subcommand("run", "Run the suite and print per-task metrics");
  add_common(run, run_opts, true);
  auto* ablate = app.add_subcommand("ablate", "Run all four mechanism variants with paired seeds");
  add_common(ablate, ablate_opts, false);
  auto* inject = app.add_subcommand("inject", "Inject one world fault per episode and report detection/correction");
  add_common(inject, inject_opts, true);
  std::string fault = "grip-slip";
  std::optional<std::size_t> at_step;
  inject->add_option("--fault", fault, "grip-slip | drop | displace")
      ->check(CLI::IsMember({"grip-slip", "drop", "displace"}))
      ->capture_default_str();
  inject->add_option("--at-step", at_step, "Primitive step index in the canonical trace (default: last applicable)");

  auto* replay = app.add_subcommand("replay", "Re-run one logged episode from its transcript");
  std::string log;
  std::size_t episode = 0;
  std::string replay_data = REPLANVLM_DATA_DIR;
  replay->add_option("--log", log, "episodes.jsonl written by run/ablate/inject")->required();
  replay->add_option("--episode", episode, "0-based line index in the log")->capture_default_str();
  replay->add_option("--data", replay_data, "Data directory with scenarios/")->capture_default_str();
  std::string replay_prompts;
  replay->add_option("--prompts", replay_prompts, "Prompt library the episode ran with");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*ablate) return cmd_ablate(ablate_opts);
    if (*inject) return cmd_inject(inject_opts, fault, at_step);
    if (*replay) return cmd_replay(log, episode, replay_data, replay_prompts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kHarnessError;
  }
  return kUsage;
}

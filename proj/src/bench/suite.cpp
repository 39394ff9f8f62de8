#include "replanvlm/bench/suite.hpp"

#include <atomic>
#include <fstream>
#include <numeric>
#include <set>
#include <thread>

#include "replanvlm/bench/catalog.hpp"
#include "replanvlm/bench/report.hpp"
#include "replanvlm/sim/scenario.hpp"
#include "replanvlm/sim/world.hpp"

namespace replanvlm::bench {

using nlohmann::json;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoInternal: return "-internal";
    case Variant::NoExternal: return "-external";
    case Variant::NoBoth: return "-both";
  }
  return "?";
}

std::optional<Variant> variant_from_string(const std::string& s) {
  for (auto v : kAllVariants) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

void apply_variant(engine::EngineConfig& c, Variant v) {
  c.inner_enabled = v == Variant::Full || v == Variant::NoExternal;
  c.extra_enabled = v == Variant::Full || v == Variant::NoInternal;
}

void SuiteConfig::validate() const {
  if (rounds < 1) throw SuiteError("rounds must be >= 1");
  if (threads < 1) throw SuiteError("threads must be >= 1");
  try {
    engine.validate();
  } catch (const std::exception& e) {
    throw SuiteError(std::string("invalid engine config: ") + e.what());
  }
}

std::uint64_t episode_seed(std::uint64_t base, int task, int round) {
  return base + 1000ULL * static_cast<std::uint64_t>(task) + static_cast<std::uint64_t>(round);
}

json to_json(const SuiteConfig& c) {
  json j = engine::to_json(c.engine);
  j.erase("seed");
  j["rounds"] = c.rounds;
  j["base_seed"] = c.base_seed;
  j["out_dir"] = c.out_dir.string();
  j["prompt_library"] = c.prompt_library.string();
  j["threads"] = c.threads;
  return j;
}

SuiteConfig suite_config_from_json(const json& j) {
  if (!j.is_object()) throw SuiteError("suite config must be a JSON object");
  SuiteConfig c;
  json rest = j;
  try {
    if (j.contains("rounds")) c.rounds = j.at("rounds").get<int>();
    if (j.contains("base_seed")) c.base_seed = j.at("base_seed").get<std::uint64_t>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("prompt_library")) c.prompt_library = j.at("prompt_library").get<std::string>();
    if (j.contains("threads")) c.threads = j.at("threads").get<int>();
    if (j.contains("variant")) {
      const auto name = j.at("variant").get<std::string>();
      auto v = variant_from_string(name);
      if (!v) throw SuiteError("unknown variant '" + name + "'");
      if (rest.contains("inner_enabled") || rest.contains("extra_enabled")) {
        throw SuiteError("give either variant or inner_enabled/extra_enabled, not both");
      }
      rest.erase("variant");
      apply_variant(c.engine, *v);
      rest["inner_enabled"] = c.engine.inner_enabled;
      rest["extra_enabled"] = c.engine.extra_enabled;
    }
    if (j.contains("seed")) throw SuiteError("use base_seed; per-episode seeds are derived");
    for (const char* k : {"rounds", "base_seed", "out_dir", "prompt_library", "threads"}) rest.erase(k);
    c.engine = engine::engine_config_from_json(rest);
  } catch (const json::exception& e) {
    throw SuiteError(std::string("suite config: ") + e.what());
  } catch (const vlm::GatewayError& e) {
    throw SuiteError(std::string("suite config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SuiteError(std::string("suite config: ") + e.what());
  } catch (const sim::WorldError& e) {
    throw SuiteError(std::string("suite config: ") + e.what());
  }
  c.validate();
  return c;
}

SuiteConfig load_suite_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SuiteError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SuiteError("config " + path.string() + ": " + e.what());
  }
  return suite_config_from_json(j);
}

// ---- metrics

double TaskMetrics::success_rate() const {
  return episodes == 0 ? 0.0 : static_cast<double>(successes) / static_cast<double>(episodes);
}

std::optional<double> TaskMetrics::detection_rate() const {
  if (injected == 0) return std::nullopt;
  return static_cast<double>(detected) / static_cast<double>(injected);
}

std::optional<double> TaskMetrics::correction_rate() const {
  if (injected == 0) return std::nullopt;
  return static_cast<double>(corrected) / static_cast<double>(injected);
}

double TaskMetrics::mean_steps() const {
  return episodes == 0 ? 0.0 : static_cast<double>(total_steps) / static_cast<double>(episodes);
}

namespace {

template <class F>
std::optional<double> mean_of(const std::vector<TaskMetrics>& rows, F rate) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (auto v = rate(r)) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace

double MetricsTable::average_success() const {
  return mean_of(rows, [](const TaskMetrics& r) { return std::optional<double>(r.success_rate()); }).value_or(0.0);
}

std::optional<double> MetricsTable::average_detection() const {
  return mean_of(rows, [](const TaskMetrics& r) { return r.detection_rate(); });
}

std::optional<double> MetricsTable::average_correction() const {
  return mean_of(rows, [](const TaskMetrics& r) { return r.correction_rate(); });
}

double MetricsTable::average_steps() const {
  return mean_of(rows, [](const TaskMetrics& r) { return std::optional<double>(r.mean_steps()); }).value_or(0.0);
}

std::size_t MetricsTable::backend_failures() const {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.backend_failures;
  return n;
}

const TaskMetrics* MetricsTable::find(int task_id) const {
  for (const auto& r : rows) {
    if (r.task_id == task_id) return &r;
  }
  return nullptr;
}

MetricsTable aggregate(const std::string& label, const std::vector<engine::TaskSpec>& tasks,
                       const std::vector<engine::EpisodeRecord>& episodes) {
  MetricsTable m;
  m.label = label;
  for (const auto& t : tasks) {
    TaskMetrics row;
    row.task_id = t.id;
    for (const auto& e : episodes) {
      if (e.task_id != t.id) continue;
      if (e.outcome == engine::Outcome::BackendFailure) {
        ++row.backend_failures;
        continue;
      }
      ++row.episodes;
      row.successes += e.goal_satisfied ? 1 : 0;
      row.injected += e.failure_injected ? 1 : 0;
      row.detected += e.failure_detected ? 1 : 0;
      row.corrected += e.failure_corrected ? 1 : 0;
      row.total_steps += e.total_steps;
    }
    m.rows.push_back(row);
  }
  return m;
}

// ---- runners

namespace {

void write_outputs(const SuiteResult& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw SuiteError("cannot create " + dir.string() + ": " + ec.message(), r.episodes.size());
  std::ofstream log(dir / "episodes.jsonl", std::ios::binary);
  if (!log) throw SuiteError("cannot write " + (dir / "episodes.jsonl").string(), r.episodes.size());
  for (const auto& e : r.episodes) log << engine::to_jsonl(e) << '\n';
  export_metrics(r.metrics, ExportFormat::Text, dir / "metrics.txt");
  export_metrics(r.metrics, ExportFormat::Csv, dir / "metrics.csv");
  export_metrics(r.metrics, ExportFormat::Json, dir / "metrics.json");
}

vlm::Gateway make_gateway(const SuiteConfig& config) {
  try {
    auto lib = config.prompt_library.empty() ? vlm::PromptLibrary::builtin()
                                             : vlm::load_prompt_library(config.prompt_library);
    return vlm::Gateway(vlm::make_backend(config.engine.backend), std::move(lib));
  } catch (const std::exception& e) {
    throw SuiteError(std::string("backend setup failed: ") + e.what());
  }
}

struct Job {
  const engine::TaskSpec* task;
  const sim::WorldState* world;
  engine::EngineConfig config;
};

SuiteResult run_jobs(const std::vector<engine::TaskSpec>& tasks, const std::vector<Job>& jobs, const SuiteConfig& config,
                     const vlm::Gateway& gateway, const std::string& label) {
  SuiteResult result;
  result.episodes.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      result.episodes[i] = engine::run_episode(*jobs[i].task, *jobs[i].world, gateway, jobs[i].config);
    }
  };
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(config.threads), std::max<std::size_t>(jobs.size(), 1));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  result.metrics = aggregate(label, tasks, result.episodes);
  return result;
}

std::vector<sim::WorldState> load_worlds(const std::vector<engine::TaskSpec>& tasks) {
  std::vector<sim::WorldState> worlds;
  for (const auto& t : tasks) {
    try {
      worlds.push_back(task_world(t));
    } catch (const std::exception& e) {
      throw SuiteError("task " + std::to_string(t.id) + ": " + e.what());
    }
  }
  return worlds;
}

std::vector<Job> plan_jobs(const std::vector<engine::TaskSpec>& tasks, const std::vector<sim::WorldState>& worlds,
                           const SuiteConfig& config) {
  std::vector<Job> jobs;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (int r = 0; r < config.rounds; ++r) {
      Job j{&tasks[t], &worlds[t], config.engine};
      j.config.seed = episode_seed(config.base_seed, tasks[t].id, r);
      jobs.push_back(std::move(j));
    }
  }
  return jobs;
}

std::string label_of(const engine::EngineConfig& c) {
  if (c.inner_enabled && c.extra_enabled) return to_string(Variant::Full);
  if (c.extra_enabled) return to_string(Variant::NoInternal);
  if (c.inner_enabled) return to_string(Variant::NoExternal);
  return to_string(Variant::NoBoth);
}

}  // namespace

SuiteResult run_suite(const std::vector<engine::TaskSpec>& tasks, const SuiteConfig& config,
                      const vlm::Gateway& gateway) {
  config.validate();
  const auto worlds = load_worlds(tasks);
  auto result = run_jobs(tasks, plan_jobs(tasks, worlds, config), config, gateway, label_of(config.engine));
  if (!config.out_dir.empty()) write_outputs(result, config.out_dir);
  return result;
}

SuiteResult run_suite(const std::vector<engine::TaskSpec>& tasks, const SuiteConfig& config) {
  config.validate();
  const auto gateway = make_gateway(config);
  return run_suite(tasks, config, gateway);
}

AblationResult run_ablation(const std::vector<engine::TaskSpec>& tasks, const SuiteConfig& config) {
  config.validate();
  const auto gateway = make_gateway(config);
  AblationResult out;
  for (auto v : kAllVariants) {
    SuiteConfig c = config;
    apply_variant(c.engine, v);
    if (!config.out_dir.empty()) c.out_dir = config.out_dir / to_string(v);
    out.variants.push_back(run_suite(tasks, c, gateway));
  }
  if (!config.out_dir.empty()) {
    std::ofstream f(config.out_dir / "ablation.txt", std::ios::binary);
    if (!f) throw SuiteError("cannot write " + (config.out_dir / "ablation.txt").string());
    f << ablation_table(out);
  }
  return out;
}

std::size_t injection_step(const engine::TaskSpec& task, const sim::WorldFaultSpec& injection) {
  const auto world = task_world(task);
  const auto trace = dsl::expand(canonical_program(task), sim::snapshot(world));
  std::vector<std::size_t> eligible;
  bool holding = false;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const auto& s = trace.steps[i].step;
    bool ok = sim::fault_applicable(injection.kind, s.kind, holding);
    // slips and drops concern grasped objects, not the drawer handle
    if (injection.kind == sim::FaultKind::GripSlip) ok = ok && s.target.kind == sim::TargetKind::Object;
    if (ok) eligible.push_back(i);
    if (s.kind == sim::PrimitiveKind::CloseGripper) holding = s.target.kind == sim::TargetKind::Object;
    if (s.kind == sim::PrimitiveKind::OpenGripper) holding = false;
  }
  if (injection.at_step) {
    const auto k = *injection.at_step;
    if (k >= trace.steps.size()) {
      throw SuiteError("task " + std::to_string(task.id) + ": injection step " + std::to_string(k) +
                       " is out of range (canonical trace has " + std::to_string(trace.steps.size()) + " steps)");
    }
    if (std::find(eligible.begin(), eligible.end(), k) == eligible.end()) {
      throw SuiteError("task " + std::to_string(task.id) + ": " + sim::to_string(injection.kind) +
                       " cannot apply at step " + std::to_string(k) + " (" + sim::to_string(trace.steps[k].step) + ")");
    }
    return k;
  }
  if (eligible.empty()) {
    throw SuiteError("task " + std::to_string(task.id) + ": no step of the canonical trace admits " +
                     sim::to_string(injection.kind));
  }
  return eligible.back();
}

SuiteResult run_error_correction(const std::vector<engine::TaskSpec>& tasks, const sim::WorldFaultSpec& injection,
                                 const SuiteConfig& config) {
  config.validate();
  const auto gateway = make_gateway(config);
  const auto worlds = load_worlds(tasks);
  std::map<int, std::size_t> steps;
  for (const auto& t : tasks) steps[t.id] = injection_step(t, injection);
  auto jobs = plan_jobs(tasks, worlds, config);
  for (auto& j : jobs) {
    sim::WorldFaultSpec f = injection;
    f.at_step = steps.at(j.task->id);
    j.config.world_fault = f;
    j.config.fault_rounds = engine::FaultRounds::First;
  }
  auto result = run_jobs(tasks, jobs, config, gateway, "injection");
  if (!config.out_dir.empty()) write_outputs(result, config.out_dir);
  return result;
}

}  // namespace replanvlm::bench

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "replanvlm/sim/types.hpp"
#include "replanvlm/vlm/prompt.hpp"
#include "replanvlm/vlm/response.hpp"

namespace replanvlm::vlm {

enum class BackendKind { Scripted, Oracle, Remote };
std::string to_string(BackendKind k);
std::optional<BackendKind> backend_kind_from_string(const std::string& s);

/// Decision faults, in the order they are tried on each request.
enum class VlmFault { EmptyOutput, MalformedCode, OmitBlocker, WrongObject, PlanCodeMismatch, InnerWrongVerdict, ExtraWrongVerdict };
std::string to_string(VlmFault f);
std::optional<VlmFault> vlm_fault_from_string(const std::string& s);

struct VlmFaultProfile {
  double omit_blocker_step = 0.0;
  double wrong_object = 0.0;
  double malformed_code = 0.0;
  double plan_code_mismatch = 0.0;
  double empty_output = 0.0;
  double inner_wrong_verdict = 0.0;
  double extra_wrong_verdict = 0.0;
  std::uint64_t seed = 0;
  /// Faults forced on the n-th Decision request of an episode (0-based), on
  /// top of the random draws.
  std::map<std::size_t, std::vector<VlmFault>> schedule;

  void validate() const;
  bool zero() const;
};

struct BackendConfig {
  BackendKind kind = BackendKind::Oracle;
  std::uint64_t seed = 0;
  VlmFaultProfile fault_profile;             // oracle
  std::filesystem::path replay_table;         // scripted
  std::string endpoint;                       // remote
  std::string model;                          // remote
  std::string credential_env = "REPLANVLM_API_KEY";
  double timeout_s = 30.0;
  int retries = 3;
  double backoff_s = 0.5;
  double temperature = 0.0;
  std::vector<std::filesystem::path> images;  // remote, attached to Inner/Extra requests

  void validate() const;
};

enum class GatewayErrc { Config, ReplayMiss, RemoteTimeout, RemoteHTTP, CredentialMissing, MissingGoal };
std::string to_string(GatewayErrc e);

class GatewayError : public std::runtime_error {
 public:
  GatewayError(GatewayErrc code, const std::string& message, int status = 0);
  GatewayErrc code() const noexcept { return code_; }
  int status() const noexcept { return status_; }

 private:
  GatewayErrc code_;
  int status_;
};

/// Episode-local request state: goal hint for the oracle, the seeded fault
/// stream, replay occurrence counters. Never shared between episodes.
struct RequestContext {
  RequestContext(std::uint64_t fault_seed, std::optional<sim::GoalPredicate> goal_hint);

  std::optional<sim::GoalPredicate> goal;
  std::mt19937_64 rng;
  std::size_t decision_requests = 0;
  std::map<std::string, std::size_t> occurrences;
  std::vector<VlmFault> applied;  // faults applied to the latest response

  double draw();
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendKind kind() const = 0;
  virtual std::string complete(const PromptBundle& bundle, RequestContext& ctx) const = 0;
};

struct ReplayRecord {
  std::string digest;
  std::string response;
  std::optional<std::size_t> occurrence;
};

class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::vector<ReplayRecord> table);
  static ScriptedBackend from_file(const std::filesystem::path& path);

  BackendKind kind() const override { return BackendKind::Scripted; }
  /// The n-th request with a digest gets the record with occurrence n, or the
  /// n-th record listed for that digest. Throws GatewayError(ReplayMiss).
  std::string complete(const PromptBundle& bundle, RequestContext& ctx) const override;

 private:
  std::map<std::string, std::vector<ReplayRecord>> by_digest_;
};

class OracleBackend : public Backend {
 public:
  explicit OracleBackend(VlmFaultProfile profile);
  BackendKind kind() const override { return BackendKind::Oracle; }
  std::string complete(const PromptBundle& bundle, RequestContext& ctx) const override;
  const VlmFaultProfile& profile() const { return profile_; }

 private:
  std::string decide(const PromptBundle& bundle, RequestContext& ctx) const;
  VlmFaultProfile profile_;
};

class RemoteBackend : public Backend {
 public:
  explicit RemoteBackend(BackendConfig config);
  BackendKind kind() const override { return BackendKind::Remote; }
  std::string complete(const PromptBundle& bundle, RequestContext& ctx) const override;

  /// Chat-completion request body for a bundle.
  nlohmann::json request_body(const PromptBundle& bundle) const;

 private:
  BackendConfig config_;
};

std::shared_ptr<const Backend> make_backend(const BackendConfig& config);

nlohmann::json to_json(const VlmFaultProfile& p);
VlmFaultProfile fault_profile_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BackendConfig& c);
/// Rejects fields that belong to another backend kind.
BackendConfig backend_config_from_json(const nlohmann::json& j);

struct TranscriptEntry {
  BotKind bot = BotKind::Decision;
  std::string digest;
  std::string raw;
  std::optional<BotResponse> parsed;
  std::string parse_error;
  double latency_ms = 0.0;
  BackendKind backend = BackendKind::Oracle;
  std::vector<VlmFault> faults;
};

using Transcript = std::vector<TranscriptEntry>;

nlohmann::json to_json(const TranscriptEntry& e);

/// Backend plus transcript bookkeeping, shared by concurrent episodes.
class Gateway {
 public:
  Gateway(std::shared_ptr<const Backend> backend, PromptLibrary library);

  /// Sends the bundle, parses the reply and appends one transcript entry.
  /// Backend errors propagate as GatewayError; parse failures do not throw.
  const TranscriptEntry& ask(const PromptBundle& bundle, RequestContext& ctx, Transcript& transcript) const;

  const PromptLibrary& library() const { return library_; }
  BackendKind kind() const { return backend_->kind(); }

 private:
  std::shared_ptr<const Backend> backend_;
  PromptLibrary library_;
};

}  // namespace replanvlm::vlm

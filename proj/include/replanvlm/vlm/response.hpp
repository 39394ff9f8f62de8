#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "replanvlm/vlm/prompt.hpp"

namespace replanvlm::vlm {

struct BotResponse {
  BotKind bot = BotKind::Decision;
  std::vector<std::string> plan;  // Decision
  std::string code;               // Decision, fenced block contents
  bool verdict = false;           // Inner/Extra: true = yes
  std::string reason;             // Inner/Extra

  friend bool operator==(const BotResponse&, const BotResponse&) = default;
};

enum class ResponseErrc { MissingSection, GarbledVerdict, BothVerdicts };

class ResponseParseError : public std::runtime_error {
 public:
  ResponseParseError(ResponseErrc code, std::string section, const std::string& message);
  ResponseErrc code() const noexcept { return code_; }
  const std::string& section() const noexcept { return section_; }

 private:
  ResponseErrc code_;
  std::string section_;
};

/// Decision: "PLAN:" with numbered lines, then "CODE:" with a ``` fenced block.
/// Inner/Extra: "VERDICT: yes|no" and "REASON: ..." (reason may span lines).
BotResponse parse_bot_response(const std::string& raw, BotKind bot);

std::string format_decision(const std::vector<std::string>& plan, const std::string& code);
std::string format_verdict(bool yes, const std::string& reason);

}  // namespace replanvlm::vlm

#include "replanvlm/vlm/response.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace replanvlm::vlm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

// "3. Pick up the apple" / "3) ..." / "- ..." -> "Pick up the apple"
std::string strip_number(const std::string& line) {
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) return trim(line.substr(i + 1));
  if (!line.empty() && (line[0] == '-' || line[0] == '*')) return trim(line.substr(1));
  return trim(line);
}

bool starts_with_ci(const std::string& line, const std::string& tag) {
  return lower(trim(line)).rfind(lower(tag), 0) == 0;
}

BotResponse parse_decision(const std::string& raw) {
  const auto lines = lines_of(raw);
  std::size_t plan_at = lines.size();
  std::size_t code_at = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (plan_at == lines.size() && starts_with_ci(lines[i], "PLAN:")) plan_at = i;
    if (code_at == lines.size() && starts_with_ci(lines[i], "CODE:")) code_at = i;
  }
  if (plan_at == lines.size()) throw ResponseParseError(ResponseErrc::MissingSection, "PLAN", "no PLAN: section");
  if (code_at == lines.size() || code_at < plan_at) {
    throw ResponseParseError(ResponseErrc::MissingSection, "CODE", "no CODE: section after the plan");
  }
  BotResponse r;
  r.bot = BotKind::Decision;
  const auto head = trim(trim(lines[plan_at]).substr(5));
  if (!head.empty()) r.plan.push_back(strip_number(head));
  for (std::size_t i = plan_at + 1; i < code_at; ++i) {
    const auto t = trim(lines[i]);
    if (!t.empty()) r.plan.push_back(strip_number(t));
  }
  std::size_t open = lines.size();
  for (std::size_t i = code_at + 1; i < lines.size(); ++i) {
    if (trim(lines[i]).rfind("```", 0) == 0) {
      open = i;
      break;
    }
    if (!trim(lines[i]).empty()) break;
  }
  if (open == lines.size()) throw ResponseParseError(ResponseErrc::MissingSection, "CODE", "CODE: has no fenced block");
  std::size_t close = lines.size();
  for (std::size_t i = open + 1; i < lines.size(); ++i) {
    if (trim(lines[i]) == "```") {
      close = i;
      break;
    }
  }
  if (close == lines.size()) throw ResponseParseError(ResponseErrc::MissingSection, "CODE", "unterminated code fence");
  for (std::size_t i = open + 1; i < close; ++i) {
    if (i > open + 1) r.code += "\n";
    r.code += lines[i];
  }
  return r;
}

BotResponse parse_review(const std::string& raw, BotKind bot) {
  const auto lines = lines_of(raw);
  std::optional<bool> verdict;
  std::optional<std::size_t> reason_at;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (starts_with_ci(lines[i], "VERDICT:")) {
      const auto v = lower(trim(trim(lines[i]).substr(8)));
      bool yes;
      if (v == "yes") {
        yes = true;
      } else if (v == "no") {
        yes = false;
      } else if (v.find("yes") != std::string::npos && v.find("no") != std::string::npos) {
        throw ResponseParseError(ResponseErrc::BothVerdicts, "VERDICT", "verdict gives both yes and no");
      } else {
        throw ResponseParseError(ResponseErrc::GarbledVerdict, "VERDICT", "verdict '" + v + "' is not yes or no");
      }
      if (verdict && *verdict != yes) {
        throw ResponseParseError(ResponseErrc::BothVerdicts, "VERDICT", "conflicting verdicts");
      }
      verdict = yes;
    } else if (!reason_at && starts_with_ci(lines[i], "REASON:")) {
      reason_at = i;
    }
  }
  if (!verdict) throw ResponseParseError(ResponseErrc::MissingSection, "VERDICT", "no VERDICT: line");
  if (!reason_at) throw ResponseParseError(ResponseErrc::MissingSection, "REASON", "no REASON: line");
  BotResponse r;
  r.bot = bot;
  r.verdict = *verdict;
  std::string reason = trim(lines[*reason_at]).substr(7);
  for (std::size_t i = *reason_at + 1; i < lines.size(); ++i) {
    if (starts_with_ci(lines[i], "VERDICT:")) break;
    reason += "\n" + lines[i];
  }
  r.reason = trim(reason);
  return r;
}

}  // namespace

ResponseParseError::ResponseParseError(ResponseErrc code, std::string section, const std::string& message)
    : std::runtime_error((code == ResponseErrc::MissingSection ? "MissingSection(" + section + "): " : "") + message),
      code_(code),
      section_(std::move(section)) {}

BotResponse parse_bot_response(const std::string& raw, BotKind bot) {
  return bot == BotKind::Decision ? parse_decision(raw) : parse_review(raw, bot);
}

std::string format_decision(const std::vector<std::string>& plan, const std::string& code) {
  std::ostringstream os;
  os << "PLAN:\n";
  for (std::size_t i = 0; i < plan.size(); ++i) os << i + 1 << ". " << plan[i] << "\n";
  os << "CODE:\n```\n" << code;
  if (!code.empty() && code.back() != '\n') os << "\n";
  os << "```\n";
  return os.str();
}

std::string format_verdict(bool yes, const std::string& reason) {
  return std::string("VERDICT: ") + (yes ? "yes" : "no") + "\nREASON: " + reason + "\n";
}

}  // namespace replanvlm::vlm

#include "replanvlm/dsl/program.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <sstream>

namespace replanvlm::dsl {

std::string to_string(Skill s) {
  switch (s) {
    case Skill::Pick: return "pick";
    case Skill::Place: return "place";
    case Skill::Give: return "give";
    case Skill::OpenDrawer: return "open_drawer";
    case Skill::Wait: return "wait";
  }
  return "?";
}

std::size_t arity(Skill s) { return s == Skill::Give ? 0 : 1; }

std::string SkillCall::selector() const {
  if (args.empty()) return {};
  if (const auto* s = std::get_if<std::string>(&args.front())) return *s;
  return {};
}

std::string to_string(DslErrc e) {
  switch (e) {
    case DslErrc::EmptyProgram: return "EmptyProgram";
    case DslErrc::Syntax: return "SyntaxError";
    case DslErrc::UnknownSkill: return "UnknownSkill";
    case DslErrc::Arity: return "ArityError";
    case DslErrc::ArgumentType: return "ArgumentTypeError";
    case DslErrc::UnresolvableSelector: return "UnresolvableSelector";
    case DslErrc::AmbiguousSelector: return "AmbiguousSelector";
  }
  return "?";
}

namespace {
std::string located(SourceLocation w, const std::string& m) {
  return std::to_string(w.line) + ":" + std::to_string(w.column) + ": " + m;
}

std::optional<Skill> skill_from_name(const std::string& name) {
  for (auto s : {Skill::Pick, Skill::Place, Skill::Give, Skill::OpenDrawer, Skill::Wait}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

class Parser {
 public:
  explicit Parser(const std::string& src) : src_(src) {}

  ActionProgram run() {
    ActionProgram prog;
    prog.source_text = src_;
    skip_separators();
    if (at_end()) throw DslError(DslErrc::EmptyProgram, where(), "program is empty");
    while (true) {
      prog.calls.push_back(call());
      skip_blanks();
      if (at_end()) break;
      if (peek() != ';' && peek() != '\n') {
        throw DslError(DslErrc::Syntax, where(), std::string("expected ';' or newline, found '") + peek() + "'");
      }
      skip_separators();
      if (at_end()) break;
    }
    return prog;
  }

 private:
  bool at_end() const { return pos_ >= src_.size(); }
  char peek() const { return src_[pos_]; }

  SourceLocation where() const {
    SourceLocation loc;
    for (std::size_t i = 0; i < pos_ && i < src_.size(); ++i) {
      if (src_[i] == '\n') {
        ++loc.line;
        loc.column = 1;
      } else {
        ++loc.column;
      }
    }
    return loc;
  }

  void skip_blanks() {
    while (!at_end() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) ++pos_;
  }

  void skip_separators() {
    while (!at_end() && (peek() == ';' || std::isspace(static_cast<unsigned char>(peek())) != 0)) ++pos_;
  }

  void expect(char c) {
    skip_blanks();
    if (at_end() || peek() != c) {
      throw DslError(DslErrc::Syntax, where(),
                     std::string("expected '") + c + "'" + (at_end() ? " before end of input" : ""));
    }
    ++pos_;
  }

  SkillCall call() {
    skip_blanks();
    const auto start = where();
    std::string name;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) != 0 || peek() == '_')) {
      name.push_back(peek());
      ++pos_;
    }
    if (name.empty()) {
      throw DslError(DslErrc::Syntax, start, std::string("expected a skill name, found '") + peek() + "'");
    }
    if (std::isdigit(static_cast<unsigned char>(name.front())) != 0) {
      throw DslError(DslErrc::Syntax, start, "identifier cannot start with a digit");
    }
    skip_blanks();
    if (at_end() || peek() != '(') {
      throw DslError(skill_from_name(name) ? DslErrc::Syntax : DslErrc::UnknownSkill, start,
                     skill_from_name(name) ? "expected '(' after '" + name + "'"
                                           : "'" + name + "' is not a skill call");
    }
    auto skill = skill_from_name(name);
    if (!skill) throw DslError(DslErrc::UnknownSkill, start, "unknown skill '" + name + "'");
    ++pos_;
    SkillCall c{*skill, {}};
    skip_blanks();
    if (!at_end() && peek() != ')') {
      c.args.push_back(argument());
      skip_blanks();
      while (!at_end() && peek() == ',') {
        ++pos_;
        c.args.push_back(argument());
        skip_blanks();
      }
    }
    expect(')');
    if (c.args.size() != arity(c.skill)) {
      throw DslError(DslErrc::Arity, start,
                     to_string(c.skill) + " takes " + std::to_string(arity(c.skill)) + " argument(s), got " +
                         std::to_string(c.args.size()));
    }
    check_types(c, start);
    return c;
  }

  static void check_types(const SkillCall& c, SourceLocation at) {
    if (c.skill == Skill::Wait) {
      const auto* n = std::get_if<double>(&c.args[0]);
      if (!n || *n < 0 || std::floor(*n) != *n) {
        throw DslError(DslErrc::ArgumentType, at, "wait takes a non-negative integer tick count");
      }
    } else if (arity(c.skill) == 1) {
      const auto* s = std::get_if<std::string>(&c.args[0]);
      if (!s) throw DslError(DslErrc::ArgumentType, at, to_string(c.skill) + " takes a quoted selector");
      if (s->find_first_not_of(" \t") == std::string::npos) {
        throw DslError(DslErrc::ArgumentType, at, to_string(c.skill) + " selector is blank");
      }
    }
  }

  Argument argument() {
    skip_blanks();
    if (at_end()) throw DslError(DslErrc::Syntax, where(), "expected an argument before end of input");
    const char c = peek();
    if (c == '\'' || c == '"') {
      const auto start = where();
      ++pos_;
      std::string s;
      while (!at_end() && peek() != c) {
        if (peek() == '\n') throw DslError(DslErrc::Syntax, start, "unterminated string");
        s.push_back(peek());
        ++pos_;
      }
      if (at_end()) throw DslError(DslErrc::Syntax, start, "unterminated string");
      ++pos_;
      return s;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) != 0 || c == '-' || c == '.') {
      const auto start = pos_;
      if (c == '-') ++pos_;
      bool digits = false;
      while (!at_end() && (std::isdigit(static_cast<unsigned char>(peek())) != 0 || peek() == '.')) {
        digits = digits || peek() != '.';
        ++pos_;
      }
      const std::string text = src_.substr(start, pos_ - start);
      if (!digits || std::count(text.begin(), text.end(), '.') > 1) {
        throw DslError(DslErrc::Syntax, where(), "malformed number '" + text + "'");
      }
      return std::stod(text);
    }
    throw DslError(DslErrc::Syntax, where(), std::string("expected a quoted string or number, found '") + c + "'");
  }

  const std::string& src_;
  std::size_t pos_ = 0;
};

std::string print_arg(const Argument& a) {
  if (const auto* s = std::get_if<std::string>(&a)) {
    const char q = s->find('\'') == std::string::npos ? '\'' : '"';
    return q + *s + q;
  }
  const double v = std::get<double>(a);
  std::ostringstream os;
  if (std::floor(v) == v && std::fabs(v) < 1e15) {
    os << static_cast<long long>(v);
  } else {
    os.precision(17);
    os << v;
  }
  return os.str();
}

}  // namespace

DslError::DslError(DslErrc code, SourceLocation where, const std::string& message)
    : std::runtime_error(to_string(code) + " at " + located(where, message)), code_(code), where_(where) {}

DslError::DslError(DslErrc code, const std::string& message)
    : std::runtime_error(to_string(code) + ": " + message), code_(code) {}

ActionProgram parse(const std::string& source) { return Parser(source).run(); }

std::string print(const SkillCall& call) {
  std::string out = to_string(call.skill) + "(";
  for (std::size_t i = 0; i < call.args.size(); ++i) out += (i ? ", " : "") + print_arg(call.args[i]);
  return out + ")";
}

std::string print(const ActionProgram& program) {
  std::string out;
  for (const auto& c : program.calls) out += print(c) + "\n";
  return out;
}

ValidationReport validate(const std::string& source) {
  ValidationReport report;
  try {
    report.program = parse(source);
  } catch (const DslError& e) {
    report.issues.push_back({Severity::Error, e.what(), e.where()});
    report.format_ok = false;
    return report;
  }
  for (std::size_t i = 0; i < report.program.calls.size(); ++i) {
    const auto& c = report.program.calls[i];
    if (c.skill == Skill::Wait && std::get<double>(c.args[0]) == 0.0) {
      report.issues.push_back({Severity::Warning, "wait(0) has no effect", {}});
    }
  }
  report.format_ok = std::none_of(report.issues.begin(), report.issues.end(),
                                  [](const ValidationIssue& i) { return i.severity == Severity::Error; });
  return report;
}

}  // namespace replanvlm::dsl

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace replanvlm::dsl {

enum class Skill { Pick, Place, Give, OpenDrawer, Wait };

std::string to_string(Skill s);
std::size_t arity(Skill s);

/// A string selector or a numeric literal.
using Argument = std::variant<std::string, double>;

struct SkillCall {
  Skill skill = Skill::Pick;
  std::vector<Argument> args;

  /// First argument as text (selector), or empty.
  std::string selector() const;

  friend bool operator==(const SkillCall&, const SkillCall&) = default;
};

struct ActionProgram {
  std::vector<SkillCall> calls;
  std::string source_text;

  friend bool operator==(const ActionProgram& a, const ActionProgram& b) { return a.calls == b.calls; }
};

struct SourceLocation {
  std::size_t line = 1;
  std::size_t column = 1;
};

enum class DslErrc {
  EmptyProgram,
  Syntax,
  UnknownSkill,
  Arity,
  ArgumentType,
  UnresolvableSelector,
  AmbiguousSelector,
};
std::string to_string(DslErrc e);

class DslError : public std::runtime_error {
 public:
  DslError(DslErrc code, SourceLocation where, const std::string& message);
  DslError(DslErrc code, const std::string& message);

  DslErrc code() const noexcept { return code_; }
  const SourceLocation& where() const noexcept { return where_; }

 private:
  DslErrc code_;
  SourceLocation where_;
};

/// program := call ((";" | newline)+ call)* with optional trailing separators;
/// call := ident "(" arglist? ")"; strings single- or double-quoted.
ActionProgram parse(const std::string& source);

/// One call per line; parse(print(p)) == p.
std::string print(const ActionProgram& program);
std::string print(const SkillCall& call);

enum class Severity { Warning, Error };

struct ValidationIssue {
  Severity severity = Severity::Error;
  std::string message;
  SourceLocation location;
};

struct ValidationReport {
  bool format_ok = false;
  std::vector<ValidationIssue> issues;
  ActionProgram program;  // valid when format_ok
};

/// Format check over program text: parse errors become error issues; no-op
/// calls such as wait(0) become warnings.
ValidationReport validate(const std::string& source);

}  // namespace replanvlm::dsl

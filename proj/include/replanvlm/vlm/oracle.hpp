#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "replanvlm/dsl/program.hpp"
#include "replanvlm/sim/types.hpp"

namespace replanvlm::vlm {

enum class CallRole { Prerequisite, Goal };

struct PlannedCall {
  dsl::SkillCall call;
  std::string line;  // plan text for this call
  CallRole role = CallRole::Goal;
};

struct OraclePlan {
  std::vector<PlannedCall> calls;

  std::vector<std::string> plan_lines() const;
  dsl::ActionProgram program() const;
  /// Program text, one call per line, no trailing newline.
  std::string code() const;
};

class NoPlanFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Plan text for a call: "Pick up the red cube", "Place it in the box", ...
std::string plan_line(const dsl::SkillCall& call);

/// Greedy search: open a drawer if a needed object is hidden, unstack whatever
/// sits on a needed object, then one pick plus place/give per unmet
/// condition, in condition order. Throws NoPlanFound.
OraclePlan plan_oracle(const sim::PerceptionSnapshot& snapshot, const sim::GoalPredicate& goal);

struct Review {
  bool yes = false;
  std::string reason;
};

/// Regenerates a plan with plan_oracle and compares effects with `code`.
Review review_oracle(const std::vector<std::string>& plan, const std::string& code,
                     const sim::PerceptionSnapshot& snapshot, const sim::GoalPredicate& goal);

/// yes iff the goal holds on the world rebuilt from `after`; otherwise the
/// reason lists unmet conditions and the before/after differences.
Review assess_oracle(const sim::PerceptionSnapshot& before, const sim::PerceptionSnapshot& after,
                     const sim::GoalPredicate& goal);

}  // namespace replanvlm::vlm

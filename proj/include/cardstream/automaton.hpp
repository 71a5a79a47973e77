#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cardstream/xpath.hpp"

namespace cardstream::engine {

enum class Origin : std::uint8_t { PositiveRule, NegativeRule, Query };

/// Linear branch automaton of one predicate. State 0 is the navigational
/// state the predicate is attached to; transition i goes from state i to
/// state i + 1 on `tests[i]`.
struct BranchAutomaton {
  std::vector<xpath::NodeTest> tests;
  /// `self_loop[i]`: wildcard self-loop on state i (descendant axis of step i).
  std::vector<bool> self_loop;
  std::optional<std::string> equals;

  std::size_t final_state() const noexcept { return tests.size(); }
};

/// Non-deterministic automaton of one rule or query: a navigational chain
/// plus the predicate branches hanging off its states. Descendant steps are
/// wildcard self-loops on the preceding state; nothing is determinized.
struct RuleAutomaton {
  Origin origin = Origin::PositiveRule;
  std::vector<xpath::NodeTest> tests;
  std::vector<bool> self_loop;
  /// Branch indexes attached to each navigational state (the state reached
  /// by consuming the step that carries the predicates).
  std::vector<std::vector<std::size_t>> predicates_at;
  std::vector<BranchAutomaton> branches;

  std::size_t nav_final() const noexcept { return tests.size(); }
  bool is_rule() const noexcept { return origin != Origin::Query; }

  /// Navigational states plus non-shared branch states.
  std::size_t state_count() const noexcept;
  /// Bytes this automaton occupies in the modelled working memory.
  std::uint64_t modelled_bytes() const noexcept;
};

/// Throws CompileError for expressions outside what the engine evaluates.
RuleAutomaton compile_rule(const xpath::PathExpr& expr, Origin origin = Origin::PositiveRule);

}  // namespace cardstream::engine

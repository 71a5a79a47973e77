#include "cardstream/automaton.hpp"

#include "cardstream/budget.hpp"
#include "cardstream/error.hpp"

namespace cardstream::engine {

std::size_t RuleAutomaton::state_count() const noexcept {
  std::size_t n = tests.size() + 1;
  for (const BranchAutomaton& b : branches) n += b.tests.size();
  return n;
}

std::uint64_t RuleAutomaton::modelled_bytes() const noexcept {
  std::uint64_t bytes = cost::kAutomatonHeader + cost::kAutomatonState * state_count();
  for (const BranchAutomaton& b : branches) {
    bytes += cost::kPredicate;
    if (b.equals) bytes += b.equals->size();
  }
  return bytes;
}

RuleAutomaton compile_rule(const xpath::PathExpr& expr, Origin origin) {
  if (expr.steps.empty()) throw CompileError("empty location path");
  RuleAutomaton a;
  a.origin = origin;
  a.self_loop.assign(expr.steps.size() + 1, false);
  a.predicates_at.resize(expr.steps.size() + 1);
  for (std::size_t i = 0; i < expr.steps.size(); ++i) {
    const xpath::Step& step = expr.steps[i];
    a.tests.push_back(step.test);
    if (step.axis == xpath::Axis::Descendant) a.self_loop[i] = true;
    for (const xpath::Predicate& pred : step.predicates) {
      if (pred.path.empty()) throw CompileError("empty predicate path");
      BranchAutomaton b;
      b.self_loop.assign(pred.path.size() + 1, false);
      for (std::size_t j = 0; j < pred.path.size(); ++j) {
        if (!pred.path[j].predicates.empty()) throw CompileError("nested predicates are not supported");
        b.tests.push_back(pred.path[j].test);
        if (pred.path[j].axis == xpath::Axis::Descendant) b.self_loop[j] = true;
      }
      b.equals = pred.equals;
      a.predicates_at[i + 1].push_back(a.branches.size());
      a.branches.push_back(std::move(b));
    }
  }
  return a;
}

}  // namespace cardstream::engine

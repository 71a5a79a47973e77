#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cardstream/access.hpp"
#include "cardstream/automaton.hpp"
#include "cardstream/budget.hpp"
#include "cardstream/document.hpp"
#include "cardstream/tag_bitmap.hpp"

namespace cardstream::engine {

/// What the evaluator tells its consumer after each input event.
///
/// `Emit` actions, in order, are the output stream. The other kinds report
/// buffering: an event parked under `buffer` (EmitPendingRef) is later
/// released or discarded together with the rest of that buffer
/// (CommitPending / DropPending, each exactly once per buffer, immediately
/// before the buffer's first event would be emitted).
struct OutputAction {
  enum class Kind : std::uint8_t { Emit, EmitPendingRef, CommitPending, DropPending, Skip };

  Kind kind = Kind::Emit;
  doc::Event event;
  std::uint32_t buffer = 0;
  std::uint64_t skip_hint = 0;
};

struct EvaluatorOptions {
  /// Drop tokens that provably cannot change the output.
  bool suspend = true;
  /// Cap on buffered output when the evaluator owns its accountant.
  std::optional<std::uint64_t> pending_cap = 16 * 1024;
};

enum class SignState : std::uint8_t { Positive, Negative, PositivePending, NegativePending };

/// Top of the sign stack: the sign propagated to the current element and the
/// depth of the element whose rules decided it.
struct SignEntry {
  SignState state = SignState::Negative;
  std::optional<std::size_t> anchor_depth;
};

/// Identity of a token, for instrumentation.
struct TokenKey {
  std::uint16_t automaton;
  std::int16_t branch;  // -1 for the navigational chain
  std::uint16_t state;

  friend bool operator==(const TokenKey&, const TokenKey&) = default;
  friend auto operator<=>(const TokenKey&, const TokenKey&) = default;
};

/// One-pass evaluator of a rule set and an optional query over an event
/// stream. Holds a token stack (one frame per open element), the predicate
/// instances anchored on each frame, the sign stack and the pending output.
/// Single-threaded; create one per stream.
class Evaluator {
public:
  /// Throws CompileError. When `accountant` is null the evaluator uses its
  /// own, unlimited except for `options.pending_cap`.
  Evaluator(const access::RuleSet& rules, const std::optional<xpath::PathExpr>& query,
            EvaluatorOptions options = {}, MemoryAccountant* accountant = nullptr);
  ~Evaluator();
  Evaluator(Evaluator&&) noexcept;
  Evaluator& operator=(Evaluator&&) noexcept;

  /// Throws Unbalanced or BudgetExceeded.
  std::vector<OutputAction> push(const doc::Event& event);

  /// Maps automaton labels onto dictionary ids so `can_skip_subtree` can read
  /// tag bitmaps. Labels absent from the dictionary never match.
  void bind_dictionary(std::span<const std::string> tags);

  /// Called right after pushing an Open: true only when nothing inside the
  /// just-opened element (itself included) can reach the output or settle
  /// a pending condition, given the tags present in its subtree.
  bool can_skip_subtree(const TagBitmap& present);

  /// Closes the current element as if its content were consumed.
  std::vector<OutputAction> skip_subtree(std::uint64_t hint = 0);

  /// Throws Unbalanced unless every element has been closed.
  void finish() const;

  const std::vector<RuleAutomaton>& automata() const noexcept;
  std::size_t depth() const noexcept;
  std::size_t token_count() const noexcept;
  std::size_t total_states() const noexcept;
  std::vector<TokenKey> top_tokens() const;
  SignEntry sign() const;
  std::size_t parked_events() const noexcept;
  std::size_t open_buffers() const noexcept;
  /// Predicate instances still unresolved across all frames.
  std::size_t unresolved_predicates() const noexcept;
  const MemoryAccountant& accountant() const noexcept;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Runs an evaluator over a whole stream and returns the emitted events.
doc::EventList evaluate_stream(const access::RuleSet& rules, const std::optional<xpath::PathExpr>& query,
                               const doc::EventList& events, EvaluatorOptions options = {});

}  // namespace cardstream::engine

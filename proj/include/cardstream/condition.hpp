#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "cardstream/budget.hpp"

namespace cardstream::engine {

enum class Tri : std::uint8_t { False, True, Unknown };

class ConditionPool;

/// A node of a monotone three-valued boolean formula. Values only ever move
/// from Unknown to a definite value. An `Or` may be left open and receive
/// more disjuncts until it is closed; this is how predicate instances and
/// "some descendant qualifies" facts are accumulated while streaming.
class CondNode {
public:
  enum class Op : std::uint8_t { Const, Not, And, Or };

  CondNode(const CondNode&) = delete;
  CondNode& operator=(const CondNode&) = delete;
  ~CondNode();

  Op op() const noexcept { return op_; }
  /// The settled value, or Unknown when not (yet) settled.
  Tri settled() const noexcept { return value_; }
  bool is_open() const noexcept { return open_; }
  std::uint32_t id() const noexcept { return id_; }

private:
  friend class ConditionPool;
  CondNode(Op op, Tri value, ConditionPool* pool, MemoryCategory category, std::uint32_t id)
      : op_(op), value_(value), category_(category), pool_(pool), id_(id) {}

  Op op_;
  Tri value_;
  bool open_ = false;
  MemoryCategory category_;
  std::uint32_t memo_pass_ = 0;
  Tri memo_ = Tri::Unknown;
  ConditionPool* pool_;
  std::uint32_t id_;
  std::vector<std::shared_ptr<CondNode>> children_;
};

using Cond = std::shared_ptr<CondNode>;

/// Builds and evaluates conditions, charging every node and edge to the
/// accountant. Construction folds constants eagerly so condition-free
/// workloads never allocate.
class ConditionPool {
public:
  explicit ConditionPool(MemoryAccountant* accountant = nullptr);

  ConditionPool(const ConditionPool&) = delete;
  ConditionPool& operator=(const ConditionPool&) = delete;

  const Cond& truth() const noexcept { return true_; }
  const Cond& falsity() const noexcept { return false_; }
  Cond constant(bool v) const { return v ? true_ : false_; }

  Cond negate(const Cond& c, MemoryCategory category);
  Cond both(const Cond& a, const Cond& b, MemoryCategory category);
  Cond either(const Cond& a, const Cond& b, MemoryCategory category);

  /// An open disjunction, initially with no disjuncts.
  Cond open_or(MemoryCategory category);
  /// Adds a disjunct to an open Or. No-op once the Or has settled.
  void append(const Cond& open, const Cond& disjunct);
  void close(const Cond& open);

  /// Full evaluation with memoization; settles nodes whose value is known.
  Tri evaluate(const Cond& c);

  std::uint64_t live_nodes() const noexcept { return live_; }

private:
  friend class CondNode;

  Cond make(CondNode::Op op, MemoryCategory category, std::vector<Cond> children);
  Tri eval(CondNode& n);
  void settle(CondNode& n, Tri v);
  void charge(MemoryCategory c, std::uint64_t bytes);
  void release(MemoryCategory c, std::uint64_t bytes) noexcept;

  MemoryAccountant* accountant_;
  Cond true_;
  Cond false_;
  std::uint32_t pass_ = 0;
  std::uint32_t next_id_ = 1;
  std::uint64_t live_ = 0;
};

}  // namespace cardstream::engine

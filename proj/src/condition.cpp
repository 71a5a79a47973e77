#include "cardstream/condition.hpp"

#include <algorithm>

#include "cardstream/error.hpp"

namespace cardstream {

std::string_view to_string(MemoryCategory c) noexcept {
  switch (c) {
    case MemoryCategory::Automata: return "automata";
    case MemoryCategory::Tokens: return "tokens";
    case MemoryCategory::SignStack: return "sign_stack";
    case MemoryCategory::PredicateSet: return "predicate_set";
    case MemoryCategory::PendingBuffers: return "pending_buffers";
    case MemoryCategory::SkeletonBuffer: return "skeleton_buffer";
    case MemoryCategory::ChunkWindow: return "chunk_window";
  }
  return "?";
}

void MemoryAccountant::charge(MemoryCategory c, std::uint64_t bytes) {
  if (bytes > limit_ - total_) {
    throw BudgetExceeded("working memory budget of " + std::to_string(limit_) + " bytes exceeded (" +
                         std::string(to_string(c)) + " needs " + std::to_string(bytes) + " more, " +
                         std::to_string(total_) + " in use)");
  }
  if (pending_cap_ && (c == MemoryCategory::PendingBuffers || c == MemoryCategory::SkeletonBuffer)) {
    std::uint64_t buffered = used_[index(MemoryCategory::PendingBuffers)] + used_[index(MemoryCategory::SkeletonBuffer)];
    if (buffered + bytes > *pending_cap_) {
      throw BudgetExceeded("pending output buffer cap of " + std::to_string(*pending_cap_) + " bytes exceeded");
    }
  }
  total_ += bytes;
  used_[index(c)] += bytes;
  peak_ = std::max(peak_, total_);
  peaks_[index(c)] = std::max(peaks_[index(c)], used_[index(c)]);
}

void MemoryAccountant::release(MemoryCategory c, std::uint64_t bytes) noexcept {
  bytes = std::min(bytes, used_[index(c)]);
  used_[index(c)] -= bytes;
  total_ -= bytes;
}

namespace engine {

namespace {

Tri negate_tri(Tri t) {
  switch (t) {
    case Tri::True: return Tri::False;
    case Tri::False: return Tri::True;
    default: return Tri::Unknown;
  }
}

}  // namespace

CondNode::~CondNode() {
  if (pool_) pool_->release(category_, cost::kCondNode + cost::kCondEdge * children_.size());
  if (pool_) --pool_->live_;
}

ConditionPool::ConditionPool(MemoryAccountant* accountant)
    : accountant_(accountant),
      true_(new CondNode(CondNode::Op::Const, Tri::True, nullptr, MemoryCategory::PredicateSet, 0)),
      false_(new CondNode(CondNode::Op::Const, Tri::False, nullptr, MemoryCategory::PredicateSet, 0)) {}

void ConditionPool::charge(MemoryCategory c, std::uint64_t bytes) {
  if (accountant_) accountant_->charge(c, bytes);
}

void ConditionPool::release(MemoryCategory c, std::uint64_t bytes) noexcept {
  if (accountant_) accountant_->release(c, bytes);
}

Cond ConditionPool::make(CondNode::Op op, MemoryCategory category, std::vector<Cond> children) {
  charge(category, cost::kCondNode + cost::kCondEdge * children.size());
  Cond node(new CondNode(op, Tri::Unknown, this, category, next_id_++));
  node->children_ = std::move(children);
  ++live_;
  return node;
}

Cond ConditionPool::negate(const Cond& c, MemoryCategory category) {
  switch (c->settled()) {
    case Tri::True: return false_;
    case Tri::False: return true_;
    case Tri::Unknown: break;
  }
  if (c->op() == CondNode::Op::Not) return c->children_.front();
  return make(CondNode::Op::Not, category, {c});
}

Cond ConditionPool::both(const Cond& a, const Cond& b, MemoryCategory category) {
  if (a->settled() == Tri::False || b->settled() == Tri::False) return false_;
  if (a->settled() == Tri::True) return b;
  if (b->settled() == Tri::True || a == b) return a;
  return make(CondNode::Op::And, category, {a, b});
}

Cond ConditionPool::either(const Cond& a, const Cond& b, MemoryCategory category) {
  if (a->settled() == Tri::True || b->settled() == Tri::True) return true_;
  if (a->settled() == Tri::False) return b;
  if (b->settled() == Tri::False || a == b) return a;
  return make(CondNode::Op::Or, category, {a, b});
}

Cond ConditionPool::open_or(MemoryCategory category) {
  Cond node = make(CondNode::Op::Or, category, {});
  node->open_ = true;
  return node;
}

void ConditionPool::append(const Cond& open, const Cond& disjunct) {
  if (open->settled() != Tri::Unknown) return;
  switch (disjunct->settled()) {
    case Tri::True: settle(*open, Tri::True); return;
    case Tri::False: return;
    case Tri::Unknown: break;
  }
  if (std::find(open->children_.begin(), open->children_.end(), disjunct) != open->children_.end()) return;
  charge(open->category_, cost::kCondEdge);
  open->children_.push_back(disjunct);
}

void ConditionPool::close(const Cond& open) {
  if (!open->open_) return;
  open->open_ = false;
  if (open->settled() == Tri::Unknown && open->children_.empty()) settle(*open, Tri::False);
}

void ConditionPool::settle(CondNode& n, Tri v) {
  n.value_ = v;
  n.open_ = false;
  release(n.category_, cost::kCondEdge * n.children_.size());
  std::vector<Cond> drop;
  drop.swap(n.children_);
}

Tri ConditionPool::evaluate(const Cond& c) {
  ++pass_;
  return eval(*c);
}

Tri ConditionPool::eval(CondNode& n) {
  if (n.value_ != Tri::Unknown) return n.value_;
  if (n.memo_pass_ == pass_) return n.memo_;

  Tri v = Tri::Unknown;
  switch (n.op_) {
    case CondNode::Op::Const:
      v = n.value_;
      break;
    case CondNode::Op::Not:
      v = negate_tri(eval(*n.children_.front()));
      break;
    case CondNode::Op::And:
    case CondNode::Op::Or: {
      // `dominant` decides the node outright; `neutral` children are dropped.
      const Tri dominant = n.op_ == CondNode::Op::And ? Tri::False : Tri::True;
      const Tri neutral = n.op_ == CondNode::Op::And ? Tri::True : Tri::False;
      bool decided = false;
      std::size_t kept = 0;
      for (std::size_t i = 0; i < n.children_.size(); ++i) {
        Tri t = eval(*n.children_[i]);
        if (t == dominant) {
          decided = true;
          break;
        }
        if (t != neutral) n.children_[kept++] = n.children_[i];
      }
      if (decided) {
        v = dominant;
      } else {
        std::size_t removed = n.children_.size() - kept;
        n.children_.resize(kept);
        release(n.category_, cost::kCondEdge * removed);
        if (kept == 0 && !n.open_) v = neutral;
      }
      break;
    }
  }
  if (v != Tri::Unknown) {
    settle(n, v);
  } else {
    n.memo_pass_ = pass_;
    n.memo_ = v;
  }
  return v;
}

}  // namespace engine
}  // namespace cardstream

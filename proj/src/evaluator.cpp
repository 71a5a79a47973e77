#include "cardstream/evaluator.hpp"

#include <algorithm>
#include <deque>
#include <unordered_map>

#include "cardstream/condition.hpp"
#include "cardstream/error.hpp"

namespace cardstream::engine {

namespace {

constexpr int kNoSymbol = -1;
constexpr int kWildcard = -2;
constexpr std::int16_t kNav = -1;

struct Token {
  std::uint16_t automaton = 0;
  std::int16_t branch = kNav;
  std::uint16_t state = 0;
  /// Navigational tokens: conjunction of the predicate instances met along
  /// the embedding that produced this token.
  Cond cond;
  /// Branch tokens: the predicate instances this branch can satisfy.
  std::vector<Cond> vars;
};

/// One entry of the token stack, plus the per-element facts the sign stack
/// and the output filter need.
struct Frame {
  int symbol = kNoSymbol;
  std::vector<Token> tokens;
  /// Predicate instances anchored on this element; settled at its Close.
  std::vector<Cond> predicate_set;
  Cond granted;
  /// Element or some descendant granted (membership in the authorized view).
  Cond in_view;
  /// Element or some descendant matched by the query.
  Cond query_below;
  Cond query_match;
  /// Element or some ancestor matched by the query.
  Cond query_above;
  Cond include;
  std::optional<std::size_t> anchor_depth;
  bool feeds_query_predicate = false;
  std::uint64_t charged = 0;
};

struct Parked {
  doc::Event event;
  Cond cond;
  std::uint32_t buffer = 0;
  MemoryCategory category = MemoryCategory::PendingBuffers;
  std::uint64_t bytes = 0;
};

struct Buffer {
  std::size_t remaining = 0;
  bool announced = false;
  Cond cond;
};

}  // namespace

struct Evaluator::Impl {
  Impl(const access::RuleSet& rules, const std::optional<xpath::PathExpr>& query, EvaluatorOptions opts,
       MemoryAccountant* external)
      : options(opts),
        own_accountant(external ? nullptr
                                : std::make_unique<MemoryAccountant>(MemoryAccountant::kUnlimited, opts.pending_cap)),
        acct(external ? external : own_accountant.get()),
        pool(acct) {
    for (const access::AccessRule& r : rules.rules) {
      automata.push_back(compile_rule(r.object, r.sign == access::Sign::Positive ? Origin::PositiveRule
                                                                                 : Origin::NegativeRule));
    }
    if (query) automata.push_back(compile_rule(*query, Origin::Query));
    has_query = query.has_value();
    if (automata.size() > 0x7fff) throw CompileError("too many rules");

    for (const RuleAutomaton& a : automata) automata_bytes += a.modelled_bytes();
    acct->charge(MemoryCategory::Automata, automata_bytes);

    for (const RuleAutomaton& a : automata) {
      std::vector<int> nav;
      for (const auto& t : a.tests) nav.push_back(intern(t));
      nav_symbols.push_back(std::move(nav));
      std::vector<std::vector<int>> branches;
      for (const BranchAutomaton& b : a.branches) {
        std::vector<int> syms;
        for (const auto& t : b.tests) syms.push_back(intern(t));
        branches.push_back(std::move(syms));
      }
      branch_symbols.push_back(std::move(branches));
    }

    for (std::size_t i = 0; i < automata.size(); ++i) {
      acct->charge(MemoryCategory::Tokens, cost::kToken);
      root_charged += cost::kToken;
      root_tokens.push_back(Token{static_cast<std::uint16_t>(i), kNav, 0, pool.truth(), {}});
    }
  }

  ~Impl() {
    // Conditions release their own bytes as they are destroyed.
    for (const Frame& f : frames) acct->release(MemoryCategory::Tokens, f.charged);
    acct->release(MemoryCategory::SignStack, cost::kSignEntry * frames.size());
    for (const Parked& p : parked) acct->release(p.category, p.bytes);
    acct->release(MemoryCategory::Tokens, root_charged);
    acct->release(MemoryCategory::Automata, automata_bytes);
  }

  int intern(const xpath::NodeTest& t) {
    if (t.is_wildcard()) return kWildcard;
    auto [it, inserted] = symbols.emplace(t.tag->str(), static_cast<int>(symbols.size()));
    if (inserted) symbol_dict_id.push_back(kNoSymbol);
    return it->second;
  }

  int lookup(const std::string& tag) const {
    auto it = symbols.find(tag);
    return it == symbols.end() ? kNoSymbol : it->second;
  }

  static bool label_matches(int label, int symbol) { return label == kWildcard || (label == symbol && symbol >= 0); }

  // ---------------------------------------------------------------- tokens

  void add_nav(Frame& f, std::uint16_t a, std::uint16_t state, const Cond& cond) {
    for (Token& t : f.tokens) {
      if (t.automaton == a && t.branch == kNav && t.state == state) {
        t.cond = pool.either(t.cond, cond, MemoryCategory::Tokens);
        return;
      }
    }
    acct->charge(MemoryCategory::Tokens, cost::kToken);
    f.charged += cost::kToken;
    f.tokens.push_back(Token{a, kNav, state, cond, {}});
  }

  void add_branch(Frame& f, std::uint16_t a, std::int16_t b, std::uint16_t state, const std::vector<Cond>& vars) {
    for (Token& t : f.tokens) {
      if (t.automaton == a && t.branch == b && t.state == state) {
        for (const Cond& v : vars) {
          if (std::find(t.vars.begin(), t.vars.end(), v) != t.vars.end()) continue;
          acct->charge(MemoryCategory::Tokens, cost::kTokenExtraRef);
          f.charged += cost::kTokenExtraRef;
          t.vars.push_back(v);
        }
        return;
      }
    }
    std::uint64_t bytes = cost::kToken + cost::kTokenExtraRef * (vars.size() - 1);
    acct->charge(MemoryCategory::Tokens, bytes);
    f.charged += bytes;
    f.tokens.push_back(Token{a, b, state, nullptr, vars});
  }

  // A branch reached its final state at element `f`.
  void satisfy(const RuleAutomaton& a, const std::vector<Cond>& vars, Frame& f) {
    for (const Cond& v : vars) {
      if (a.is_rule()) {
        pool.append(v, pool.truth());
      } else {
        // Query predicates see the authorized view: the witness must be in it.
        pool.append(v, f.in_view);
        f.feeds_query_predicate = true;
      }
    }
  }

  // Marks `in_view` (or `query_below`) true on every open frame.
  void propagate_true(Cond Frame::*member) {
    for (auto it = frames.rbegin(); it != frames.rend(); ++it) {
      Cond& c = (*it).*member;
      if (c->settled() == Tri::True) return;
      pool.append(c, pool.truth());
    }
  }

  bool has_live_positive_nav(const std::vector<Token>& tokens) const {
    for (const Token& t : tokens) {
      if (t.branch == kNav && automata[t.automaton].origin == Origin::PositiveRule) return true;
    }
    return false;
  }

  // ---------------------------------------------------------------- events

  void open(const std::string& tag, std::vector<OutputAction>& out) {
    const std::vector<Token>& parent_tokens = frames.empty() ? root_tokens : frames.back().tokens;
    const Cond parent_granted = frames.empty() ? pool.falsity() : frames.back().granted;
    const Cond parent_query_above = frames.empty() ? pool.falsity() : frames.back().query_above;
    const std::size_t depth = frames.size() + 1;

    acct->charge(MemoryCategory::SignStack, cost::kSignEntry);
    Frame f;
    f.symbol = lookup(tag);
    f.in_view = pool.open_or(MemoryCategory::SkeletonBuffer);
    f.query_below = has_query ? pool.open_or(MemoryCategory::SkeletonBuffer) : pool.falsity();

    // Inside a denied region with no positive rule left alive nothing below
    // can be granted, so prohibitions have nothing left to override.
    const bool drop_negative = options.suspend && pool.evaluate(parent_granted) == Tri::False &&
                               !has_live_positive_nav(parent_tokens);

    Cond positive = pool.falsity();
    Cond negative = pool.falsity();
    Cond query_hit = pool.falsity();

    for (const Token& tok : parent_tokens) {
      const RuleAutomaton& a = automata[tok.automaton];
      if (tok.branch == kNav) {
        if (options.suspend && tok.cond->settled() == Tri::False) continue;
        if (drop_negative && a.origin == Origin::NegativeRule) continue;
        if (a.self_loop[tok.state]) add_nav(f, tok.automaton, tok.state, tok.cond);
        if (tok.state >= a.nav_final() || !label_matches(nav_symbols[tok.automaton][tok.state], f.symbol)) continue;

        const auto next = static_cast<std::uint16_t>(tok.state + 1);
        Cond cond = tok.cond;
        for (std::size_t b : a.predicates_at[next]) {
          Cond var = pool.open_or(MemoryCategory::PredicateSet);
          f.predicate_set.push_back(var);
          add_branch(f, tok.automaton, static_cast<std::int16_t>(b), 0, {var});
          cond = pool.both(cond, var, MemoryCategory::SignStack);
        }
        if (next == a.nav_final()) {
          Cond& hits = a.origin == Origin::PositiveRule   ? positive
                       : a.origin == Origin::NegativeRule ? negative
                                                          : query_hit;
          hits = pool.either(hits, cond, MemoryCategory::SignStack);
        } else {
          add_nav(f, tok.automaton, next, cond);
        }
      } else {
        const BranchAutomaton& b = a.branches[static_cast<std::size_t>(tok.branch)];
        std::vector<Cond> vars;
        for (const Cond& v : tok.vars) {
          if (!options.suspend || v->settled() == Tri::Unknown) vars.push_back(v);
        }
        if (vars.empty()) continue;
        if (b.self_loop[tok.state]) add_branch(f, tok.automaton, tok.branch, tok.state, vars);
        if (tok.state >= b.final_state()) continue;
        if (!label_matches(branch_symbols[tok.automaton][static_cast<std::size_t>(tok.branch)][tok.state], f.symbol)) {
          continue;
        }
        const auto next = static_cast<std::uint16_t>(tok.state + 1);
        if (next == b.final_state() && !b.equals) {
          satisfy(a, vars, f);
        } else {
          add_branch(f, tok.automaton, tok.branch, next, vars);
        }
      }
    }

    // Sign stack: own rules decide, prohibitions first; otherwise inherit.
    f.granted = pool.both(pool.negate(negative, MemoryCategory::SignStack),
                          pool.either(positive, parent_granted, MemoryCategory::SignStack), MemoryCategory::SignStack);
    if (positive->settled() != Tri::False || negative->settled() != Tri::False) {
      f.anchor_depth = depth;
    } else if (!frames.empty()) {
      f.anchor_depth = frames.back().anchor_depth;
    }

    pool.append(f.in_view, f.granted);
    if (has_query) {
      f.query_match = pool.both(f.in_view, query_hit, MemoryCategory::SkeletonBuffer);
      pool.append(f.query_below, f.query_match);
      f.query_above = pool.either(f.query_match, parent_query_above, MemoryCategory::SkeletonBuffer);
      f.include = pool.either(f.query_below, pool.both(f.in_view, f.query_above, MemoryCategory::SkeletonBuffer),
                              MemoryCategory::SkeletonBuffer);
    } else {
      f.query_match = pool.falsity();
      f.query_above = pool.falsity();
      f.include = f.in_view;
    }

    if (f.in_view->settled() == Tri::True) propagate_true(&Frame::in_view);
    if (f.query_below->settled() == Tri::True) propagate_true(&Frame::query_below);
    frames.push_back(std::move(f));

    enqueue(doc::Event::open(tag), frames.back(), out);
    flush(out);
  }

  void value(const std::string& text, std::vector<OutputAction>& out) {
    if (frames.empty()) throw Unbalanced("value outside any element");
    Frame& f = frames.back();
    for (const Token& tok : f.tokens) {
      if (tok.branch == kNav) continue;
      const RuleAutomaton& a = automata[tok.automaton];
      const BranchAutomaton& b = a.branches[static_cast<std::size_t>(tok.branch)];
      if (tok.state == b.final_state() && b.equals && *b.equals == text) satisfy(a, tok.vars, f);
    }
    enqueue(doc::Event::value(text), f, out);
    flush(out);
  }

  void close(std::vector<OutputAction>& out, bool emit_close) {
    if (frames.empty()) throw Unbalanced("close without open");
    Frame& f = frames.back();
    for (const Cond& v : f.predicate_set) pool.close(v);
    pool.close(f.in_view);
    pool.close(f.query_below);
    if (emit_close) enqueue(doc::Event::close(), f, out);

    Cond in_view = f.in_view;
    Cond query_below = f.query_below;
    acct->release(MemoryCategory::Tokens, f.charged);
    acct->release(MemoryCategory::SignStack, cost::kSignEntry);
    frames.pop_back();
    if (!frames.empty()) {
      pool.append(frames.back().in_view, in_view);
      pool.append(frames.back().query_below, query_below);
    }
    flush(out);
  }

  // ---------------------------------------------------------------- output

  void enqueue(doc::Event event, const Frame& f, std::vector<OutputAction>& out) {
    const Cond& cond = f.include;
    Tri v = pool.evaluate(cond);
    if (v == Tri::False) return;
    if (parked.empty() && v == Tri::True) {
      out.push_back(OutputAction{OutputAction::Kind::Emit, std::move(event), 0, 0});
      return;
    }

    std::uint32_t id;
    auto it = open_buffer_for.find(cond.get());
    if (it == open_buffer_for.end()) {
      id = next_buffer++;
      open_buffer_for.emplace(cond.get(), id);
      buffers.emplace(id, Buffer{0, false, cond});
    } else {
      id = it->second;
    }
    const bool skeleton = !event.is_value() && f.granted->settled() == Tri::False;
    const MemoryCategory category = skeleton ? MemoryCategory::SkeletonBuffer : MemoryCategory::PendingBuffers;
    const std::uint64_t bytes = cost::kQueuedEvent + event.text.size();
    acct->charge(category, bytes);
    ++buffers[id].remaining;
    out.push_back(OutputAction{OutputAction::Kind::EmitPendingRef, event, id, 0});
    parked.push_back(Parked{std::move(event), cond, id, category, bytes});
  }

  void flush(std::vector<OutputAction>& out) {
    while (!parked.empty()) {
      Parked& p = parked.front();
      Tri v = pool.evaluate(p.cond);
      if (v == Tri::Unknown) break;
      Buffer& b = buffers.at(p.buffer);
      if (!b.announced) {
        announce(b, p.buffer, v, out);
      }
      if (v == Tri::True) out.push_back(OutputAction{OutputAction::Kind::Emit, std::move(p.event), 0, 0});
      acct->release(p.category, p.bytes);
      if (--b.remaining == 0) buffers.erase(p.buffer);
      parked.pop_front();
    }
    drop_settled_false(out);
  }

  void announce(Buffer& b, std::uint32_t id, Tri v, std::vector<OutputAction>& out) {
    b.announced = true;
    auto it = open_buffer_for.find(b.cond.get());
    if (it != open_buffer_for.end() && it->second == id) open_buffer_for.erase(it);
    out.push_back(
        OutputAction{v == Tri::True ? OutputAction::Kind::CommitPending : OutputAction::Kind::DropPending, {}, id, 0});
  }

  // Buffers blocked behind an unresolved head are released once they settle
  // to False; dropped events never reach the output so order is unaffected.
  void drop_settled_false(std::vector<OutputAction>& out) {
    if (parked.empty()) return;
    std::vector<std::uint32_t> dropped;
    for (auto& [id, b] : buffers) {
      if (!b.announced && pool.evaluate(b.cond) == Tri::False) dropped.push_back(id);
    }
    if (dropped.empty()) return;
    std::sort(dropped.begin(), dropped.end());
    for (std::uint32_t id : dropped) announce(buffers.at(id), id, Tri::False, out);
    auto is_dropped = [&](const Parked& p) { return std::binary_search(dropped.begin(), dropped.end(), p.buffer); };
    for (const Parked& p : parked) {
      if (is_dropped(p)) acct->release(p.category, p.bytes);
    }
    parked.erase(std::remove_if(parked.begin(), parked.end(), is_dropped), parked.end());
    for (std::uint32_t id : dropped) buffers.erase(id);
  }

  // ---------------------------------------------------------------- skipping

  bool reachable(const std::vector<int>& labels, std::size_t from, const TagBitmap& present) const {
    if (from >= labels.size()) return false;
    for (std::size_t i = from; i < labels.size(); ++i) {
      int label = labels[i];
      if (label == kWildcard) continue;
      int id = symbol_dict_id[static_cast<std::size_t>(label)];
      if (id < 0 || !present.test(static_cast<std::size_t>(id))) return false;
    }
    return true;
  }

  bool branch_may_fire(const Token& t, const TagBitmap& present) const {
    bool unresolved = std::any_of(t.vars.begin(), t.vars.end(),
                                  [&](const Cond& v) { return v->settled() == Tri::Unknown; });
    if (!unresolved) return false;
    const BranchAutomaton& b = automata[t.automaton].branches[static_cast<std::size_t>(t.branch)];
    if (t.state == b.final_state()) return b.equals.has_value();
    return reachable(branch_symbols[t.automaton][static_cast<std::size_t>(t.branch)], t.state, present);
  }

  bool can_skip(const TagBitmap& present) {
    if (!dictionary_bound || frames.empty()) return false;
    Frame& f = frames.back();

    for (const Token& t : f.tokens) {
      if (t.branch != kNav && automata[t.automaton].is_rule() && branch_may_fire(t, present)) return false;
    }

    // Forbidden: denied here and neither a permission nor a query match can
    // surface below.
    if (pool.evaluate(f.granted) == Tri::False) {
      bool progress_possible = std::any_of(f.tokens.begin(), f.tokens.end(), [&](const Token& t) {
        Origin o = automata[t.automaton].origin;
        return t.branch == kNav && o != Origin::NegativeRule && reachable(nav_symbols[t.automaton], t.state, present);
      });
      if (!progress_possible) return true;
    }

    // Irrelevant to the query: nothing below can match it, this element is
    // not inside a match, and ancestors are already known to be in the view.
    if (!has_query || f.feeds_query_predicate) return false;
    if (frames.size() > 1 && pool.evaluate(frames[frames.size() - 2].in_view) != Tri::True) return false;
    if (pool.evaluate(f.query_match) != Tri::False || pool.evaluate(f.query_above) != Tri::False) return false;
    for (const Token& t : f.tokens) {
      if (automata[t.automaton].is_rule()) continue;
      if (t.branch == kNav ? reachable(nav_symbols[t.automaton], t.state, present) : branch_may_fire(t, present)) {
        return false;
      }
    }
    return true;
  }

  EvaluatorOptions options;
  std::unique_ptr<MemoryAccountant> own_accountant;
  MemoryAccountant* acct;
  ConditionPool pool;

  std::vector<RuleAutomaton> automata;
  std::uint64_t automata_bytes = 0;
  bool has_query = false;
  std::unordered_map<std::string, int> symbols;
  std::vector<std::vector<int>> nav_symbols;
  std::vector<std::vector<std::vector<int>>> branch_symbols;
  std::vector<int> symbol_dict_id;
  bool dictionary_bound = false;

  std::vector<Token> root_tokens;
  std::uint64_t root_charged = 0;
  std::vector<Frame> frames;
  std::deque<Parked> parked;
  std::unordered_map<const CondNode*, std::uint32_t> open_buffer_for;
  std::unordered_map<std::uint32_t, Buffer> buffers;
  std::uint32_t next_buffer = 1;
};

Evaluator::Evaluator(const access::RuleSet& rules, const std::optional<xpath::PathExpr>& query,
                     EvaluatorOptions options, MemoryAccountant* accountant)
    : impl_(std::make_unique<Impl>(rules, query, options, accountant)) {}

Evaluator::~Evaluator() = default;
Evaluator::Evaluator(Evaluator&&) noexcept = default;
Evaluator& Evaluator::operator=(Evaluator&&) noexcept = default;

std::vector<OutputAction> Evaluator::push(const doc::Event& event) {
  std::vector<OutputAction> out;
  switch (event.kind) {
    case doc::Event::Kind::Open: impl_->open(event.text, out); break;
    case doc::Event::Kind::Value: impl_->value(event.text, out); break;
    case doc::Event::Kind::Close: impl_->close(out, true); break;
  }
  return out;
}

void Evaluator::bind_dictionary(std::span<const std::string> tags) {
  std::fill(impl_->symbol_dict_id.begin(), impl_->symbol_dict_id.end(), kNoSymbol);
  for (std::size_t i = 0; i < tags.size(); ++i) {
    auto it = impl_->symbols.find(tags[i]);
    if (it != impl_->symbols.end()) impl_->symbol_dict_id[static_cast<std::size_t>(it->second)] = static_cast<int>(i);
  }
  impl_->dictionary_bound = true;
}

bool Evaluator::can_skip_subtree(const TagBitmap& present) { return impl_->can_skip(present); }

std::vector<OutputAction> Evaluator::skip_subtree(std::uint64_t hint) {
  std::vector<OutputAction> out;
  out.push_back(OutputAction{OutputAction::Kind::Skip, {}, 0, hint});
  impl_->close(out, false);
  return out;
}

void Evaluator::finish() const {
  if (!impl_->frames.empty()) throw Unbalanced("stream ends with open elements");
}

const std::vector<RuleAutomaton>& Evaluator::automata() const noexcept { return impl_->automata; }
std::size_t Evaluator::depth() const noexcept { return impl_->frames.size(); }

std::size_t Evaluator::token_count() const noexcept {
  std::size_t n = impl_->root_tokens.size();
  for (const Frame& f : impl_->frames) n += f.tokens.size();
  return n;
}

std::size_t Evaluator::total_states() const noexcept {
  std::size_t n = 0;
  for (const RuleAutomaton& a : impl_->automata) n += a.state_count();
  return n;
}

std::vector<TokenKey> Evaluator::top_tokens() const {
  const auto& tokens = impl_->frames.empty() ? impl_->root_tokens : impl_->frames.back().tokens;
  std::vector<TokenKey> out;
  for (const Token& t : tokens) out.push_back(TokenKey{t.automaton, t.branch, t.state});
  std::sort(out.begin(), out.end());
  return out;
}

SignEntry Evaluator::sign() const {
  if (impl_->frames.empty()) return SignEntry{SignState::Negative, std::nullopt};
  const Frame& f = impl_->frames.back();
  SignEntry e;
  e.anchor_depth = f.anchor_depth;
  switch (impl_->pool.evaluate(f.granted)) {
    case Tri::True: e.state = SignState::Positive; break;
    case Tri::False: e.state = SignState::Negative; break;
    case Tri::Unknown: {
      bool inherited_grant = impl_->frames.size() > 1 &&
                             impl_->frames[impl_->frames.size() - 2].granted->settled() == Tri::True;
      e.state = inherited_grant ? SignState::NegativePending : SignState::PositivePending;
      break;
    }
  }
  return e;
}

std::size_t Evaluator::parked_events() const noexcept { return impl_->parked.size(); }
std::size_t Evaluator::open_buffers() const noexcept { return impl_->buffers.size(); }

std::size_t Evaluator::unresolved_predicates() const noexcept {
  std::size_t n = 0;
  for (const Frame& f : impl_->frames) {
    for (const Cond& v : f.predicate_set) n += v->settled() == Tri::Unknown;
  }
  return n;
}

const MemoryAccountant& Evaluator::accountant() const noexcept { return *impl_->acct; }

doc::EventList evaluate_stream(const access::RuleSet& rules, const std::optional<xpath::PathExpr>& query,
                               const doc::EventList& events, EvaluatorOptions options) {
  Evaluator ev(rules, query, options);
  doc::EventList out;
  for (const doc::Event& e : events) {
    for (OutputAction& a : ev.push(e)) {
      if (a.kind == OutputAction::Kind::Emit) out.push_back(std::move(a.event));
    }
  }
  ev.finish();
  if (ev.parked_events() != 0) throw std::logic_error("pending output left unresolved at end of stream");
  return out;
}

}  // namespace cardstream::engine

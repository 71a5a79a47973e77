#include "cardstream/access.hpp"

#include <algorithm>
#include <functional>
#include <map>

#include "cardstream/error.hpp"

namespace cardstream::access {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Per-node decisions in one pass: the sign stack of the model evaluated on
// the tree. A node's own matches decide it; otherwise it inherits.
std::map<doc::NodeId, Decision> all_decisions(const RuleSet& rules, const doc::Tree& doc) {
  std::vector<std::set<doc::NodeId>> matches;
  matches.reserve(rules.rules.size());
  for (const AccessRule& r : rules.rules) matches.push_back(xpath::oracle_match_nodes(r.object, doc));

  std::map<doc::NodeId, Decision> out;
  std::function<void(const doc::Node&, doc::NodeId&, Decision)> visit = [&](const doc::Node& n, doc::NodeId& id,
                                                                            Decision inherited) {
    bool positive = false;
    bool negative = false;
    for (std::size_t i = 0; i < rules.rules.size(); ++i) {
      if (!matches[i].count(id)) continue;
      (rules.rules[i].sign == Sign::Positive ? positive : negative) = true;
    }
    Decision d = negative ? Decision::Deny : positive ? Decision::Grant : inherited;
    out[id] = d;
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      id.path.push_back(i);
      visit(n.children[i], id, d);
      id.path.pop_back();
    }
  };
  doc::NodeId root;
  visit(doc, root, Decision::Deny);
  return out;
}

// Keeps nodes for which `keep_full` holds (with their text) and the bare
// skeleton of ancestors of kept nodes.
std::optional<doc::Node> prune(const doc::Node& n, doc::NodeId& id,
                               const std::function<bool(const doc::NodeId&)>& keep_full) {
  doc::Node out{n.tag, {}, std::nullopt};
  for (std::size_t i = 0; i < n.children.size(); ++i) {
    id.path.push_back(i);
    if (auto child = prune(n.children[i], id, keep_full)) out.children.push_back(std::move(*child));
    id.path.pop_back();
  }
  bool full = keep_full(id);
  if (full) out.text = n.text;
  if (full || !out.children.empty()) return out;
  return std::nullopt;
}

}  // namespace

std::vector<AccessRule> parse_rules(std::string_view text) {
  std::vector<AccessRule> rules;
  std::size_t line_no = 0;
  while (!text.empty()) {
    std::size_t nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;

    auto fail = [&](const std::string& msg) {
      return CompileError("rules line " + std::to_string(line_no) + ": " + msg);
    };
    AccessRule rule;
    if (line.front() == '+') rule.sign = Sign::Positive;
    else if (line.front() == '-') rule.sign = Sign::Negative;
    else throw fail("expected '+' or '-'");
    line = trim(line.substr(1));
    std::size_t space = line.find_first_of(" \t");
    if (line.empty() || space == std::string_view::npos) throw fail("expected '<sign> <subject> <xpath>'");
    rule.subject = std::string(line.substr(0, space));
    try {
      rule.object = xpath::parse_xpath(trim(line.substr(space)));
    } catch (const SyntaxError& e) {
      throw fail(e.what());
    }
    rules.push_back(std::move(rule));
  }
  return rules;
}

std::string rules_to_text(const std::vector<AccessRule>& rules) {
  std::string out;
  for (const AccessRule& r : rules) {
    out += r.sign == Sign::Positive ? "+ " : "- ";
    out += r.subject;
    out += ' ';
    out += xpath::xpath_to_string(r.object);
    out += '\n';
  }
  return out;
}

RuleSet rule_set_for(std::string subject, const std::vector<AccessRule>& rules) {
  RuleSet set{std::move(subject), {}};
  for (const AccessRule& r : rules) {
    if (r.subject == set.subject) set.rules.push_back(r);
  }
  return set;
}

std::vector<std::string> subjects_of(const std::vector<AccessRule>& rules) {
  std::vector<std::string> out;
  for (const AccessRule& r : rules) {
    if (std::find(out.begin(), out.end(), r.subject) == out.end()) out.push_back(r.subject);
  }
  return out;
}

Decision effective_decision(const RuleSet& rules, const doc::Tree& doc, const doc::NodeId& node) {
  // Direct reading: nearest anchor per rule, deepest anchors decide.
  std::optional<std::size_t> best_depth;
  bool negative_at_best = false;
  for (const AccessRule& r : rules.rules) {
    auto matched = xpath::oracle_match_nodes(r.object, doc);
    std::optional<std::size_t> anchor;
    for (std::size_t len = node.path.size() + 1; len-- > 0;) {
      doc::NodeId prefix{{node.path.begin(), node.path.begin() + static_cast<std::ptrdiff_t>(len)}};
      if (matched.count(prefix)) {
        anchor = len;
        break;
      }
    }
    if (!anchor) continue;
    if (!best_depth || *anchor > *best_depth) {
      best_depth = anchor;
      negative_at_best = r.sign == Sign::Negative;
    } else if (*anchor == *best_depth && r.sign == Sign::Negative) {
      negative_at_best = true;
    }
  }
  if (!best_depth || negative_at_best) return Decision::Deny;
  return Decision::Grant;
}

std::optional<doc::Tree> authorized_view(const RuleSet& rules, const doc::Tree& doc) {
  auto decisions = all_decisions(rules, doc);
  doc::NodeId root;
  return prune(doc, root, [&](const doc::NodeId& id) { return decisions.at(id) == Decision::Grant; });
}

std::optional<doc::Tree> query_view(const doc::Tree& doc, const xpath::PathExpr& query) {
  auto matched = xpath::oracle_match_nodes(query, doc);
  doc::NodeId root;
  return prune(doc, root, [&](const doc::NodeId& id) {
    for (std::size_t len = 0; len <= id.path.size(); ++len) {
      doc::NodeId prefix{{id.path.begin(), id.path.begin() + static_cast<std::ptrdiff_t>(len)}};
      if (matched.count(prefix)) return true;
    }
    return false;
  });
}

std::optional<doc::Tree> session_view(const RuleSet& rules, const std::optional<xpath::PathExpr>& query,
                                      const doc::Tree& doc) {
  auto view = authorized_view(rules, doc);
  if (!view || !query) return view;
  return query_view(*view, *query);
}

doc::EventList session_events(const RuleSet& rules, const std::optional<xpath::PathExpr>& query,
                              const doc::Tree& doc) {
  auto view = session_view(rules, query, doc);
  return view ? doc::tree_to_events(*view) : doc::EventList{};
}

}  // namespace cardstream::access

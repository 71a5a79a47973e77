#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cardstream/document.hpp"
#include "cardstream/xpath.hpp"

namespace cardstream::access {

enum class Sign : std::uint8_t { Positive, Negative };

struct AccessRule {
  Sign sign = Sign::Positive;
  std::string subject;
  xpath::PathExpr object;

  friend bool operator==(const AccessRule&, const AccessRule&) = default;
};

/// The rules enforced for one subject, in file order.
struct RuleSet {
  std::string subject;
  std::vector<AccessRule> rules;
};

enum class Decision : std::uint8_t { Grant, Deny };

/// Parses the rule file format: one `+|- <subject> <xpath>` per line, `#`
/// comments and blank lines ignored. Errors carry the line number.
std::vector<AccessRule> parse_rules(std::string_view text);

std::string rules_to_text(const std::vector<AccessRule>& rules);

/// Keeps the rules of `subject`.
RuleSet rule_set_for(std::string subject, const std::vector<AccessRule>& rules);

/// Every distinct subject in file order.
std::vector<std::string> subjects_of(const std::vector<AccessRule>& rules);

/// Most-specific anchor wins; at equal depth a prohibition wins; no
/// applicable rule means Deny.
Decision effective_decision(const RuleSet& rules, const doc::Tree& doc, const doc::NodeId& node);

/// Granted nodes plus the tag-only skeleton of their ancestors; nullopt when
/// nothing is granted.
std::optional<doc::Tree> authorized_view(const RuleSet& rules, const doc::Tree& doc);

/// Query matches with their full subtrees plus the ancestor skeleton.
std::optional<doc::Tree> query_view(const doc::Tree& doc, const xpath::PathExpr& query);

/// What a session delivers: the authorized view, then the query over it.
std::optional<doc::Tree> session_view(const RuleSet& rules, const std::optional<xpath::PathExpr>& query,
                                      const doc::Tree& doc);

/// Event stream of `session_view`; empty when the view is empty.
doc::EventList session_events(const RuleSet& rules, const std::optional<xpath::PathExpr>& query,
                              const doc::Tree& doc);

}  // namespace cardstream::access

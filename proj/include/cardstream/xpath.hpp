#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cardstream/document.hpp"
#include "cardstream/tag_name.hpp"

/// The XPath fragment with child and descendant axes, wildcards and
/// depth-1 predicates (`[rel/path]` or `[rel/path = "literal"]`).
namespace cardstream::xpath {

enum class Axis : std::uint8_t { Child, Descendant };

/// A node test: a tag name, or the wildcard when `tag` is empty.
struct NodeTest {
  std::optional<TagName> tag;

  static NodeTest wildcard() { return {}; }
  static NodeTest named(std::string name) { return {TagName(std::move(name))}; }

  bool is_wildcard() const noexcept { return !tag.has_value(); }
  bool matches(std::string_view name) const noexcept { return !tag || tag->str() == name; }

  friend bool operator==(const NodeTest&, const NodeTest&) = default;
};

struct Step;

struct Predicate {
  /// Relative path; its first step always uses the child axis and no step
  /// carries predicates of its own.
  std::vector<Step> path;
  /// When set, the node reached by `path` must have exactly this text.
  std::optional<std::string> equals;

  friend bool operator==(const Predicate&, const Predicate&) = default;
};

struct Step {
  Axis axis = Axis::Child;
  NodeTest test;
  std::vector<Predicate> predicates;

  friend bool operator==(const Step&, const Step&) = default;
};

/// An absolute location path.
struct PathExpr {
  std::vector<Step> steps;

  friend bool operator==(const PathExpr&, const PathExpr&) = default;
};

/// Throws SyntaxError for anything outside the fragment.
PathExpr parse_xpath(std::string_view text);

/// Canonical text; `parse_xpath(xpath_to_string(e)) == e`.
std::string xpath_to_string(const PathExpr& expr);

std::string quote_literal(std::string_view literal);

/// Reference semantics by naive recursive walk over the tree.
std::set<doc::NodeId> oracle_match_nodes(const PathExpr& expr, const doc::Tree& doc);

}  // namespace cardstream::xpath

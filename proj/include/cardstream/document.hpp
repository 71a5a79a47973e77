#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cardstream/tag_name.hpp"

namespace cardstream::doc {

/// An element. Leaf elements may carry text; an element never has both
/// children and text.
struct Node {
  TagName tag;
  std::vector<Node> children;
  std::optional<std::string> text;

  friend bool operator==(const Node&, const Node&) = default;
};

using Tree = Node;

/// Path of child indexes from the root; the root is the empty path.
struct NodeId {
  std::vector<std::size_t> path;

  std::size_t depth() const noexcept { return path.size(); }

  friend bool operator==(const NodeId&, const NodeId&) = default;
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

struct Event {
  enum class Kind : std::uint8_t { Open, Value, Close };

  Kind kind = Kind::Close;
  /// Tag name for Open, text for Value, empty for Close.
  std::string text;

  static Event open(const TagName& tag) { return {Kind::Open, tag.str()}; }
  static Event open(std::string tag) { return {Kind::Open, std::move(tag)}; }
  static Event value(std::string text) { return {Kind::Value, std::move(text)}; }
  static Event close() { return {Kind::Close, {}}; }

  bool is_open() const noexcept { return kind == Kind::Open; }
  bool is_value() const noexcept { return kind == Kind::Value; }
  bool is_close() const noexcept { return kind == Kind::Close; }

  friend bool operator==(const Event&, const Event&) = default;
};

using EventList = std::vector<Event>;

/// Parses element-only XML. Comments and the XML declaration are skipped;
/// whitespace-only text is insignificant. Attributes, mixed content, CDATA,
/// DOCTYPE and processing instructions raise UnsupportedFeature.
Tree parse_xml_text(std::string_view text);

EventList tree_to_events(const Tree& doc);

/// Rebuilds a tree from a balanced stream. Throws Unbalanced.
Tree events_to_tree(const EventList& events);

/// Canonical serialization: no insignificant whitespace, `<a/>` for empty
/// elements. Throws Unbalanced.
std::string events_to_text(const EventList& events);

std::string tree_to_text(const Tree& doc);

/// Escapes `&`, `<` and `>` for element content.
std::string escape_text(std::string_view text);

/// Incremental canonical serializer, used when events arrive one at a time.
class XmlWriter {
public:
  /// Returns the bytes made final by this event (may be empty).
  std::string push(const Event& event);
  /// Throws Unbalanced unless every element has been closed.
  void finish() const;
  std::size_t depth() const noexcept { return open_.size(); }

private:
  std::vector<std::string> open_;
  bool start_tag_pending_ = false;
};

std::size_t count_elements(const Tree& doc);
std::size_t depth_of(const Tree& doc);
const Node* find_node(const Tree& doc, const NodeId& id);

}  // namespace cardstream::doc

#include "cardstream/document.hpp"

#include <algorithm>

#include "cardstream/error.hpp"

namespace cardstream::doc {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

bool all_space(std::string_view s) { return std::all_of(s.begin(), s.end(), is_space); }

class XmlParser {
public:
  explicit XmlParser(std::string_view text) : text_(text) {}

  Tree parse() {
    if (text_.substr(0, 3) == "\xEF\xBB\xBF") pos_ = 3;
    if (starts_with("<?xml")) skip_past("?>", "unterminated XML declaration");
    skip_misc();
    if (at_end()) throw MalformedXml("document has no root element");
    if (peek() != '<') throw MalformedXml(where("text outside the root element"));

    std::vector<Frame> stack;
    stack.push_back(open_element());
    std::optional<Tree> root;
    if (stack.back().self_closed) root = finish(stack);

    while (!root) {
      if (at_end()) throw MalformedXml("unexpected end of input inside <" + stack.back().node.tag.str() + ">");
      if (peek() != '<') {
        stack.back().text += read_text();
        continue;
      }
      if (starts_with("<!--")) {
        skip_comment();
      } else if (starts_with("<![CDATA[")) {
        throw UnsupportedFeature(where("CDATA sections are not supported"));
      } else if (starts_with("<!")) {
        throw UnsupportedFeature(where("DOCTYPE declarations are not supported"));
      } else if (starts_with("<?")) {
        throw UnsupportedFeature(where("processing instructions are not supported"));
      } else if (starts_with("</")) {
        pos_ += 2;
        std::string name = read_name();
        skip_space();
        expect('>');
        if (name != stack.back().node.tag.str()) {
          throw MalformedXml(where("</" + name + "> does not close <" + stack.back().node.tag.str() + ">"));
        }
        root = finish(stack);
      } else {
        Frame child = open_element();
        if (!child.self_closed) {
          stack.push_back(std::move(child));
        } else {
          stack.back().node.children.push_back(std::move(child.node));
        }
      }
    }

    skip_misc();
    if (!at_end()) throw MalformedXml(where("content after the root element"));
    return std::move(*root);
  }

private:
  struct Frame {
    Node node;
    std::string text;
    bool self_closed = false;
  };

  // Pops the top frame, validates its content and attaches it to its parent.
  // Returns the root once the stack is empty.
  std::optional<Tree> finish(std::vector<Frame>& stack) {
    Frame top = std::move(stack.back());
    stack.pop_back();
    if (!all_space(top.text)) {
      if (!top.node.children.empty()) {
        throw UnsupportedFeature("mixed content in <" + top.node.tag.str() + ">");
      }
      top.node.text = std::move(top.text);
    }
    if (stack.empty()) return std::move(top.node);
    stack.back().node.children.push_back(std::move(top.node));
    return std::nullopt;
  }

  Frame open_element() {
    expect('<');
    std::string name = read_name();
    bool had_space = skip_space();
    if (!at_end() && TagName::is_name_start(peek())) {
      if (!had_space) throw MalformedXml(where("bad element name"));
      throw UnsupportedFeature(where("attributes are not supported"));
    }
    Frame frame{Node{TagName(name), {}, std::nullopt}, {}, false};
    if (starts_with("/>")) {
      pos_ += 2;
      frame.self_closed = true;
    } else {
      expect('>');
    }
    return frame;
  }

  std::string read_name() {
    std::size_t start = pos_;
    while (!at_end() && TagName::is_name_char(peek())) ++pos_;
    std::string_view name = text_.substr(start, pos_ - start);
    if (!at_end() && peek() == ':') throw UnsupportedFeature(where("namespaces are not supported"));
    if (!TagName::is_valid(name)) throw MalformedXml(where("bad element name"));
    return std::string(name);
  }

  std::string read_text() {
    std::string out;
    while (!at_end() && peek() != '<') {
      char c = text_[pos_++];
      if (c != '&') {
        out.push_back(c);
        continue;
      }
      std::size_t semi = text_.find(';', pos_);
      if (semi == std::string_view::npos || semi - pos_ > 6) throw MalformedXml(where("unterminated entity"));
      std::string_view entity = text_.substr(pos_, semi - pos_);
      if (entity == "lt") out.push_back('<');
      else if (entity == "gt") out.push_back('>');
      else if (entity == "amp") out.push_back('&');
      else if (entity == "quot") out.push_back('"');
      else if (entity == "apos") out.push_back('\'');
      else throw MalformedXml(where("unknown entity &" + std::string(entity) + ";"));
      pos_ = semi + 1;
    }
    return out;
  }

  void skip_misc() {
    for (;;) {
      skip_space();
      if (starts_with("<!--")) {
        skip_comment();
      } else if (starts_with("<!")) {
        throw UnsupportedFeature(where("DOCTYPE declarations are not supported"));
      } else if (starts_with("<?")) {
        throw UnsupportedFeature(where("processing instructions are not supported"));
      } else {
        return;
      }
    }
  }

  void skip_comment() { skip_past("-->", "unterminated comment"); }

  void skip_past(std::string_view terminator, const char* message) {
    std::size_t end = text_.find(terminator, pos_);
    if (end == std::string_view::npos) throw MalformedXml(where(message));
    pos_ = end + terminator.size();
  }

  bool skip_space() {
    std::size_t start = pos_;
    while (!at_end() && is_space(peek())) ++pos_;
    return pos_ != start;
  }

  void expect(char c) {
    if (at_end() || peek() != c) throw MalformedXml(where(std::string("expected '") + c + "'"));
    ++pos_;
  }

  bool starts_with(std::string_view s) const { return text_.substr(pos_, s.size()) == s; }
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }
  std::string where(const std::string& message) const { return message + " (offset " + std::to_string(pos_) + ")"; }

  std::string_view text_;
  std::size_t pos_ = 0;
};

void append_events(const Node& node, EventList& out) {
  out.push_back(Event::open(node.tag));
  if (node.text) out.push_back(Event::value(*node.text));
  for (const Node& child : node.children) append_events(child, out);
  out.push_back(Event::close());
}

}  // namespace

Tree parse_xml_text(std::string_view text) { return XmlParser(text).parse(); }

EventList tree_to_events(const Tree& doc) {
  EventList out;
  append_events(doc, out);
  return out;
}

Tree events_to_tree(const EventList& events) {
  std::vector<Node> stack;
  std::optional<Tree> root;
  for (const Event& e : events) {
    if (root) throw Unbalanced("events after the root element closed");
    switch (e.kind) {
      case Event::Kind::Open:
        stack.push_back(Node{TagName(e.text), {}, std::nullopt});
        break;
      case Event::Kind::Value:
        if (stack.empty()) throw Unbalanced("value outside any element");
        if (!stack.back().children.empty()) throw UnsupportedFeature("mixed content");
        stack.back().text = stack.back().text.value_or("") + e.text;
        break;
      case Event::Kind::Close: {
        if (stack.empty()) throw Unbalanced("close without open");
        Node node = std::move(stack.back());
        stack.pop_back();
        if (stack.empty()) {
          root = std::move(node);
        } else {
          if (stack.back().text) throw UnsupportedFeature("mixed content");
          stack.back().children.push_back(std::move(node));
        }
        break;
      }
    }
  }
  if (!root) throw Unbalanced(stack.empty() ? "empty event stream" : "stream ends with open elements");
  return std::move(*root);
}

std::string escape_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string XmlWriter::push(const Event& event) {
  std::string out;
  switch (event.kind) {
    case Event::Kind::Open:
      if (start_tag_pending_) out.push_back('>');
      out += '<';
      out += event.text;
      open_.push_back(event.text);
      start_tag_pending_ = true;
      break;
    case Event::Kind::Value:
      if (open_.empty()) throw Unbalanced("value outside any element");
      if (start_tag_pending_) out.push_back('>');
      start_tag_pending_ = false;
      out += escape_text(event.text);
      break;
    case Event::Kind::Close:
      if (open_.empty()) throw Unbalanced("close without open");
      if (start_tag_pending_) {
        out += "/>";
      } else {
        out += "</";
        out += open_.back();
        out += '>';
      }
      start_tag_pending_ = false;
      open_.pop_back();
      break;
  }
  return out;
}

void XmlWriter::finish() const {
  if (!open_.empty()) throw Unbalanced("stream ends with open elements");
}

std::string events_to_text(const EventList& events) {
  XmlWriter writer;
  std::string out;
  for (const Event& e : events) out += writer.push(e);
  writer.finish();
  return out;
}

std::string tree_to_text(const Tree& doc) { return events_to_text(tree_to_events(doc)); }

std::size_t count_elements(const Tree& doc) {
  std::size_t n = 1;
  for (const Node& c : doc.children) n += count_elements(c);
  return n;
}

std::size_t depth_of(const Tree& doc) {
  std::size_t d = 0;
  for (const Node& c : doc.children) d = std::max(d, depth_of(c));
  return d + 1;
}

const Node* find_node(const Tree& doc, const NodeId& id) {
  const Node* node = &doc;
  for (std::size_t index : id.path) {
    if (index >= node->children.size()) return nullptr;
    node = &node->children[index];
  }
  return node;
}

}  // namespace cardstream::doc

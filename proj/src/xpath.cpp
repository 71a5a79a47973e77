#include "cardstream/xpath.hpp"

#include "cardstream/error.hpp"

namespace cardstream::xpath {

namespace {

enum class Tok { End, Slash, DoubleSlash, Star, Name, LBracket, RBracket, Equals, Literal };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  std::size_t pos = 0;
};

class Lexer {
public:
  explicit Lexer(std::string_view text) : text_(text) {}

  Token next() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
    Token t;
    t.pos = pos_;
    if (pos_ >= text_.size()) return t;
    char c = text_[pos_];
    switch (c) {
      case '/':
        if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '/') {
          pos_ += 2;
          t.kind = Tok::DoubleSlash;
        } else {
          ++pos_;
          t.kind = Tok::Slash;
        }
        return t;
      case '*': ++pos_; t.kind = Tok::Star; return t;
      case '[': ++pos_; t.kind = Tok::LBracket; return t;
      case ']': ++pos_; t.kind = Tok::RBracket; return t;
      case '=': ++pos_; t.kind = Tok::Equals; return t;
      case '"': return literal(t);
      default: break;
    }
    if (TagName::is_name_start(c)) {
      std::size_t start = pos_;
      while (pos_ < text_.size() && TagName::is_name_char(text_[pos_])) ++pos_;
      t.kind = Tok::Name;
      t.text = std::string(text_.substr(start, pos_ - start));
      return t;
    }
    switch (c) {
      case '@': throw SyntaxError(pos_, "attribute tests are not supported");
      case '(': throw SyntaxError(pos_, "function calls are not supported");
      case ':': throw SyntaxError(pos_, "axis specifiers and namespaces are not supported");
      case '.': throw SyntaxError(pos_, "'.' and '..' are not supported");
      default: throw SyntaxError(pos_, std::string("unexpected character '") + c + "'");
    }
  }

private:
  Token literal(Token t) {
    ++pos_;
    std::string value;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      char c = text_[pos_++];
      if (c == '\\') {
        if (pos_ >= text_.size()) break;
        char e = text_[pos_++];
        if (e != '"' && e != '\\') throw SyntaxError(pos_ - 2, "bad escape in string literal");
        c = e;
      }
      value.push_back(c);
    }
    if (pos_ >= text_.size()) throw SyntaxError(t.pos, "unterminated string literal");
    ++pos_;
    t.kind = Tok::Literal;
    t.text = std::move(value);
    return t;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

// LL(1) recursive descent over the token stream.
class Parser {
public:
  explicit Parser(std::string_view text) : lexer_(text) { advance(); }

  PathExpr parse() {
    PathExpr expr;
    if (cur_.kind != Tok::Slash && cur_.kind != Tok::DoubleSlash) {
      fail("expression must start with '/' or '//'");
    }
    while (cur_.kind == Tok::Slash || cur_.kind == Tok::DoubleSlash) {
      Axis axis = cur_.kind == Tok::Slash ? Axis::Child : Axis::Descendant;
      advance();
      Step step{axis, node_test(), {}};
      while (cur_.kind == Tok::LBracket) step.predicates.push_back(predicate());
      expr.steps.push_back(std::move(step));
    }
    if (cur_.kind != Tok::End) fail("unexpected token");
    return expr;
  }

private:
  Predicate predicate() {
    advance();  // '['
    Predicate pred;
    pred.path.push_back(Step{Axis::Child, node_test(), {}});
    for (;;) {
      if (cur_.kind == Tok::LBracket) fail("nested predicates are not supported");
      if (cur_.kind != Tok::Slash && cur_.kind != Tok::DoubleSlash) break;
      Axis axis = cur_.kind == Tok::Slash ? Axis::Child : Axis::Descendant;
      advance();
      pred.path.push_back(Step{axis, node_test(), {}});
    }
    if (cur_.kind == Tok::Equals) {
      advance();
      if (cur_.kind != Tok::Literal) fail("expected a double-quoted string after '='");
      pred.equals = cur_.text;
      advance();
    }
    if (cur_.kind != Tok::RBracket) {
      if (cur_.kind == Tok::End) fail("unterminated predicate");
      fail("unsupported predicate form");
    }
    advance();
    return pred;
  }

  NodeTest node_test() {
    if (cur_.kind == Tok::Star) {
      advance();
      return NodeTest::wildcard();
    }
    if (cur_.kind != Tok::Name) fail("expected a name or '*'");
    NodeTest test{TagName(cur_.text)};
    advance();
    return test;
  }

  void advance() { cur_ = lexer_.next(); }
  [[noreturn]] void fail(const std::string& message) { throw SyntaxError(cur_.pos, message); }

  Lexer lexer_;
  Token cur_;
};

void print_test(const NodeTest& test, std::string& out) { out += test.tag ? test.tag->str() : "*"; }

}  // namespace

PathExpr parse_xpath(std::string_view text) { return Parser(text).parse(); }

std::string quote_literal(std::string_view literal) {
  std::string out = "\"";
  for (char c : literal) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string xpath_to_string(const PathExpr& expr) {
  std::string out;
  for (const Step& step : expr.steps) {
    out += step.axis == Axis::Child ? "/" : "//";
    print_test(step.test, out);
    for (const Predicate& pred : step.predicates) {
      out += '[';
      for (std::size_t i = 0; i < pred.path.size(); ++i) {
        if (i > 0) out += pred.path[i].axis == Axis::Child ? "/" : "//";
        print_test(pred.path[i].test, out);
      }
      if (pred.equals) {
        out += '=';
        out += quote_literal(*pred.equals);
      }
      out += ']';
    }
  }
  return out;
}

}  // namespace cardstream::xpath

#include <functional>

#include "cardstream/xpath.hpp"

namespace cardstream::xpath {

namespace {

struct FlatNode {
  const doc::Node* node;
  doc::NodeId id;
  std::vector<std::size_t> children;
  std::size_t subtree_end;  // one past the last descendant in pre-order
};

std::vector<FlatNode> flatten(const doc::Tree& tree) {
  std::vector<FlatNode> flat;
  std::function<std::size_t(const doc::Node&, doc::NodeId)> visit = [&](const doc::Node& n, doc::NodeId id) {
    std::size_t index = flat.size();
    flat.push_back(FlatNode{&n, id, {}, 0});
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      doc::NodeId child_id = id;
      child_id.path.push_back(i);
      std::size_t child = visit(n.children[i], std::move(child_id));
      flat[index].children.push_back(child);
    }
    flat[index].subtree_end = flat.size();
    return index;
  };
  visit(tree, {});
  return flat;
}

constexpr std::size_t kDocumentNode = static_cast<std::size_t>(-1);

class Walker {
public:
  explicit Walker(const doc::Tree& tree) : flat_(flatten(tree)) {}

  // Nodes reached from `context` by one step, in document order.
  std::vector<std::size_t> step(std::size_t context, const Step& s) const {
    std::vector<std::size_t> out;
    auto consider = [&](std::size_t n) {
      if (s.test.matches(flat_[n].node->tag.str()) && predicates_hold(n, s.predicates)) out.push_back(n);
    };
    if (context == kDocumentNode) {
      if (s.axis == Axis::Child) {
        consider(0);
      } else {
        for (std::size_t n = 0; n < flat_.size(); ++n) consider(n);
      }
    } else if (s.axis == Axis::Child) {
      for (std::size_t c : flat_[context].children) consider(c);
    } else {
      for (std::size_t n = context + 1; n < flat_[context].subtree_end; ++n) consider(n);
    }
    return out;
  }

  std::set<std::size_t> path(std::size_t context, const std::vector<Step>& steps) const {
    std::set<std::size_t> current{context};
    for (const Step& s : steps) {
      std::set<std::size_t> next;
      for (std::size_t c : current) {
        for (std::size_t n : step(c, s)) next.insert(n);
      }
      current = std::move(next);
    }
    return current;
  }

  bool predicates_hold(std::size_t n, const std::vector<Predicate>& preds) const {
    for (const Predicate& p : preds) {
      bool found = false;
      for (std::size_t m : path(n, p.path)) {
        const auto& text = flat_[m].node->text;
        if (!p.equals || (text && *text == *p.equals)) {
          found = true;
          break;
        }
      }
      if (!found) return false;
    }
    return true;
  }

  const doc::NodeId& id(std::size_t n) const { return flat_[n].id; }

private:
  std::vector<FlatNode> flat_;
};

}  // namespace

std::set<doc::NodeId> oracle_match_nodes(const PathExpr& expr, const doc::Tree& doc) {
  Walker walker(doc);
  std::set<doc::NodeId> out;
  for (std::size_t n : walker.path(kDocumentNode, expr.steps)) out.insert(walker.id(n));
  return out;
}

}  // namespace cardstream::xpath

#include <functional>

#include "cardstream/compact.hpp"
#include "cardstream/error.hpp"
#include "cardstream/evaluator.hpp"
#include "doctest.h"
#include "support/generators.hpp"

using namespace cardstream;
using namespace cardstream::compact;
using Bytes = std::vector<std::uint8_t>;

namespace {

// Tag set of every subtree by plain recursion over the tree.
std::map<doc::NodeId, std::set<std::string>> dom_tag_sets(const doc::Tree& t) {
  std::map<doc::NodeId, std::set<std::string>> out;
  doc::NodeId id;
  std::function<std::set<std::string>(const doc::Node&)> walk = [&](const doc::Node& n) {
    std::set<std::string> tags{n.tag.str()};
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      id.path.push_back(i);
      auto sub = walk(n.children[i]);
      tags.insert(sub.begin(), sub.end());
      id.path.pop_back();
    }
    out[id] = tags;
    return tags;
  };
  walk(t);
  return out;
}

std::set<std::string> names_of(const TagBitmap& b, const TagDictionary& dict) {
  std::set<std::string> out;
  for (std::size_t i : b.set_bits()) out.insert(dict.name(static_cast<std::uint32_t>(i)));
  return out;
}

struct Decoded {
  doc::Event event;
  std::optional<SubtreeDescriptor> descriptor;
  std::uint64_t end_offset;
};

std::vector<Decoded> decode_with_offsets(const Bytes& compact, CompactHeader& header) {
  header = read_compact_header(compact);
  auto tokens = std::span(compact).subspan(header.length);
  CompactCursor cursor;
  std::vector<Decoded> out;
  while (auto tok = decode_next(cursor, tokens, header.dict)) {
    out.push_back({tok->event, tok->descriptor, cursor.offset});
  }
  return out;
}

doc::EventList run_compact(const access::RuleSet& rules, const std::optional<xpath::PathExpr>& q,
                           const Bytes& compact, bool skip, std::size_t* skips = nullptr) {
  CompactHeader header = read_compact_header(compact);
  auto tokens = std::span(compact).subspan(header.length);
  engine::Evaluator ev(rules, q);
  ev.bind_dictionary(header.dict.tags());
  doc::EventList out;
  auto collect = [&](const std::vector<engine::OutputAction>& actions) {
    for (const auto& a : actions) {
      if (a.kind == engine::OutputAction::Kind::Emit) out.push_back(a.event);
    }
  };
  CompactCursor cursor;
  while (auto tok = decode_next(cursor, tokens, header.dict)) {
    collect(ev.push(tok->event));
    if (skip && tok->descriptor && can_skip(ev, *tok->descriptor)) {
      collect(ev.skip_subtree(tok->descriptor->size));
      compact::skip_subtree(cursor, *tok->descriptor);
      if (skips) ++*skips;
    }
  }
  ev.finish();
  return out;
}

access::RuleSet rules_of(const char* text) { return access::rule_set_for("s", access::parse_rules(text)); }

}  // namespace

TEST_CASE("dictionary in first-occurrence order") {
  TagDictionary d = build_dictionary(doc::parse_xml_text("<r><c/><a><c/><b/></a></r>"));
  CHECK(d.tags() == std::vector<std::string>{"r", "c", "a", "b"});
  CHECK(d.id("a") == std::optional<std::uint32_t>(2));
  CHECK_FALSE(d.id("z").has_value());
}

TEST_CASE("dictionary overflow") {
  TagDictionary d;
  for (std::size_t i = 0; i < kMaxTags; ++i) d.add("t" + std::to_string(i));
  CHECK(d.add("t0") == 0);
  CHECK_THROWS_AS(d.add("extra"), DictionaryOverflow);
  doc::Tree t = doc::parse_xml_text("<a/>");
  CHECK_THROWS_AS(build_descriptors(t, TagDictionary{}), DictionaryOverflow);
}

TEST_CASE("descriptor of a single element") {
  doc::Tree t = doc::parse_xml_text("<a/>");
  auto d = build_descriptors(t, build_dictionary(t));
  REQUIRE(d.size() == 1);
  CHECK(d.at(doc::NodeId{}).bitmap.set_bits() == std::vector<std::size_t>{0});
  CHECK(d.at(doc::NodeId{}).size == 1);
}

TEST_CASE("descriptors of the reference document") {
  doc::Tree t = doc::parse_xml_text("<a><b>x</b><c><b>y</b></c></a>");
  TagDictionary dict = build_dictionary(t);
  REQUIRE(dict.tags() == std::vector<std::string>{"a", "b", "c"});
  auto d = build_descriptors(t, dict);
  auto dom = dom_tag_sets(t);
  CHECK(names_of(d.at(doc::NodeId{{1}}).bitmap, dict) == std::set<std::string>{"b", "c"});
  CHECK(names_of(d.at(doc::NodeId{}).bitmap, dict) == std::set<std::string>{"a", "b", "c"});
  for (const auto& [id, desc] : d) CHECK(names_of(desc.bitmap, dict) == dom.at(id));
}

TEST_CASE("descriptor bitmaps equal subtree tag sets and contain their children") {
  testgen::Rng rng(61);
  testgen::TreeShape shape;
  shape.alphabet = 8;
  for (int i = 0; i < 1000; ++i) {
    doc::Tree t = testgen::random_tree(rng, shape);
    TagDictionary dict = build_dictionary(t);
    auto d = build_descriptors(t, dict);
    auto dom = dom_tag_sets(t);
    CHECK(d.size() == dom.size());
    for (const auto& [id, desc] : d) {
      CHECK(names_of(desc.bitmap, dict) == dom.at(id));
      if (!id.path.empty()) {
        doc::NodeId parent = id;
        parent.path.pop_back();
        CHECK(desc.bitmap.is_subset_of(d.at(parent).bitmap));
      }
    }
  }
}

TEST_CASE("encoding of a single element is byte-exact") {
  Bytes expected{'C', 'X', 'D', '1', 0x01, 0x01, 'a', kOpen, 0x00, 0x80, 0x01, kClose};
  CHECK(encode_compact(doc::parse_xml_text("<a/>")) == expected);
}

TEST_CASE("child bitmaps are encoded over the parent's bits") {
  // dict {a,b,c,d}; root bitmap 0xf0, c's bitmap over parent bits {a,b,c,d}
  // marks c and d; d's bitmap over c's bits {c,d} marks d.
  doc::Tree t = doc::parse_xml_text("<a><b/><c><d>x</d></c></a>");
  Bytes got = encode_compact(t);
  Bytes expected{'C', 'X', 'D', '1', 4, 1, 'a', 1, 'b', 1, 'c', 1, 'd',
                 kOpen, 0, 0xf0, 19,
                 kOpen, 1, 0x40, 1, kClose,
                 kOpen, 2, 0x30, 9,
                 kOpen, 3, 0x40, 4, kText, 1, 'x', kClose,
                 kClose,
                 kClose};
  CHECK(got == expected);
}

TEST_CASE("first token of a single element") {
  Bytes c = encode_compact(doc::parse_xml_text("<a/>"));
  CompactHeader h = read_compact_header(c);
  CompactCursor cursor;
  auto tok = decode_next(cursor, std::span(c).subspan(h.length), h.dict);
  REQUIRE(tok.has_value());
  CHECK(tok->event == doc::Event::open("a"));
  REQUIRE(tok->descriptor.has_value());
  CHECK(tok->descriptor->bitmap.set_bits() == std::vector<std::size_t>{0});
}

TEST_CASE("corrupt streams") {
  Bytes good = encode_compact(doc::parse_xml_text("<a><b>x</b></a>"));
  CHECK_NOTHROW(decode_events(good));
  auto corrupt = [&](std::function<void(Bytes&)> edit) {
    Bytes b = good;
    edit(b);
    return b;
  };
  std::size_t body = read_compact_header(good).length;
  CHECK_THROWS_AS(decode_events(corrupt([&](Bytes& b) { b[body] = 0x07; })), CorruptStream);
  CHECK_THROWS_AS(decode_events(corrupt([&](Bytes& b) { b.pop_back(); })), CorruptStream);
  CHECK_THROWS_AS(decode_events(corrupt([&](Bytes& b) { b.push_back(kClose); })), CorruptStream);
  CHECK_THROWS_AS(decode_events(corrupt([&](Bytes& b) { b[0] = 'X'; })), CorruptStream);
  // Root bitmap byte: padding bit set, then own tag bit cleared.
  CHECK_THROWS_AS(decode_events(corrupt([&](Bytes& b) { b[body + 2] |= 0x01; })), CorruptStream);
  CHECK_THROWS_AS(decode_events(corrupt([&](Bytes& b) { b[body + 2] &= 0x7f; })), CorruptStream);
  CHECK_THROWS_AS(decode_events(corrupt([&](Bytes& b) { b.resize(body); })), CorruptStream);
  // Tag id beyond the dictionary.
  CHECK_THROWS_AS(decode_events(corrupt([&](Bytes& b) { b[body + 1] = 0x05; })), CorruptStream);
  // Varint longer than 64 bits.
  Bytes overflow{'C', 'X', 'D', '1', 0x01, 0x01, 'a', kOpen, 0x00, 0x80};
  for (int i = 0; i < 10; ++i) overflow.push_back(0xff);
  overflow.push_back(0x01);
  CHECK_THROWS_AS(decode_events(overflow), CorruptStream);
  // Child bitmap wider than its parent allows: parent {a,b} gives 2 bits.
  Bytes wide{'C', 'X', 'D', '1', 0x02, 0x01, 'a', 0x01, 'b', kOpen, 0x00, 0xc0, 0x07,
             kOpen, 0x01, 0x60, 0x01, kClose, kClose};
  CHECK_THROWS_AS(decode_events(wide), CorruptStream);
}

TEST_CASE("encode then decode reproduces the event stream") {
  testgen::Rng rng(67);
  testgen::TreeShape shape;
  shape.alphabet = 8;
  for (int i = 0; i < 1000; ++i) {
    doc::Tree t = testgen::random_tree(rng, shape);
    CHECK(decode_events(encode_compact(t)) == doc::tree_to_events(t));
  }
}

TEST_CASE("sizes land exactly after the matching close") {
  testgen::Rng rng(71);
  for (int i = 0; i < 300; ++i) {
    doc::Tree t = testgen::random_tree(rng);
    Bytes c = encode_compact(t);
    CompactHeader h;
    std::vector<Decoded> toks = decode_with_offsets(c, h);
    auto descriptors = build_descriptors(t, h.dict);
    std::vector<std::size_t> open;
    std::vector<TagBitmap> bitmaps;
    std::map<std::size_t, std::size_t> close_of;
    for (std::size_t k = 0; k < toks.size(); ++k) {
      if (toks[k].event.is_open()) open.push_back(k);
      if (toks[k].event.is_close()) {
        close_of[open.back()] = k;
        open.pop_back();
      }
    }
    for (const auto& [o, cl] : close_of) {
      CHECK(toks[o].end_offset + toks[o].descriptor->size == toks[cl].end_offset);
    }
    // Decoded bitmaps: contained in the parent's, equal to the built ones.
    std::vector<doc::NodeId> ids;
    std::vector<std::size_t> next_child;
    for (const Decoded& d : toks) {
      if (d.event.is_open()) {
        doc::NodeId id;
        if (!ids.empty()) {
          id = ids.back();
          id.path.push_back(next_child.back()++);
          CHECK(d.descriptor->bitmap.is_subset_of(bitmaps.back()));
        }
        CHECK(d.descriptor->bitmap == descriptors.at(id).bitmap);
        ids.push_back(id);
        next_child.push_back(0);
        bitmaps.push_back(d.descriptor->bitmap);
      } else if (d.event.is_close()) {
        ids.pop_back();
        next_child.pop_back();
        bitmaps.pop_back();
      }
    }
  }
}

TEST_CASE("cursor skip jumps to the next sibling") {
  Bytes c = encode_compact(doc::parse_xml_text("<a><b><c>x</c><c>y</c></b><d/></a>"));
  CompactHeader h = read_compact_header(c);
  auto tokens = std::span(c).subspan(h.length);
  CompactCursor cursor;
  decode_next(cursor, tokens, h.dict);
  auto b = decode_next(cursor, tokens, h.dict);
  REQUIRE(b->event == doc::Event::open("b"));
  skip_subtree(cursor, *b->descriptor);
  CHECK(cursor.open.size() == 1);
  CHECK(decode_next(cursor, tokens, h.dict)->event == doc::Event::open("d"));
}

TEST_CASE("recursive encoding is smaller than full-width encoding") {
  testgen::Rng rng(73);
  testgen::TreeShape shape;
  shape.alphabet = 3;
  shape.max_depth = 3;
  shape.max_nodes = 60;
  for (int i = 0; i < 200; ++i) {
    doc::Tree t = testgen::random_tree(rng, shape);
    TagDictionary dict = build_dictionary(t);
    CHECK(compact_index_overhead(t, dict).total() < full_width_index_overhead(t, dict).total());
  }
  shape.alphabet = 8;
  shape.max_depth = 8;
  for (int i = 0; i < 200; ++i) {
    doc::Tree t = testgen::random_tree(rng, shape);
    TagDictionary dict = build_dictionary(t);
    IndexOverhead rec = compact_index_overhead(t, dict);
    IndexOverhead full = full_width_index_overhead(t, dict);
    CHECK(rec.bitmap_bytes <= full.bitmap_bytes);
    CHECK(rec.total() < full.total());
  }
}

TEST_CASE("skip decisions on hand-built cases") {
  doc::Tree t = doc::parse_xml_text("<a><b><c/></b><d/></a>");
  Bytes c = encode_compact(t);
  CompactHeader h = read_compact_header(c);
  auto tokens = std::span(c).subspan(h.length);

  {
    engine::Evaluator ev(rules_of("+ s //d"), std::nullopt);
    ev.bind_dictionary(h.dict.tags());
    CompactCursor cursor;
    auto a = decode_next(cursor, tokens, h.dict);
    ev.push(a->event);
    CHECK_FALSE(can_skip(ev, *a->descriptor));
    auto b = decode_next(cursor, tokens, h.dict);
    ev.push(b->event);
    CHECK(ev.sign().state == engine::SignState::Negative);
    CHECK(names_of(b->descriptor->bitmap, h.dict) == std::set<std::string>{"b", "c"});
    CHECK(can_skip(ev, *b->descriptor));
  }
  for (const char* rules : {"+ s /a", "+ s /a\n- s /a/b", ""}) {
    CAPTURE(rules);
    engine::Evaluator ev(rules_of(rules), xpath::parse_xpath("//*"));
    ev.bind_dictionary(h.dict.tags());
    CompactCursor cursor;
    while (auto tok = decode_next(cursor, tokens, h.dict)) {
      ev.push(tok->event);
      if (tok->descriptor) CHECK_FALSE(can_skip(ev, *tok->descriptor));
    }
  }
}

TEST_CASE("skipping never changes the output") {
  testgen::Rng rng(79);
  std::size_t skips = 0;
  for (int i = 0; i < 3000; ++i) {
    doc::Tree t = testgen::random_tree(rng);
    access::RuleSet rs = testgen::random_rules(rng, {}, 6);
    auto q = testgen::random_query(rng);
    Bytes c = encode_compact(t);
    doc::EventList with = run_compact(rs, q, c, true, &skips);
    CHECK(with == run_compact(rs, q, c, false));
    CHECK(with == access::session_events(rs, q, t));
  }
  CHECK(skips > 1000);
}

#include "cardstream/compact.hpp"

#include <cstring>

#include "cardstream/error.hpp"
#include "cardstream/evaluator.hpp"

namespace cardstream::compact {

namespace {

constexpr char kMagic[4] = {'C', 'X', 'D', '1'};

std::size_t bitmap_width(std::size_t candidate_bits) { return (candidate_bits + 7) / 8; }

// Writes the bits of `bitmap` at the positions listed in `positions`.
void put_subset(std::vector<std::uint8_t>& out, const TagBitmap& bitmap, const std::vector<std::size_t>& positions) {
  std::size_t base = out.size();
  out.resize(base + bitmap_width(positions.size()), 0);
  for (std::size_t j = 0; j < positions.size(); ++j) {
    if (bitmap.test(positions[j])) out[base + j / 8] |= static_cast<std::uint8_t>(0x80u >> (j % 8));
  }
}

std::vector<std::size_t> all_positions(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

struct Layout {
  std::uint32_t tag_id = 0;
  TagBitmap bitmap;
  std::uint64_t size = 0;
  std::vector<Layout> children;
};

// Bitmaps bottom-up, then sizes once every child's encoded length is known.
Layout lay_out(const doc::Node& node, const TagDictionary& dict) {
  Layout l;
  auto id = dict.id(node.tag.str());
  if (!id) throw DictionaryOverflow("tag '" + node.tag.str() + "' is missing from the dictionary");
  l.tag_id = *id;
  l.bitmap = TagBitmap(dict.size());
  l.bitmap.set(*id);
  for (const doc::Node& c : node.children) {
    l.children.push_back(lay_out(c, dict));
    l.bitmap.unite(l.children.back().bitmap);
  }
  const std::size_t parent_bits = l.bitmap.count();
  l.size = 1;  // CLOSE
  if (node.text) l.size += 1 + varint_length(node.text->size()) + node.text->size();
  for (const Layout& c : l.children) {
    l.size += 1 + varint_length(c.tag_id) + bitmap_width(parent_bits) + varint_length(c.size) + c.size;
  }
  return l;
}

void emit(const doc::Node& node, const Layout& l, const std::vector<std::size_t>& positions,
          std::vector<std::uint8_t>& out) {
  out.push_back(kOpen);
  put_varint(out, l.tag_id);
  put_subset(out, l.bitmap, positions);
  put_varint(out, l.size);
  if (node.text) {
    out.push_back(kText);
    put_varint(out, node.text->size());
    out.insert(out.end(), node.text->begin(), node.text->end());
  }
  if (!node.children.empty()) {
    std::vector<std::size_t> mine = l.bitmap.set_bits();
    for (std::size_t i = 0; i < node.children.size(); ++i) emit(node.children[i], l.children[i], mine, out);
  }
  out.push_back(kClose);
}

void collect(const Layout& l, doc::NodeId& id, std::map<doc::NodeId, SubtreeDescriptor>& out) {
  out.emplace(id, SubtreeDescriptor{l.bitmap, l.size});
  for (std::size_t i = 0; i < l.children.size(); ++i) {
    id.path.push_back(i);
    collect(l.children[i], id, out);
    id.path.pop_back();
  }
}

void add_overhead(const Layout& l, std::size_t width, IndexOverhead& out) {
  out.bitmap_bytes += width;
  out.size_bytes += varint_length(l.size);
  for (const Layout& c : l.children) add_overhead(c, bitmap_width(l.bitmap.count()), out);
}

void collect_tags(const doc::Node& n, TagDictionary& dict) {
  dict.add(n.tag.str());
  for (const doc::Node& c : n.children) collect_tags(c, dict);
}

std::uint8_t require(ByteReader& r) {
  auto b = r.next();
  if (!b) throw CorruptStream("truncated token stream");
  return *b;
}

std::uint64_t read_varint(ByteReader& r) {
  std::uint64_t value = 0;
  for (int shift = 0; shift < 64; shift += 7) {
    std::uint8_t b = require(r);
    std::uint64_t bits = b & 0x7fu;
    if (shift == 63 && bits > 1) throw CorruptStream("varint overflows 64 bits");
    value |= bits << shift;
    if (!(b & 0x80u)) return value;
  }
  throw CorruptStream("varint overflows 64 bits");
}

TagBitmap read_subset(ByteReader& r, const std::vector<std::size_t>& positions, std::size_t width_bits) {
  TagBitmap out(width_bits);
  const std::size_t bytes = bitmap_width(positions.size());
  for (std::size_t i = 0; i < bytes; ++i) {
    std::uint8_t b = require(r);
    for (std::size_t bit = 0; bit < 8; ++bit) {
      if (!(b & (0x80u >> bit))) continue;
      std::size_t j = i * 8 + bit;
      if (j >= positions.size()) throw CorruptStream("bitmap wider than its parent allows");
      out.set(positions[j]);
    }
  }
  return out;
}

}  // namespace

std::uint32_t TagDictionary::add(const std::string& name) {
  if (auto existing = id(name)) return *existing;
  if (tags_.size() >= kMaxTags) throw DictionaryOverflow("more than 16384 distinct tags");
  auto id = static_cast<std::uint32_t>(tags_.size());
  tags_.push_back(name);
  ids_.emplace(name, id);
  return id;
}

std::optional<std::uint32_t> TagDictionary::id(const std::string& name) const {
  auto it = ids_.find(name);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

TagDictionary build_dictionary(const doc::Tree& doc) {
  TagDictionary dict;
  collect_tags(doc, dict);
  return dict;
}

std::map<doc::NodeId, SubtreeDescriptor> build_descriptors(const doc::Tree& doc, const TagDictionary& dict) {
  std::map<doc::NodeId, SubtreeDescriptor> out;
  doc::NodeId root;
  collect(lay_out(doc, dict), root, out);
  return out;
}

void put_varint(std::vector<std::uint8_t>& out, std::uint64_t value) {
  while (value >= 0x80) {
    out.push_back(static_cast<std::uint8_t>(value | 0x80));
    value >>= 7;
  }
  out.push_back(static_cast<std::uint8_t>(value));
}

std::size_t varint_length(std::uint64_t value) noexcept {
  std::size_t n = 1;
  while (value >= 0x80) {
    value >>= 7;
    ++n;
  }
  return n;
}

std::vector<std::uint8_t> encode_compact(const doc::Tree& doc, const TagDictionary& dict) {
  Layout layout = lay_out(doc, dict);
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_varint(out, dict.size());
  for (const std::string& tag : dict.tags()) {
    put_varint(out, tag.size());
    out.insert(out.end(), tag.begin(), tag.end());
  }
  emit(doc, layout, all_positions(dict.size()), out);
  return out;
}

std::vector<std::uint8_t> encode_compact(const doc::Tree& doc) { return encode_compact(doc, build_dictionary(doc)); }

IndexOverhead compact_index_overhead(const doc::Tree& doc, const TagDictionary& dict) {
  IndexOverhead out;
  add_overhead(lay_out(doc, dict), bitmap_width(dict.size()), out);
  return out;
}

IndexOverhead full_width_index_overhead(const doc::Tree& doc, const TagDictionary& dict) {
  const std::uint64_t nodes = doc::count_elements(doc);
  return IndexOverhead{nodes * bitmap_width(dict.size()), nodes * 4};
}

std::optional<std::uint8_t> SpanReader::next() {
  if (pos_ >= bytes_.size()) return std::nullopt;
  return bytes_[pos_++];
}

bool has_compact_magic(std::span<const std::uint8_t> bytes) noexcept {
  return bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0;
}

CompactHeader read_compact_header(std::span<const std::uint8_t> bytes) {
  if (!has_compact_magic(bytes)) throw CorruptStream("missing CXD1 magic");
  SpanReader r(bytes);
  r.seek(4);
  CompactHeader h;
  std::uint64_t n = read_varint(r);
  if (n > kMaxTags) throw CorruptStream("dictionary too large");
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t len = read_varint(r);
    if (len > bytes.size() - r.position()) throw CorruptStream("truncated dictionary");
    std::string name(reinterpret_cast<const char*>(bytes.data() + r.position()), len);
    r.seek(r.position() + len);
    if (!TagName::is_valid(name) || h.dict.id(name)) throw CorruptStream("bad dictionary entry");
    h.dict.add(name);
  }
  h.length = r.position();
  return h;
}

std::optional<DecodedToken> decode_next(CompactCursor& cursor, ByteReader& reader, const TagDictionary& dict) {
  reader.seek(cursor.offset);
  auto first = reader.next();
  if (!first) {
    if (!cursor.open.empty()) throw CorruptStream("token stream ends inside an element");
    if (!cursor.root_done) throw CorruptStream("empty token stream");
    return std::nullopt;
  }
  if (cursor.root_done) throw CorruptStream("data after the root element");

  DecodedToken tok;
  switch (*first) {
    case kOpen: {
      std::uint64_t id = read_varint(reader);
      if (id >= dict.size()) throw CorruptStream("tag id out of range");
      std::vector<std::size_t> positions =
          cursor.open.empty() ? all_positions(dict.size()) : cursor.open.back().set_bits();
      SubtreeDescriptor d;
      d.bitmap = read_subset(reader, positions, dict.size());
      if (!d.bitmap.test(id)) throw CorruptStream("descriptor does not contain its own tag");
      d.size = read_varint(reader);
      tok.event = doc::Event::open(dict.name(static_cast<std::uint32_t>(id)));
      cursor.open.push_back(d.bitmap);
      tok.descriptor = std::move(d);
      break;
    }
    case kText: {
      if (cursor.open.empty()) throw CorruptStream("text outside any element");
      std::uint64_t len = read_varint(reader);
      std::string text;
      for (std::uint64_t i = 0; i < len; ++i) text.push_back(static_cast<char>(require(reader)));
      tok.event = doc::Event::value(std::move(text));
      break;
    }
    case kClose:
      if (cursor.open.empty()) throw CorruptStream("close without open");
      cursor.open.pop_back();
      if (cursor.open.empty()) cursor.root_done = true;
      tok.event = doc::Event::close();
      break;
    default:
      throw CorruptStream("bad token byte " + std::to_string(*first));
  }
  cursor.offset = reader.position();
  return tok;
}

std::optional<DecodedToken> decode_next(CompactCursor& cursor, std::span<const std::uint8_t> tokens,
                                        const TagDictionary& dict) {
  SpanReader reader(tokens);
  return decode_next(cursor, reader, dict);
}

void skip_subtree(CompactCursor& cursor, const SubtreeDescriptor& descriptor) {
  if (cursor.open.empty()) throw std::logic_error("skip_subtree with no open element");
  cursor.offset += descriptor.size;
  cursor.open.pop_back();
  if (cursor.open.empty()) cursor.root_done = true;
}

doc::EventList decode_events(std::span<const std::uint8_t> compact) {
  CompactHeader header = read_compact_header(compact);
  auto tokens = compact.subspan(header.length);
  CompactCursor cursor;
  doc::EventList out;
  while (auto tok = decode_next(cursor, tokens, header.dict)) out.push_back(std::move(tok->event));
  return out;
}

bool can_skip(engine::Evaluator& evaluator, const SubtreeDescriptor& descriptor) {
  return evaluator.can_skip_subtree(descriptor.bitmap);
}

}  // namespace cardstream::compact

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cardstream/document.hpp"
#include "cardstream/tag_bitmap.hpp"

namespace cardstream::engine {
class Evaluator;
}

/// The "CXD1" compact document: a tag dictionary followed by a token stream
/// in which every element carries a skip-index descriptor (the set of tags in
/// its subtree and the byte size of the rest of the subtree).
///
///   header  := "CXD1" varint(n) { varint(len) name }*n
///   OPEN    := 0x01 varint(tagId) bitmap varint(size)
///   TEXT    := 0x02 varint(len) bytes
///   CLOSE   := 0x03
///
/// The root bitmap spans the whole dictionary; every other bitmap spans only
/// the bits set in its parent's bitmap. Bits are stored most significant bit
/// first. `size` counts the bytes from the end of the descriptor up to and
/// including the element's CLOSE.
namespace cardstream::compact {

inline constexpr std::uint8_t kOpen = 0x01;
inline constexpr std::uint8_t kText = 0x02;
inline constexpr std::uint8_t kClose = 0x03;
inline constexpr std::size_t kMaxTags = std::size_t{1} << 14;

class TagDictionary {
public:
  TagDictionary() = default;

  /// Returns the id of `name`, adding it if new. Throws DictionaryOverflow.
  std::uint32_t add(const std::string& name);
  std::optional<std::uint32_t> id(const std::string& name) const;
  const std::string& name(std::uint32_t id) const { return tags_.at(id); }
  std::size_t size() const noexcept { return tags_.size(); }
  const std::vector<std::string>& tags() const noexcept { return tags_; }

private:
  std::vector<std::string> tags_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

/// Dictionary in first-occurrence document order.
TagDictionary build_dictionary(const doc::Tree& doc);

struct SubtreeDescriptor {
  TagBitmap bitmap;
  std::uint64_t size = 0;

  friend bool operator==(const SubtreeDescriptor&, const SubtreeDescriptor&) = default;
};

/// Throws DictionaryOverflow when a tag is missing from `dict`.
std::map<doc::NodeId, SubtreeDescriptor> build_descriptors(const doc::Tree& doc, const TagDictionary& dict);

std::vector<std::uint8_t> encode_compact(const doc::Tree& doc, const TagDictionary& dict);
std::vector<std::uint8_t> encode_compact(const doc::Tree& doc);

/// Bytes spent on descriptors (bitmaps and sizes).
struct IndexOverhead {
  std::uint64_t bitmap_bytes = 0;
  std::uint64_t size_bytes = 0;
  std::uint64_t total() const noexcept { return bitmap_bytes + size_bytes; }
};

IndexOverhead compact_index_overhead(const doc::Tree& doc, const TagDictionary& dict);
/// Baseline without recursive compression: full-dictionary bitmaps and
/// fixed 4-byte sizes on every element.
IndexOverhead full_width_index_overhead(const doc::Tree& doc, const TagDictionary& dict);

void put_varint(std::vector<std::uint8_t>& out, std::uint64_t value);
std::size_t varint_length(std::uint64_t value) noexcept;

/// Sequential byte input positioned on the token stream.
class ByteReader {
public:
  virtual ~ByteReader() = default;
  /// Next byte, or nullopt at the end of the stream.
  virtual std::optional<std::uint8_t> next() = 0;
  virtual std::uint64_t position() const = 0;
  /// Moves to an absolute offset at or after the current position.
  virtual void seek(std::uint64_t offset) = 0;
};

class SpanReader final : public ByteReader {
public:
  explicit SpanReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::optional<std::uint8_t> next() override;
  std::uint64_t position() const override { return pos_; }
  void seek(std::uint64_t offset) override { pos_ = offset; }

private:
  std::span<const std::uint8_t> bytes_;
  std::uint64_t pos_ = 0;
};

struct CompactHeader {
  TagDictionary dict;
  /// Bytes occupied by the header; the token stream starts here.
  std::size_t length = 0;
};

/// Throws CorruptStream.
CompactHeader read_compact_header(std::span<const std::uint8_t> bytes);
bool has_compact_magic(std::span<const std::uint8_t> bytes) noexcept;

/// Position in the token stream plus the full-width bitmaps of the open
/// elements, needed to expand the next child's subset bitmap.
struct CompactCursor {
  std::uint64_t offset = 0;
  std::vector<TagBitmap> open;
  bool root_done = false;
};

struct DecodedToken {
  doc::Event event;
  /// Present on Open, expanded to full dictionary width.
  std::optional<SubtreeDescriptor> descriptor;
};

/// Next token, or nullopt once the root has closed and the stream ended.
/// Throws CorruptStream.
std::optional<DecodedToken> decode_next(CompactCursor& cursor, ByteReader& reader, const TagDictionary& dict);
std::optional<DecodedToken> decode_next(CompactCursor& cursor, std::span<const std::uint8_t> tokens,
                                        const TagDictionary& dict);

/// Jumps over the element just opened; the cursor must sit right after its
/// descriptor.
void skip_subtree(CompactCursor& cursor, const SubtreeDescriptor& descriptor);

/// Decodes a whole compact document (header included).
doc::EventList decode_events(std::span<const std::uint8_t> compact);

/// True when the evaluator can jump over the element it just opened.
bool can_skip(engine::Evaluator& evaluator, const SubtreeDescriptor& descriptor);

}  // namespace cardstream::compact

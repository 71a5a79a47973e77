#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

/// "SXD1" chunked envelope. Stored layout, integers big-endian:
///
///   "SXD1" docId[16] nonce[8] chunkSize:u32 chunkCount:u32
///   plaintextLength:u64 dictLength:u32 dict[dictLength] headerMac[16]
///   { ciphertext[len(i)] mac[16] } for i in 0..chunkCount-1
///
/// `dict` holds the encrypted compact-document header (tag dictionary);
/// chunks cover the token stream, `plaintextLength` bytes in total, every
/// chunk full except possibly the last. Chunk lengths are derived, never
/// stored. AES-128-CTR with IV nonce || index:u32 || 0:u32 (index 0xffffffff
/// for the dictionary); MACs are HMAC-SHA-256 truncated to 16 bytes, over
/// docId || index:u32 || ciphertext for chunks and over every preceding
/// header byte for the header.
namespace cardstream::envelope {

using Bytes = std::vector<std::uint8_t>;
using DocId = std::array<std::uint8_t, 16>;
using Nonce = std::array<std::uint8_t, 8>;
using Mac = std::array<std::uint8_t, 16>;
using Digest = std::array<std::uint8_t, 32>;

inline constexpr std::uint32_t kMinChunkSize = 256;
inline constexpr std::uint32_t kMaxChunkSize = 1u << 20;
inline constexpr std::uint32_t kDefaultChunkSize = 4096;
inline constexpr std::size_t kMacSize = 16;
/// Bytes before the dictionary blob.
inline constexpr std::size_t kFixedHeaderSize = 48;

struct DocumentKey {
  std::array<std::uint8_t, 16> enc{};
  std::array<std::uint8_t, 32> mac{};

  static DocumentKey generate();
  friend bool operator==(const DocumentKey&, const DocumentKey&) = default;
};

DocId random_doc_id();

struct EnvelopeHeader {
  DocId doc_id{};
  Nonce nonce{};
  std::uint32_t chunk_size = kDefaultChunkSize;
  std::uint32_t chunk_count = 0;
  std::uint64_t plaintext_length = 0;
  Bytes dict_blob;
  Mac header_mac{};

  std::uint64_t chunk_plain_length(std::uint32_t index) const;
  /// Offset of chunk `index` from the start of the first chunk record.
  std::uint64_t chunk_record_offset(std::uint32_t index) const;
  std::size_t encoded_size() const noexcept { return kFixedHeaderSize + dict_blob.size() + kMacSize; }
  /// Header plus every chunk record.
  std::uint64_t stored_size() const;
};

struct ChunkRecord {
  Bytes ciphertext;
  Mac mac{};
};

struct EncryptedDocument {
  EnvelopeHeader header;
  std::vector<ChunkRecord> chunks;
};

/// The compact header (when `compact` starts with "CXD1") goes to the
/// dictionary blob; the rest is chunked. Throws BadChunkSize.
EncryptedDocument encrypt_document(std::span<const std::uint8_t> compact, const DocumentKey& key, const DocId& doc_id,
                                   std::uint32_t chunk_size = kDefaultChunkSize);

Bytes serialize_header(const EnvelopeHeader& header);
Bytes serialize(const EncryptedDocument& doc);

/// Total header size given at least its first kFixedHeaderSize bytes.
/// Throws IntegrityError.
std::size_t header_size_from_prefix(std::span<const std::uint8_t> prefix);
/// Structural parse of exactly one header, MAC not checked. Throws
/// IntegrityError.
EnvelopeHeader parse_header(std::span<const std::uint8_t> bytes);
/// Throws IntegrityError when the header MAC does not verify.
void verify_header(const EnvelopeHeader& header, const DocumentKey& key);
/// Splits a stored document; throws IntegrityError on any length mismatch.
EncryptedDocument parse_encrypted(std::span<const std::uint8_t> bytes);

/// Verifies then decrypts one chunk record. Throws IntegrityError.
Bytes open_chunk(const EnvelopeHeader& header, const DocumentKey& key, std::uint32_t index, const ChunkRecord& record);
/// Throws RangeError or IntegrityError.
Bytes decrypt_chunk(const EncryptedDocument& doc, const DocumentKey& key, std::uint32_t index);
/// Plaintext of the dictionary blob; the header MAC must already be verified.
Bytes decrypt_dictionary(const EnvelopeHeader& header, const DocumentKey& key);
/// Verifies everything, then returns dictionary plaintext followed by every
/// chunk's plaintext. Throws IntegrityError.
Bytes decrypt_document(const EncryptedDocument& doc, const DocumentKey& key);
void verify_document(const EncryptedDocument& doc, const DocumentKey& key);

Digest sha256(std::span<const std::uint8_t> bytes);
Digest sha256(std::string_view text);

std::string to_hex(std::span<const std::uint8_t> bytes);
/// Throws std::invalid_argument on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);
/// Throws std::invalid_argument unless `hex` encodes exactly 16 bytes.
DocId parse_doc_id(std::string_view hex);

}  // namespace cardstream::envelope

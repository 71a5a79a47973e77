#include "cardstream/envelope.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cstring>
#include <memory>
#include <stdexcept>

#include "cardstream/compact.hpp"
#include "cardstream/error.hpp"

namespace cardstream::envelope {

namespace {

constexpr char kMagic[4] = {'S', 'X', 'D', '1'};
constexpr std::uint32_t kDictionaryIndex = 0xffffffffu;

void put_be(Bytes& out, std::uint64_t value, int bytes) {
  for (int i = bytes - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

std::uint64_t get_be(std::span<const std::uint8_t> in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v = (v << 8) | in[at + static_cast<std::size_t>(i)];
  return v;
}

void random_fill(std::span<std::uint8_t> out) {
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) throw Error("random generator failure");
}

Bytes aes_ctr(const DocumentKey& key, const Nonce& nonce, std::uint32_t index, std::span<const std::uint8_t> in) {
  Bytes out(in.size());
  if (in.empty()) return out;
  std::array<std::uint8_t, 16> iv{};
  std::copy(nonce.begin(), nonce.end(), iv.begin());
  for (int i = 0; i < 4; ++i) iv[8 + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(index >> (24 - 8 * i));
  std::unique_ptr<EVP_CIPHER_CTX, decltype(&EVP_CIPHER_CTX_free)> ctx(EVP_CIPHER_CTX_new(), EVP_CIPHER_CTX_free);
  int len = 0;
  if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_ctr(), nullptr, key.enc.data(), iv.data()) != 1 ||
      EVP_EncryptUpdate(ctx.get(), out.data(), &len, in.data(), static_cast<int>(in.size())) != 1) {
    throw Error("AES-CTR failure");
  }
  return out;
}

Mac hmac16(const DocumentKey& key, std::span<const std::uint8_t> data) {
  std::array<std::uint8_t, EVP_MAX_MD_SIZE> full{};
  unsigned int len = 0;
  if (!HMAC(EVP_sha256(), key.mac.data(), static_cast<int>(key.mac.size()), data.data(), data.size(), full.data(),
            &len)) {
    throw Error("HMAC failure");
  }
  Mac out{};
  std::copy_n(full.begin(), out.size(), out.begin());
  return out;
}

Mac chunk_mac(const DocumentKey& key, const DocId& doc_id, std::uint32_t index, std::span<const std::uint8_t> ct) {
  Bytes msg(doc_id.begin(), doc_id.end());
  put_be(msg, index, 4);
  msg.insert(msg.end(), ct.begin(), ct.end());
  return hmac16(key, msg);
}

bool same_mac(const Mac& a, const Mac& b) { return CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0; }

Bytes header_fields(const EnvelopeHeader& h) {
  Bytes out(std::begin(kMagic), std::end(kMagic));
  out.insert(out.end(), h.doc_id.begin(), h.doc_id.end());
  out.insert(out.end(), h.nonce.begin(), h.nonce.end());
  put_be(out, h.chunk_size, 4);
  put_be(out, h.chunk_count, 4);
  put_be(out, h.plaintext_length, 8);
  put_be(out, h.dict_blob.size(), 4);
  out.insert(out.end(), h.dict_blob.begin(), h.dict_blob.end());
  return out;
}

void check_chunk_size(std::uint32_t chunk_size) {
  if (chunk_size < kMinChunkSize || chunk_size > kMaxChunkSize) {
    throw BadChunkSize("chunk size must be within 256..1048576, got " + std::to_string(chunk_size));
  }
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

DocumentKey DocumentKey::generate() {
  DocumentKey k;
  random_fill(k.enc);
  random_fill(k.mac);
  return k;
}

DocId random_doc_id() {
  DocId id{};
  random_fill(id);
  return id;
}

std::uint64_t EnvelopeHeader::chunk_plain_length(std::uint32_t index) const {
  if (index >= chunk_count) throw RangeError("chunk index " + std::to_string(index) + " out of range");
  std::uint64_t start = std::uint64_t{index} * chunk_size;
  return std::min<std::uint64_t>(chunk_size, plaintext_length - start);
}

std::uint64_t EnvelopeHeader::chunk_record_offset(std::uint32_t index) const {
  return std::uint64_t{index} * (chunk_size + kMacSize);
}

std::uint64_t EnvelopeHeader::stored_size() const {
  return encoded_size() + plaintext_length + std::uint64_t{chunk_count} * kMacSize;
}

EncryptedDocument encrypt_document(std::span<const std::uint8_t> compact, const DocumentKey& key, const DocId& doc_id,
                                   std::uint32_t chunk_size) {
  check_chunk_size(chunk_size);
  std::size_t dict_len = 0;
  if (compact::has_compact_magic(compact)) dict_len = compact::read_compact_header(compact).length;
  auto body = compact.subspan(dict_len);
  std::uint64_t count = (body.size() + chunk_size - 1) / chunk_size;
  if (count > kDictionaryIndex) throw BadChunkSize("too many chunks for this chunk size");

  EncryptedDocument doc;
  EnvelopeHeader& h = doc.header;
  h.doc_id = doc_id;
  random_fill(h.nonce);
  h.chunk_size = chunk_size;
  h.chunk_count = static_cast<std::uint32_t>(count);
  h.plaintext_length = body.size();
  h.dict_blob = aes_ctr(key, h.nonce, kDictionaryIndex, compact.first(dict_len));
  h.header_mac = hmac16(key, header_fields(h));

  doc.chunks.reserve(h.chunk_count);
  for (std::uint32_t i = 0; i < h.chunk_count; ++i) {
    auto slice = body.subspan(std::size_t{i} * chunk_size, h.chunk_plain_length(i));
    ChunkRecord rec;
    rec.ciphertext = aes_ctr(key, h.nonce, i, slice);
    rec.mac = chunk_mac(key, h.doc_id, i, rec.ciphertext);
    doc.chunks.push_back(std::move(rec));
  }
  return doc;
}

Bytes serialize_header(const EnvelopeHeader& header) {
  Bytes out = header_fields(header);
  out.insert(out.end(), header.header_mac.begin(), header.header_mac.end());
  return out;
}

Bytes serialize(const EncryptedDocument& doc) {
  Bytes out = serialize_header(doc.header);
  for (const ChunkRecord& c : doc.chunks) {
    out.insert(out.end(), c.ciphertext.begin(), c.ciphertext.end());
    out.insert(out.end(), c.mac.begin(), c.mac.end());
  }
  return out;
}

std::size_t header_size_from_prefix(std::span<const std::uint8_t> prefix) {
  if (prefix.size() < kFixedHeaderSize || std::memcmp(prefix.data(), kMagic, 4) != 0) {
    throw IntegrityError("not an SXD1 document");
  }
  return kFixedHeaderSize + get_be(prefix, 44, 4) + kMacSize;
}

EnvelopeHeader parse_header(std::span<const std::uint8_t> bytes) {
  if (header_size_from_prefix(bytes) != bytes.size()) throw IntegrityError("header length mismatch");
  EnvelopeHeader h;
  std::copy_n(bytes.begin() + 4, 16, h.doc_id.begin());
  std::copy_n(bytes.begin() + 20, 8, h.nonce.begin());
  h.chunk_size = static_cast<std::uint32_t>(get_be(bytes, 28, 4));
  h.chunk_count = static_cast<std::uint32_t>(get_be(bytes, 32, 4));
  h.plaintext_length = get_be(bytes, 36, 8);
  std::size_t dict_len = get_be(bytes, 44, 4);
  h.dict_blob.assign(bytes.begin() + kFixedHeaderSize, bytes.begin() + static_cast<std::ptrdiff_t>(kFixedHeaderSize + dict_len));
  std::copy_n(bytes.end() - kMacSize, kMacSize, h.header_mac.begin());

  if (h.chunk_size < kMinChunkSize || h.chunk_size > kMaxChunkSize) throw IntegrityError("bad chunk size in header");
  std::uint64_t capacity = std::uint64_t{h.chunk_count} * h.chunk_size;
  if (h.chunk_count == kDictionaryIndex || capacity < h.plaintext_length ||
      (h.chunk_count > 0 && capacity - h.chunk_size >= h.plaintext_length)) {
    throw IntegrityError("chunk count does not match plaintext length");
  }
  return h;
}

void verify_header(const EnvelopeHeader& header, const DocumentKey& key) {
  if (!same_mac(hmac16(key, header_fields(header)), header.header_mac)) throw IntegrityError("header MAC mismatch");
}

EncryptedDocument parse_encrypted(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFixedHeaderSize) throw IntegrityError("truncated header");
  std::size_t hlen = header_size_from_prefix(bytes);
  if (hlen > bytes.size()) throw IntegrityError("truncated header");
  EncryptedDocument doc;
  doc.header = parse_header(bytes.first(hlen));
  if (doc.header.stored_size() != bytes.size()) throw IntegrityError("stored length does not match the header");
  std::size_t at = hlen;
  for (std::uint32_t i = 0; i < doc.header.chunk_count; ++i) {
    std::size_t len = doc.header.chunk_plain_length(i);
    ChunkRecord rec;
    rec.ciphertext.assign(bytes.begin() + static_cast<std::ptrdiff_t>(at),
                          bytes.begin() + static_cast<std::ptrdiff_t>(at + len));
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(at + len), kMacSize, rec.mac.begin());
    at += len + kMacSize;
    doc.chunks.push_back(std::move(rec));
  }
  return doc;
}

Bytes open_chunk(const EnvelopeHeader& header, const DocumentKey& key, std::uint32_t index, const ChunkRecord& record) {
  if (record.ciphertext.size() != header.chunk_plain_length(index)) throw IntegrityError("chunk length mismatch");
  if (!same_mac(chunk_mac(key, header.doc_id, index, record.ciphertext), record.mac)) {
    throw IntegrityError("MAC mismatch on chunk " + std::to_string(index));
  }
  return aes_ctr(key, header.nonce, index, record.ciphertext);
}

Bytes decrypt_chunk(const EncryptedDocument& doc, const DocumentKey& key, std::uint32_t index) {
  if (index >= doc.header.chunk_count || index >= doc.chunks.size()) {
    throw RangeError("chunk index " + std::to_string(index) + " out of range");
  }
  return open_chunk(doc.header, key, index, doc.chunks[index]);
}

Bytes decrypt_dictionary(const EnvelopeHeader& header, const DocumentKey& key) {
  return aes_ctr(key, header.nonce, kDictionaryIndex, header.dict_blob);
}

Bytes decrypt_document(const EncryptedDocument& doc, const DocumentKey& key) {
  verify_header(doc.header, key);
  if (doc.chunks.size() != doc.header.chunk_count) throw IntegrityError("chunk count mismatch");
  Bytes out = decrypt_dictionary(doc.header, key);
  for (std::uint32_t i = 0; i < doc.header.chunk_count; ++i) {
    Bytes plain = open_chunk(doc.header, key, i, doc.chunks[i]);
    out.insert(out.end(), plain.begin(), plain.end());
  }
  return out;
}

void verify_document(const EncryptedDocument& doc, const DocumentKey& key) { (void)decrypt_document(doc, key); }

Digest sha256(std::span<const std::uint8_t> bytes) {
  Digest d{};
  SHA256(bytes.data(), bytes.size(), d.data());
  return d;
}

Digest sha256(std::string_view text) {
  return sha256(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2) throw std::invalid_argument("odd-length hex string");
  Bytes out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = hex_value(hex[i]);
    int lo = hex_value(hex[i + 1]);
    if (hi < 0 || lo < 0) throw std::invalid_argument("invalid hex digit");
    out.push_back(static_cast<std::uint8_t>(hi * 16 + lo));
  }
  return out;
}

DocId parse_doc_id(std::string_view hex) {
  Bytes b = from_hex(hex);
  if (b.size() != 16) throw std::invalid_argument("document id must be 32 hex digits");
  DocId id{};
  std::copy(b.begin(), b.end(), id.begin());
  return id;
}

}  // namespace cardstream::envelope

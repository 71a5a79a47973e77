#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "cardstream/envelope.hpp"

/// Wire format between clients and the document store. Every message is a
/// frame: length:u32 (big-endian) followed by that many payload bytes.
///
///   request  := opcode:u8 fields
///   response := status:u8 body
///
///   PUT_DOC     0x10  envelope              -> docId[16]
///   GET_HEADER  0x11  docId                 -> header bytes
///   GET_CHUNKS  0x12  docId first:u32 n:u32 -> n stored chunk records
///   LIST        0x13                        -> n:u32 docId*n
///   PUT_RULES   0x14  docId digest[32] blob -> (empty)
///   GET_RULES   0x15  docId digest[32]      -> blob
///
/// `digest` is the SHA-256 of the subject name, so the store never sees it.
namespace cardstream::dsp {

enum class Opcode : std::uint8_t {
  PutDoc = 0x10,
  GetHeader = 0x11,
  GetChunks = 0x12,
  List = 0x13,
  PutRules = 0x14,
  GetRules = 0x15,
};

enum class Status : std::uint8_t { Ok = 0x00, NotFound = 0x01, BadRequest = 0x02, Range = 0x03 };

inline constexpr std::uint32_t kMaxFrame = 16u * 1024 * 1024;

std::string to_string(Opcode op);
std::string to_string(Status status);

struct Request {
  Opcode op = Opcode::List;
  envelope::DocId doc_id{};
  std::uint32_t first = 0;
  std::uint32_t count = 0;
  envelope::Digest subject{};
  envelope::Bytes blob;
};

struct Response {
  Status status = Status::Ok;
  envelope::Bytes body;
};

envelope::Bytes encode_request(const Request& request);
/// nullopt for unknown opcodes or malformed fields.
std::optional<Request> decode_request(std::span<const std::uint8_t> payload);

envelope::Bytes encode_response(const Response& response);
/// Throws TransportError on an empty payload or unknown status.
Response decode_response(std::span<const std::uint8_t> payload);

/// Writes one frame. Throws TransportError.
void write_frame(int fd, std::span<const std::uint8_t> payload);
/// Reads one frame; nullopt on a clean end of stream before the length
/// prefix. Throws TransportError on short reads or oversized frames.
std::optional<envelope::Bytes> read_frame(int fd);

}  // namespace cardstream::dsp

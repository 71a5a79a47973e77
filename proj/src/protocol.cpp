#include "cardstream/protocol.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "cardstream/error.hpp"

namespace cardstream::dsp {

namespace {

void put_u32(envelope::Bytes& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  return (std::uint32_t{in[at]} << 24) | (std::uint32_t{in[at + 1]} << 16) | (std::uint32_t{in[at + 2]} << 8) |
         std::uint32_t{in[at + 3]};
}

// Returns false on a clean end of stream before any byte was read.
bool read_exact(int fd, std::uint8_t* out, std::size_t n, bool eof_ok) {
  std::size_t got = 0;
  while (got < n) {
    ssize_t r = ::recv(fd, out + got, n - got, 0);
    if (r == 0) {
      if (got == 0 && eof_ok) return false;
      throw TransportError("connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("receive failed: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

}  // namespace

std::string to_string(Opcode op) {
  switch (op) {
    case Opcode::PutDoc: return "PUT_DOC";
    case Opcode::GetHeader: return "GET_HEADER";
    case Opcode::GetChunks: return "GET_CHUNKS";
    case Opcode::List: return "LIST";
    case Opcode::PutRules: return "PUT_RULES";
    case Opcode::GetRules: return "GET_RULES";
  }
  return "UNKNOWN";
}

std::string to_string(Status status) {
  switch (status) {
    case Status::Ok: return "OK";
    case Status::NotFound: return "NOT_FOUND";
    case Status::BadRequest: return "BAD_REQUEST";
    case Status::Range: return "RANGE";
  }
  return "UNKNOWN";
}

envelope::Bytes encode_request(const Request& r) {
  envelope::Bytes out{static_cast<std::uint8_t>(r.op)};
  auto put_id = [&] { out.insert(out.end(), r.doc_id.begin(), r.doc_id.end()); };
  auto put_subject = [&] { out.insert(out.end(), r.subject.begin(), r.subject.end()); };
  switch (r.op) {
    case Opcode::PutDoc:
      out.insert(out.end(), r.blob.begin(), r.blob.end());
      break;
    case Opcode::GetHeader:
      put_id();
      break;
    case Opcode::GetChunks:
      put_id();
      put_u32(out, r.first);
      put_u32(out, r.count);
      break;
    case Opcode::List:
      break;
    case Opcode::PutRules:
      put_id();
      put_subject();
      out.insert(out.end(), r.blob.begin(), r.blob.end());
      break;
    case Opcode::GetRules:
      put_id();
      put_subject();
      break;
  }
  return out;
}

std::optional<Request> decode_request(std::span<const std::uint8_t> p) {
  if (p.empty()) return std::nullopt;
  Request r;
  r.op = static_cast<Opcode>(p[0]);
  auto body = p.subspan(1);
  auto take_id = [&] { std::copy_n(body.begin(), 16, r.doc_id.begin()); };
  auto take_subject = [&] { std::copy_n(body.begin() + 16, 32, r.subject.begin()); };
  switch (r.op) {
    case Opcode::PutDoc:
      r.blob.assign(body.begin(), body.end());
      return r;
    case Opcode::GetHeader:
      if (body.size() != 16) return std::nullopt;
      take_id();
      return r;
    case Opcode::GetChunks:
      if (body.size() != 24) return std::nullopt;
      take_id();
      r.first = get_u32(body, 16);
      r.count = get_u32(body, 20);
      return r;
    case Opcode::List:
      if (!body.empty()) return std::nullopt;
      return r;
    case Opcode::PutRules:
      if (body.size() < 48) return std::nullopt;
      take_id();
      take_subject();
      r.blob.assign(body.begin() + 48, body.end());
      return r;
    case Opcode::GetRules:
      if (body.size() != 48) return std::nullopt;
      take_id();
      take_subject();
      return r;
  }
  return std::nullopt;
}

envelope::Bytes encode_response(const Response& r) {
  envelope::Bytes out{static_cast<std::uint8_t>(r.status)};
  out.insert(out.end(), r.body.begin(), r.body.end());
  return out;
}

Response decode_response(std::span<const std::uint8_t> p) {
  if (p.empty() || p[0] > static_cast<std::uint8_t>(Status::Range)) throw TransportError("malformed response");
  return Response{static_cast<Status>(p[0]), envelope::Bytes(p.begin() + 1, p.end())};
}

void write_frame(int fd, std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxFrame) throw TransportError("frame exceeds 16 MiB");
  envelope::Bytes buf;
  buf.reserve(payload.size() + 4);
  put_u32(buf, static_cast<std::uint32_t>(payload.size()));
  buf.insert(buf.end(), payload.begin(), payload.end());
  std::size_t sent = 0;
  while (sent < buf.size()) {
    ssize_t r = ::send(fd, buf.data() + sent, buf.size() - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("send failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(r);
  }
}

std::optional<envelope::Bytes> read_frame(int fd) {
  std::uint8_t len_bytes[4];
  if (!read_exact(fd, len_bytes, 4, true)) return std::nullopt;
  std::uint32_t len = get_u32(len_bytes, 0);
  if (len > kMaxFrame) throw TransportError("frame exceeds 16 MiB");
  envelope::Bytes out(len);
  if (len > 0) read_exact(fd, out.data(), len, false);
  return out;
}

}  // namespace cardstream::dsp

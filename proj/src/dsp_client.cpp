#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "cardstream/dsp.hpp"
#include "cardstream/error.hpp"

namespace cardstream::dsp {

using envelope::Bytes;

DspClient::DspClient(Endpoint endpoint) : endpoint_(std::move(endpoint)) {}

DspClient::~DspClient() { disconnect(); }

void DspClient::connect() {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  std::string host = endpoint_.host.empty() ? "127.0.0.1" : endpoint_.host;
  if (int rc = ::getaddrinfo(host.c_str(), std::to_string(endpoint_.port).c_str(), &hints, &res); rc != 0) {
    throw TransportError("cannot resolve " + endpoint_.str() + ": " + ::gai_strerror(rc));
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, ::freeaddrinfo);
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
  timeval timeout{30, 0};
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &timeout, sizeof timeout);
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &timeout, sizeof timeout);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  if (::connect(fd, res->ai_addr, res->ai_addrlen) < 0) {
    int err = errno;
    ::close(fd);
    throw TransportError("cannot connect to " + endpoint_.str() + ": " + std::strerror(err));
  }
  fd_ = fd;
}

void DspClient::disconnect() noexcept {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

Response DspClient::call(const Request& request) {
  if (fd_ < 0) connect();
  try {
    Bytes payload = encode_request(request);
    if (tap_) tap_(payload, true);
    write_frame(fd_, payload);
    auto reply = read_frame(fd_);
    if (!reply) throw TransportError("server closed the connection");
    if (tap_) tap_(*reply, false);
    return decode_response(*reply);
  } catch (const TransportError&) {
    disconnect();
    throw;
  }
}

namespace {

Response expect_ok(Response r, Opcode op) {
  if (r.status != Status::Ok) throw TransportError(to_string(op) + " failed with " + to_string(r.status));
  return r;
}

}  // namespace

envelope::DocId DspClient::put_document(std::span<const std::uint8_t> stored) {
  Request r;
  r.op = Opcode::PutDoc;
  r.blob.assign(stored.begin(), stored.end());
  Response resp = expect_ok(call(r), r.op);
  if (resp.body.size() != 16) throw TransportError("malformed PUT_DOC response");
  envelope::DocId id{};
  std::copy(resp.body.begin(), resp.body.end(), id.begin());
  return id;
}

Bytes DspClient::get_header(const envelope::DocId& id) {
  Request r;
  r.op = Opcode::GetHeader;
  r.doc_id = id;
  return expect_ok(call(r), r.op).body;
}

Bytes DspClient::get_chunk_bytes(const envelope::DocId& id, std::uint32_t first, std::uint32_t count) {
  Request r;
  r.op = Opcode::GetChunks;
  r.doc_id = id;
  r.first = first;
  r.count = count;
  return expect_ok(call(r), r.op).body;
}

std::vector<envelope::DocId> DspClient::list() {
  Request r;
  r.op = Opcode::List;
  Bytes body = expect_ok(call(r), r.op).body;
  if (body.size() < 4) throw TransportError("malformed LIST response");
  std::size_t n = (std::size_t{body[0]} << 24) | (std::size_t{body[1]} << 16) | (std::size_t{body[2]} << 8) | body[3];
  if (body.size() != 4 + 16 * n) throw TransportError("malformed LIST response");
  std::vector<envelope::DocId> out(n);
  for (std::size_t i = 0; i < n; ++i) std::copy_n(body.begin() + static_cast<std::ptrdiff_t>(4 + 16 * i), 16, out[i].begin());
  return out;
}

void DspClient::put_rules(const envelope::DocId& id, const envelope::Digest& subject,
                          std::span<const std::uint8_t> blob) {
  Request r;
  r.op = Opcode::PutRules;
  r.doc_id = id;
  r.subject = subject;
  r.blob.assign(blob.begin(), blob.end());
  expect_ok(call(r), r.op);
}

std::optional<Bytes> DspClient::get_rules(const envelope::DocId& id, const envelope::Digest& subject) {
  Request r;
  r.op = Opcode::GetRules;
  r.doc_id = id;
  r.subject = subject;
  Response resp = call(r);
  if (resp.status == Status::NotFound) return std::nullopt;
  return expect_ok(std::move(resp), r.op).body;
}

const envelope::EnvelopeHeader& RemoteChunkSource::header() {
  if (!header_) (void)get_header();
  return *header_;
}

Bytes RemoteChunkSource::get_header() {
  Bytes bytes = client_.get_header(doc_id_);
  if (bytes.size() < envelope::kFixedHeaderSize) throw IntegrityError("truncated header");
  header_ = envelope::parse_header(bytes);
  return bytes;
}

std::vector<envelope::ChunkRecord> RemoteChunkSource::get_chunks(std::uint32_t first, std::uint32_t count) {
  const envelope::EnvelopeHeader& h = header();
  if (count == 0 || first >= h.chunk_count || count > h.chunk_count - first) {
    throw RangeError("chunk range out of range");
  }
  return soe::split_records(h, first, count, client_.get_chunk_bytes(doc_id_, first, count));
}

}  // namespace cardstream::dsp

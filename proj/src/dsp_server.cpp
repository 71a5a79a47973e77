#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>

#include "cardstream/dsp.hpp"
#include "cardstream/error.hpp"

namespace cardstream::dsp {

namespace fs = std::filesystem;
using envelope::Bytes;

namespace {

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

void write_atomically(const fs::path& path, std::span<const std::uint8_t> bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

Endpoint parse_endpoint(const std::string& text) {
  auto colon = text.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("endpoint must be host:port");
  Endpoint e;
  if (colon > 0) e.host = text.substr(0, colon);
  std::string port = text.substr(colon + 1);
  if (port.empty() || port.size() > 5 || port.find_first_not_of("0123456789") != std::string::npos ||
      std::stoul(port) > 65535) {
    throw std::invalid_argument("bad port in endpoint '" + text + "'");
  }
  e.port = static_cast<std::uint16_t>(std::stoul(port));
  return e;
}

Store::Store(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_ / "rules"); }

std::shared_ptr<std::shared_mutex> Store::lock_for(const envelope::DocId& id) {
  std::lock_guard g(locks_mutex_);
  auto& slot = locks_[id];
  if (!slot) slot = std::make_shared<std::shared_mutex>();
  return slot;
}

fs::path Store::doc_path(const envelope::DocId& id) const { return dir_ / (envelope::to_hex(id) + ".sxd"); }

fs::path Store::rules_path(const envelope::DocId& id, const envelope::Digest& subject) const {
  return dir_ / "rules" / (envelope::to_hex(id) + "-" + envelope::to_hex(subject) + ".bin");
}

envelope::DocId Store::put_document(std::span<const std::uint8_t> stored) {
  envelope::DocId id = envelope::parse_encrypted(stored).header.doc_id;
  auto lock = lock_for(id);
  std::unique_lock g(*lock);
  write_atomically(doc_path(id), stored);
  return id;
}

std::optional<Bytes> Store::header(const envelope::DocId& id) {
  auto lock = lock_for(id);
  std::shared_lock g(*lock);
  if (!fs::exists(doc_path(id))) return std::nullopt;
  return soe::FileChunkSource(doc_path(id).string()).get_header();
}

std::optional<Bytes> Store::chunk_bytes(const envelope::DocId& id, std::uint32_t first, std::uint32_t count) {
  auto lock = lock_for(id);
  std::shared_lock g(*lock);
  if (!fs::exists(doc_path(id))) return std::nullopt;
  Bytes out;
  for (const envelope::ChunkRecord& r : soe::FileChunkSource(doc_path(id).string()).get_chunks(first, count)) {
    out.insert(out.end(), r.ciphertext.begin(), r.ciphertext.end());
    out.insert(out.end(), r.mac.begin(), r.mac.end());
  }
  return out;
}

std::vector<envelope::DocId> Store::list() const {
  std::vector<envelope::DocId> out;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (entry.path().extension() != ".sxd") continue;
    try {
      out.push_back(envelope::parse_doc_id(entry.path().stem().string()));
    } catch (const std::invalid_argument&) {
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void Store::put_rules(const envelope::DocId& id, const envelope::Digest& subject, std::span<const std::uint8_t> blob) {
  auto lock = lock_for(id);
  std::unique_lock g(*lock);
  write_atomically(rules_path(id, subject), blob);
}

std::optional<Bytes> Store::rules(const envelope::DocId& id, const envelope::Digest& subject) {
  auto lock = lock_for(id);
  std::shared_lock g(*lock);
  fs::path p = rules_path(id, subject);
  if (!fs::exists(p)) return std::nullopt;
  return read_file(p);
}

Response handle_request(Store& store, const Request& r) {
  auto found = [](std::optional<Bytes> body) {
    return body ? Response{Status::Ok, std::move(*body)} : Response{Status::NotFound, {}};
  };
  try {
    switch (r.op) {
      case Opcode::PutDoc: {
        envelope::DocId id = store.put_document(r.blob);
        return {Status::Ok, Bytes(id.begin(), id.end())};
      }
      case Opcode::GetHeader:
        return found(store.header(r.doc_id));
      case Opcode::GetChunks: {
        auto body = store.chunk_bytes(r.doc_id, r.first, r.count);
        if (body && body->size() >= kMaxFrame) return {Status::BadRequest, {}};
        return found(std::move(body));
      }
      case Opcode::List: {
        Bytes body;
        auto ids = store.list();
        for (int i = 3; i >= 0; --i) body.push_back(static_cast<std::uint8_t>(ids.size() >> (8 * i)));
        for (const auto& id : ids) body.insert(body.end(), id.begin(), id.end());
        return {Status::Ok, std::move(body)};
      }
      case Opcode::PutRules:
        store.put_rules(r.doc_id, r.subject, r.blob);
        return {Status::Ok, {}};
      case Opcode::GetRules:
        return found(store.rules(r.doc_id, r.subject));
    }
  } catch (const RangeError&) {
    return {Status::Range, {}};
  } catch (const std::exception&) {
    return {Status::BadRequest, {}};
  }
  return {Status::BadRequest, {}};
}

Server::Server(Store& store, Endpoint endpoint) : store_(store), endpoint_(std::move(endpoint)) {}

Server::~Server() { stop(); }

void Server::start() {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const char* host = endpoint_.host.empty() ? nullptr : endpoint_.host.c_str();
  if (int rc = ::getaddrinfo(host, std::to_string(endpoint_.port).c_str(), &hints, &res); rc != 0) {
    throw BindError("cannot resolve " + endpoint_.str() + ": " + ::gai_strerror(rc));
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, ::freeaddrinfo);

  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) throw BindError(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd, res->ai_addr, res->ai_addrlen) < 0 || ::listen(fd, 64) < 0) {
    int err = errno;
    ::close(fd);
    throw BindError("cannot listen on " + endpoint_.str() + ": " + std::strerror(err));
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  listen_fd_ = fd;
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void Server::accept_loop() {
  while (running_) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      break;
    }
    std::lock_guard g(mutex_);
    if (!running_) {
      ::close(fd);
      break;
    }
    connections_.push_back(fd);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void Server::serve_connection(int fd) {
  try {
    while (auto frame = read_frame(fd)) {
      auto request = decode_request(*frame);
      Response response = request ? handle_request(store_, *request) : Response{Status::BadRequest, {}};
      {
        std::lock_guard g(mutex_);
        if (request) log_.push_back({request->op, request->doc_id, request->first, request->count, response.status});
      }
      write_frame(fd, encode_response(response));
    }
  } catch (const std::exception&) {
  }
  std::lock_guard g(mutex_);
  std::erase(connections_, fd);
  ::close(fd);
}

void Server::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  std::vector<std::thread> workers;
  {
    std::lock_guard g(mutex_);
    for (int fd : connections_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (std::thread& t : workers) t.join();
}

std::vector<LoggedRequest> Server::request_log() const {
  std::lock_guard g(mutex_);
  return log_;
}

void Server::clear_log() {
  std::lock_guard g(mutex_);
  log_.clear();
}

}  // namespace cardstream::dsp

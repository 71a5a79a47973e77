#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "cardstream/envelope.hpp"
#include "cardstream/protocol.hpp"
#include "cardstream/runtime.hpp"

namespace cardstream::dsp {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

/// "host:port" or ":port". Throws std::invalid_argument.
Endpoint parse_endpoint(const std::string& text);

/// Directory-backed store: `<hex docId>.sxd` per document and
/// `rules/<hex docId>-<hex subject digest>.bin` per rules blob. It holds
/// ciphertext and public headers only. Reads share a per-document lock,
/// writes take it exclusively.
class Store {
public:
  explicit Store(std::filesystem::path dir);

  /// Validates the envelope layout (not its MACs). Throws IntegrityError.
  envelope::DocId put_document(std::span<const std::uint8_t> stored);
  std::optional<envelope::Bytes> header(const envelope::DocId& id);
  /// Stored bytes of records `first .. first+count-1`; nullopt when the
  /// document is unknown. Throws RangeError.
  std::optional<envelope::Bytes> chunk_bytes(const envelope::DocId& id, std::uint32_t first, std::uint32_t count);
  std::vector<envelope::DocId> list() const;
  void put_rules(const envelope::DocId& id, const envelope::Digest& subject, std::span<const std::uint8_t> blob);
  std::optional<envelope::Bytes> rules(const envelope::DocId& id, const envelope::Digest& subject);

  const std::filesystem::path& dir() const noexcept { return dir_; }

private:
  std::shared_ptr<std::shared_mutex> lock_for(const envelope::DocId& id);
  std::filesystem::path doc_path(const envelope::DocId& id) const;
  std::filesystem::path rules_path(const envelope::DocId& id, const envelope::Digest& subject) const;

  std::filesystem::path dir_;
  std::mutex locks_mutex_;
  std::map<envelope::DocId, std::shared_ptr<std::shared_mutex>> locks_;
};

/// Answers one decoded request against the store.
Response handle_request(Store& store, const Request& request);

struct LoggedRequest {
  Opcode op;
  envelope::DocId doc_id;
  std::uint32_t first;
  std::uint32_t count;
  Status status;
};

/// TCP server: one thread per connection, requests handled in order per
/// connection.
class Server {
public:
  Server(Store& store, Endpoint endpoint);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts accepting. Throws BindError.
  void start();
  /// Closes the listener and every connection, then joins all threads.
  void stop();
  /// The bound port (resolved when the endpoint asked for port 0).
  std::uint16_t port() const noexcept { return port_; }
  Endpoint endpoint() const { return {endpoint_.host, port_}; }
  std::vector<LoggedRequest> request_log() const;
  void clear_log();

private:
  void accept_loop();
  void serve_connection(int fd);

  Store& store_;
  Endpoint endpoint_;
  std::uint16_t port_ = 0;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  mutable std::mutex mutex_;
  std::vector<int> connections_;
  std::vector<std::thread> workers_;
  std::vector<LoggedRequest> log_;
};

/// Blocking client over one connection, opened on first use. Throws
/// TransportError for connection and framing failures and for any non-OK
/// status (except NOT_FOUND from `get_rules`).
class DspClient {
public:
  /// Observes every frame payload; `outbound` is true for requests.
  using Tap = std::function<void(std::span<const std::uint8_t> payload, bool outbound)>;

  explicit DspClient(Endpoint endpoint);
  ~DspClient();
  DspClient(const DspClient&) = delete;
  DspClient& operator=(const DspClient&) = delete;

  void set_tap(Tap tap) { tap_ = std::move(tap); }

  Response call(const Request& request);

  envelope::DocId put_document(std::span<const std::uint8_t> stored);
  envelope::Bytes get_header(const envelope::DocId& id);
  envelope::Bytes get_chunk_bytes(const envelope::DocId& id, std::uint32_t first, std::uint32_t count);
  std::vector<envelope::DocId> list();
  void put_rules(const envelope::DocId& id, const envelope::Digest& subject, std::span<const std::uint8_t> blob);
  /// nullopt when the store has no blob for this pair.
  std::optional<envelope::Bytes> get_rules(const envelope::DocId& id, const envelope::Digest& subject);

private:
  void connect();
  void disconnect() noexcept;

  Endpoint endpoint_;
  int fd_ = -1;
  Tap tap_;
};

/// ChunkSource over a DspClient.
class RemoteChunkSource final : public soe::ChunkSource {
public:
  RemoteChunkSource(DspClient& client, envelope::DocId doc_id) : client_(client), doc_id_(doc_id) {}

  envelope::Bytes get_header() override;
  std::vector<envelope::ChunkRecord> get_chunks(std::uint32_t first, std::uint32_t count) override;

private:
  const envelope::EnvelopeHeader& header();

  DspClient& client_;
  envelope::DocId doc_id_;
  std::optional<envelope::EnvelopeHeader> header_;
};

}  // namespace cardstream::dsp

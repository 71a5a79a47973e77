#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cardstream/access.hpp"
#include "cardstream/budget.hpp"
#include "cardstream/envelope.hpp"
#include "cardstream/evaluator.hpp"

namespace cardstream::soe {

struct BudgetProfile {
  std::string name;
  std::uint64_t working_memory_bytes = 0;
  std::optional<std::uint64_t> bandwidth_bytes_per_sec;

  static BudgetProfile desk() { return {"desk", 65536, std::nullopt}; }
  static BudgetProfile smartcard() { return {"smartcard", 1024, 2048}; }
  /// Throws std::invalid_argument for unknown names.
  static BudgetProfile by_name(std::string_view name);
};

/// Where a session reads an envelope from. Implementations may be remote.
class ChunkSource {
public:
  virtual ~ChunkSource() = default;
  /// The serialized envelope header, MAC included.
  virtual envelope::Bytes get_header() = 0;
  /// Records `first .. first+count-1` in order. Throws RangeError.
  virtual std::vector<envelope::ChunkRecord> get_chunks(std::uint32_t first, std::uint32_t count) = 0;
};

/// Serves a stored envelope held in memory.
class MemoryChunkSource final : public ChunkSource {
public:
  /// Throws IntegrityError when the bytes are not a complete envelope.
  explicit MemoryChunkSource(envelope::Bytes stored);
  envelope::Bytes get_header() override;
  std::vector<envelope::ChunkRecord> get_chunks(std::uint32_t first, std::uint32_t count) override;

private:
  envelope::Bytes stored_;
  envelope::EnvelopeHeader header_;
  std::size_t header_size_ = 0;
};

/// Reads records from a stored envelope file on demand.
class FileChunkSource final : public ChunkSource {
public:
  /// Throws Error when the file cannot be read, IntegrityError when its
  /// length does not match its header.
  explicit FileChunkSource(std::string path);
  envelope::Bytes get_header() override;
  std::vector<envelope::ChunkRecord> get_chunks(std::uint32_t first, std::uint32_t count) override;

private:
  envelope::Bytes read_at(std::uint64_t offset, std::size_t length) const;

  std::string path_;
  envelope::Bytes header_bytes_;
  envelope::EnvelopeHeader header_;
};

/// Splits consecutive stored chunk records, as laid out on disk.
std::vector<envelope::ChunkRecord> split_records(const envelope::EnvelopeHeader& header, std::uint32_t first,
                                                 std::uint32_t count, std::span<const std::uint8_t> bytes);

/// Byte counts cover chunk ciphertext only; headers and MACs are excluded.
struct Stats {
  std::uint64_t bytes_fetched = 0;
  std::uint64_t bytes_decrypted = 0;
  std::uint64_t bytes_skipped = 0;
  std::uint64_t bytes_total = 0;
  std::uint32_t chunks_fetched = 0;
  std::uint32_t chunks_skipped = 0;
  std::uint32_t chunks_total = 0;
  std::uint64_t peak_memory = 0;
  std::uint64_t events_emitted = 0;
  /// Virtual transfer time, set when the profile has a bandwidth.
  std::optional<double> transfer_seconds;
};

/// `key=value` lines.
std::string format_stats(const Stats& stats);

struct SessionOptions {
  bool skip = true;
  bool suspend = true;
  /// When set, a header carrying another document id is rejected.
  std::optional<envelope::DocId> expected_doc_id;
};

/// One query over one document inside the simulated secure environment.
/// Single use: `run_session` may be called once.
class Session {
public:
  Session(envelope::DocumentKey key, access::RuleSet rules, std::optional<xpath::PathExpr> query,
          BudgetProfile profile, SessionOptions options = {});

  const BudgetProfile& profile() const noexcept { return profile_; }
  const SessionOptions& options() const noexcept { return options_; }
  const MemoryAccountant& accountant() const noexcept { return *accountant_; }

private:
  friend Stats run_session(Session&, ChunkSource&, const std::function<void(std::string_view)>&);

  envelope::DocumentKey key_;
  BudgetProfile profile_;
  SessionOptions options_;
  std::unique_ptr<MemoryAccountant> accountant_;
  std::unique_ptr<engine::Evaluator> evaluator_;
  bool used_ = false;
};

/// Compiles and charges the automata. Throws CompileError or BudgetExceeded.
Session open_session(const envelope::DocumentKey& key, const access::RuleSet& rules,
                     const std::optional<xpath::PathExpr>& query, const BudgetProfile& profile,
                     SessionOptions options = {});

/// Streams the authorized output to `sink` as it becomes final; every byte
/// handed to the sink comes from verified chunks. Throws IntegrityError,
/// CorruptStream, BudgetExceeded or TransportError.
Stats run_session(Session& session, ChunkSource& source, const std::function<void(std::string_view)>& sink);

struct SessionResult {
  std::string output;
  Stats stats;
};

SessionResult run_session(Session& session, ChunkSource& source);

}  // namespace cardstream::soe

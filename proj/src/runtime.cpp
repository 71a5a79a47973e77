#include "cardstream/runtime.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cardstream/compact.hpp"
#include "cardstream/error.hpp"

namespace cardstream::soe {

using envelope::Bytes;
using envelope::ChunkRecord;
using envelope::EnvelopeHeader;

namespace {

constexpr std::uint64_t kDeskPendingCap = 16 * 1024;

void check_range(const EnvelopeHeader& h, std::uint32_t first, std::uint32_t count) {
  if (count == 0 || first >= h.chunk_count || count > h.chunk_count - first) {
    throw RangeError("chunk range " + std::to_string(first) + "+" + std::to_string(count) + " out of range");
  }
}

// Token-stream input that fetches, verifies and decrypts one chunk at a time.
// Only the chunk holding the current position is resident.
class ChunkedReader final : public compact::ByteReader {
public:
  ChunkedReader(ChunkSource& source, const EnvelopeHeader& header, const envelope::DocumentKey& key,
                MemoryAccountant& acct, Stats& stats)
      : source_(source), header_(header), key_(key), acct_(acct), stats_(stats) {}

  ~ChunkedReader() override { acct_.release(MemoryCategory::ChunkWindow, plain_.size()); }

  std::optional<std::uint8_t> next() override {
    if (pos_ >= header_.plaintext_length) return std::nullopt;
    auto index = static_cast<std::uint32_t>(pos_ / header_.chunk_size);
    if (!resident_ || *resident_ != index) load(index);
    return plain_[pos_++ - std::uint64_t{index} * header_.chunk_size];
  }

  std::uint64_t position() const override { return pos_; }
  void seek(std::uint64_t offset) override { pos_ = offset; }

private:
  void load(std::uint32_t index) {
    acct_.release(MemoryCategory::ChunkWindow, plain_.size());
    plain_.clear();
    resident_.reset();
    std::vector<ChunkRecord> recs = source_.get_chunks(index, 1);
    if (recs.size() != 1) throw IntegrityError("chunk source returned the wrong number of records");
    stats_.bytes_fetched += recs[0].ciphertext.size();
    ++stats_.chunks_fetched;
    acct_.charge(MemoryCategory::ChunkWindow, recs[0].ciphertext.size());
    try {
      plain_ = envelope::open_chunk(header_, key_, index, recs[0]);
    } catch (...) {
      acct_.release(MemoryCategory::ChunkWindow, recs[0].ciphertext.size());
      throw;
    }
    stats_.bytes_decrypted += plain_.size();
    resident_ = index;
  }

  ChunkSource& source_;
  const EnvelopeHeader& header_;
  const envelope::DocumentKey& key_;
  MemoryAccountant& acct_;
  Stats& stats_;
  std::uint64_t pos_ = 0;
  std::optional<std::uint32_t> resident_;
  Bytes plain_;
};

}  // namespace

BudgetProfile BudgetProfile::by_name(std::string_view name) {
  if (name == "desk") return desk();
  if (name == "smartcard") return smartcard();
  throw std::invalid_argument("unknown profile '" + std::string(name) + "' (expected desk or smartcard)");
}

MemoryChunkSource::MemoryChunkSource(Bytes stored) : stored_(std::move(stored)) {
  header_ = envelope::parse_encrypted(stored_).header;
  header_size_ = header_.encoded_size();
}

Bytes MemoryChunkSource::get_header() { return Bytes(stored_.begin(), stored_.begin() + static_cast<std::ptrdiff_t>(header_size_)); }

std::vector<ChunkRecord> MemoryChunkSource::get_chunks(std::uint32_t first, std::uint32_t count) {
  check_range(header_, first, count);
  std::uint64_t begin = header_size_ + header_.chunk_record_offset(first);
  std::uint64_t end = header_size_ + header_.chunk_record_offset(first + count - 1) +
                      header_.chunk_plain_length(first + count - 1) + envelope::kMacSize;
  return split_records(header_, first, count,
                       std::span(stored_).subspan(begin, end - begin));
}

FileChunkSource::FileChunkSource(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary | std::ios::ate);
  if (!in) throw Error("cannot open " + path_);
  auto file_size = static_cast<std::uint64_t>(in.tellg());
  Bytes prefix = read_at(0, static_cast<std::size_t>(std::min<std::uint64_t>(file_size, envelope::kFixedHeaderSize)));
  std::size_t hlen = envelope::header_size_from_prefix(prefix);
  if (hlen > file_size) throw IntegrityError("truncated header");
  header_bytes_ = read_at(0, hlen);
  header_ = envelope::parse_header(header_bytes_);
  if (header_.stored_size() != file_size) throw IntegrityError("stored length does not match the header");
}

Bytes FileChunkSource::get_header() { return header_bytes_; }

std::vector<ChunkRecord> FileChunkSource::get_chunks(std::uint32_t first, std::uint32_t count) {
  check_range(header_, first, count);
  std::uint64_t begin = header_.encoded_size() + header_.chunk_record_offset(first);
  std::uint64_t end = header_.encoded_size() + header_.chunk_record_offset(first + count - 1) +
                      header_.chunk_plain_length(first + count - 1) + envelope::kMacSize;
  Bytes bytes = read_at(begin, static_cast<std::size_t>(end - begin));
  return split_records(header_, first, count, bytes);
}

Bytes FileChunkSource::read_at(std::uint64_t offset, std::size_t length) const {
  std::ifstream in(path_, std::ios::binary);
  Bytes out(length);
  in.seekg(static_cast<std::streamoff>(offset));
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(length));
  if (!in) throw Error("cannot read " + path_);
  return out;
}

std::vector<ChunkRecord> split_records(const EnvelopeHeader& header, std::uint32_t first, std::uint32_t count,
                                       std::span<const std::uint8_t> bytes) {
  std::vector<ChunkRecord> out;
  std::size_t at = 0;
  for (std::uint32_t i = first; i - first < count; ++i) {
    std::size_t len = header.chunk_plain_length(i);
    if (bytes.size() - at < len + envelope::kMacSize) throw IntegrityError("truncated chunk records");
    ChunkRecord rec;
    rec.ciphertext.assign(bytes.begin() + static_cast<std::ptrdiff_t>(at),
                          bytes.begin() + static_cast<std::ptrdiff_t>(at + len));
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(at + len), envelope::kMacSize, rec.mac.begin());
    at += len + envelope::kMacSize;
    out.push_back(std::move(rec));
  }
  if (at != bytes.size()) throw IntegrityError("unexpected bytes after chunk records");
  return out;
}

std::string format_stats(const Stats& s) {
  std::ostringstream out;
  out << "bytesFetched=" << s.bytes_fetched << '\n'
      << "bytesDecrypted=" << s.bytes_decrypted << '\n'
      << "bytesSkipped=" << s.bytes_skipped << '\n'
      << "bytesTotal=" << s.bytes_total << '\n'
      << "chunksFetched=" << s.chunks_fetched << '\n'
      << "chunksSkipped=" << s.chunks_skipped << '\n'
      << "chunksTotal=" << s.chunks_total << '\n'
      << "peakMemory=" << s.peak_memory << '\n'
      << "eventsEmitted=" << s.events_emitted << '\n';
  if (s.transfer_seconds) out << "transferSeconds=" << *s.transfer_seconds << '\n';
  return out.str();
}

Session::Session(envelope::DocumentKey key, access::RuleSet rules, std::optional<xpath::PathExpr> query,
                 BudgetProfile profile, SessionOptions options)
    : key_(key), profile_(std::move(profile)), options_(options) {
  std::optional<std::uint64_t> cap;
  if (profile_.working_memory_bytes > kDeskPendingCap) cap = kDeskPendingCap;
  accountant_ = std::make_unique<MemoryAccountant>(profile_.working_memory_bytes, cap);
  engine::EvaluatorOptions eo;
  eo.suspend = options_.suspend;
  eo.pending_cap = cap;
  evaluator_ = std::make_unique<engine::Evaluator>(rules, query, eo, accountant_.get());
}

Session open_session(const envelope::DocumentKey& key, const access::RuleSet& rules,
                     const std::optional<xpath::PathExpr>& query, const BudgetProfile& profile, SessionOptions options) {
  return Session(key, rules, query, profile, options);
}

Stats run_session(Session& session, ChunkSource& source, const std::function<void(std::string_view)>& sink) {
  if (session.used_) throw std::logic_error("session already ran");
  session.used_ = true;

  Bytes header_bytes = source.get_header();
  if (header_bytes.size() < envelope::kFixedHeaderSize) throw IntegrityError("truncated header");
  EnvelopeHeader header = envelope::parse_header(header_bytes);
  envelope::verify_header(header, session.key_);
  if (session.options_.expected_doc_id && header.doc_id != *session.options_.expected_doc_id) {
    throw IntegrityError("header belongs to another document");
  }

  Bytes dict_plain = envelope::decrypt_dictionary(header, session.key_);
  compact::CompactHeader dict = compact::read_compact_header(dict_plain);
  if (dict.length != dict_plain.size()) throw CorruptStream("unexpected bytes after the tag dictionary");

  Stats stats;
  stats.bytes_total = header.plaintext_length;
  stats.chunks_total = header.chunk_count;

  engine::Evaluator& ev = *session.evaluator_;
  MemoryAccountant& acct = *session.accountant_;
  ev.bind_dictionary(dict.dict.tags());

  doc::XmlWriter writer;
  auto deliver = [&](const std::vector<engine::OutputAction>& actions) {
    for (const engine::OutputAction& a : actions) {
      if (a.kind != engine::OutputAction::Kind::Emit) continue;
      ++stats.events_emitted;
      std::string bytes = writer.push(a.event);
      if (!bytes.empty()) sink(bytes);
    }
  };

  {
    ChunkedReader reader(source, header, session.key_, acct, stats);
    compact::CompactCursor cursor;
    while (auto tok = compact::decode_next(cursor, reader, dict.dict)) {
      deliver(ev.push(tok->event));
      if (tok->descriptor && session.options_.skip && compact::can_skip(ev, *tok->descriptor)) {
        deliver(ev.skip_subtree(tok->descriptor->size));
        compact::skip_subtree(cursor, *tok->descriptor);
      }
    }
    ev.finish();
    writer.finish();
  }

  stats.bytes_skipped = stats.bytes_total - stats.bytes_fetched;
  stats.chunks_skipped = stats.chunks_total - stats.chunks_fetched;
  stats.peak_memory = acct.peak();
  if (session.profile_.bandwidth_bytes_per_sec) {
    stats.transfer_seconds =
        static_cast<double>(stats.bytes_fetched) / static_cast<double>(*session.profile_.bandwidth_bytes_per_sec);
  }
  return stats;
}

SessionResult run_session(Session& session, ChunkSource& source) {
  SessionResult r;
  r.stats = run_session(session, source, [&](std::string_view bytes) { r.output.append(bytes); });
  return r;
}

}  // namespace cardstream::soe

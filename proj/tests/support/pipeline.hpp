#pragma once

// Encode, encrypt and run helpers shared by the end-to-end tests.

#include <set>

#include "cardstream/compact.hpp"
#include "cardstream/envelope.hpp"
#include "cardstream/runtime.hpp"

namespace cardstream::testgen {

inline envelope::Bytes seal(const doc::Tree& t, const envelope::DocumentKey& key, std::uint32_t chunk_size,
                            const envelope::DocId& id = envelope::random_doc_id()) {
  return envelope::serialize(envelope::encrypt_document(compact::encode_compact(t), key, id, chunk_size));
}

inline soe::SessionResult run(soe::ChunkSource& source, const envelope::DocumentKey& key, const access::RuleSet& rules,
                              const std::optional<xpath::PathExpr>& query, bool skip = true,
                              soe::BudgetProfile profile = soe::BudgetProfile::desk()) {
  soe::SessionOptions options;
  options.skip = skip;
  soe::Session session = soe::open_session(key, rules, query, profile, options);
  return soe::run_session(session, source);
}

inline soe::SessionResult run(const envelope::Bytes& stored, const envelope::DocumentKey& key,
                              const access::RuleSet& rules, const std::optional<xpath::PathExpr>& query,
                              bool skip = true, soe::BudgetProfile profile = soe::BudgetProfile::desk()) {
  soe::MemoryChunkSource source(stored);
  return run(source, key, rules, query, skip, std::move(profile));
}

/// Records which chunks a session asked for.
class RecordingSource final : public soe::ChunkSource {
public:
  explicit RecordingSource(soe::ChunkSource& inner) : inner_(inner) {}
  envelope::Bytes get_header() override { return inner_.get_header(); }
  std::vector<envelope::ChunkRecord> get_chunks(std::uint32_t first, std::uint32_t count) override {
    for (std::uint32_t i = 0; i < count; ++i) fetched.insert(first + i);
    return inner_.get_chunks(first, count);
  }
  std::set<std::uint32_t> fetched;

private:
  soe::ChunkSource& inner_;
};

/// Reference output text of a session.
inline std::string expected_text(const access::RuleSet& rules, const std::optional<xpath::PathExpr>& query,
                                 const doc::Tree& t) {
  doc::EventList ev = access::session_events(rules, query, t);
  return ev.empty() ? std::string() : doc::events_to_text(ev);
}

}  // namespace cardstream::testgen

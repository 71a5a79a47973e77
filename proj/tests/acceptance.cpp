// Acceptance run: one line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>

#include "cardstream/dsp.hpp"
#include "cardstream/error.hpp"
#include "cardstream/evaluator.hpp"
#include "support/generators.hpp"
#include "support/pipeline.hpp"

using namespace cardstream;
using envelope::Bytes;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Case {
  doc::Tree tree;
  access::RuleSet rules;
  std::optional<xpath::PathExpr> query;
};

// Documents <= 60 nodes over <= 8 tags, up to 6 rules from the whole
// fragment, optional query.
Case random_case(std::uint64_t seed) {
  testgen::Rng rng(seed);
  testgen::TreeShape shape;
  shape.alphabet = 2 + testgen::pick(rng, 7);
  testgen::PathShape paths;
  paths.alphabet = shape.alphabet;
  paths.predicate_chance = 0.35;
  doc::Tree tree = testgen::random_tree(rng, shape);
  access::RuleSet rules = testgen::random_rules(rng, paths, 6);
  auto query = testgen::random_query(rng, paths);
  return Case{std::move(tree), std::move(rules), std::move(query)};
}

// Stretches every text so the same shape spans several chunks.
void pad_texts(doc::Node& n, std::size_t width) {
  if (n.text && !n.text->empty()) {
    std::string padded;
    while (padded.size() < width) padded += *n.text;
    n.text = std::move(padded);
  }
  for (doc::Node& c : n.children) pad_texts(c, width);
}

Case chunky_case(std::uint64_t seed) {
  Case c = random_case(seed);
  if (seed % 2 == 1) pad_texts(c.tree, 48 + seed % 97);
  return c;
}

std::string describe(const Case& c) {
  std::ostringstream s;
  s << doc::tree_to_text(c.tree) << " rules:";
  for (const auto& r : c.rules.rules) {
    s << ' ' << (r.sign == access::Sign::Positive ? '+' : '-') << xpath::xpath_to_string(r.object);
  }
  if (c.query) s << " query: " << xpath::xpath_to_string(*c.query);
  return s.str();
}

access::RuleSet rules_of(const char* text) { return access::rule_set_for("s", access::parse_rules(text)); }

Outcome oracle_equivalence() {
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    Case c = random_case(seed);
    if (engine::evaluate_stream(c.rules, c.query, doc::tree_to_events(c.tree)) !=
        access::session_events(c.rules, c.query, c.tree)) {
      return {false, "mismatch at seed " + std::to_string(seed) + ": " + describe(c)};
    }
  }
  return {true, "10000/10000 cases equal the reference views"};
}

Outcome skip_soundness() {
  auto key = envelope::DocumentKey::generate();
  std::uint64_t skipped_chunks = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    Case c = chunky_case(seed);
    auto cs = static_cast<std::uint32_t>(256 + seed % 257);
    Bytes stored = testgen::seal(c.tree, key, cs);
    auto on = testgen::run(stored, key, c.rules, c.query, true);
    auto off = testgen::run(stored, key, c.rules, c.query, false);
    if (on.output != off.output || on.output != testgen::expected_text(c.rules, c.query, c.tree)) {
      return {false, "skip changed output at seed " + std::to_string(seed) + ": " + describe(c)};
    }
    skipped_chunks += on.stats.chunks_skipped;
  }
  return {true, "10000/10000 identical; " + std::to_string(skipped_chunks) + " chunks skipped in total"};
}

Outcome skip_effectiveness() {
  doc::Tree t{TagName("root"), {}, {}};
  t.children.push_back({TagName("head"), {}, "visible header"});
  doc::Node big{TagName("big"), {}, {}};
  for (int i = 0; i < 400; ++i) {
    doc::Node rec{TagName("record"), {}, {}};
    rec.children.push_back({TagName("name"), {}, "entry number " + std::to_string(i)});
    rec.children.push_back({TagName("value"), {}, std::to_string(i * 7919)});
    big.children.push_back(std::move(rec));
  }
  t.children.push_back(std::move(big));
  t.children.push_back({TagName("tail"), {}, "visible trailer"});

  Bytes compact = compact::encode_compact(t);
  auto descriptors = compact::build_descriptors(t, compact::build_dictionary(t));
  double big_share = static_cast<double>(descriptors.at(doc::NodeId{{1}}).size) / static_cast<double>(compact.size());

  auto key = envelope::DocumentKey::generate();
  Bytes stored = testgen::seal(t, key, 512);
  access::RuleSet rs = rules_of("+ s //root\n- s /root/big");
  auto r = testgen::run(stored, key, rs, std::nullopt, true);
  double decrypted = static_cast<double>(r.stats.bytes_decrypted) / static_cast<double>(r.stats.bytes_total);
  bool ok = big_share >= 0.9 && decrypted <= 0.15 && r.stats.chunks_skipped >= 0.8 * r.stats.chunks_total &&
            r.output == testgen::expected_text(rs, std::nullopt, t);
  char buf[200];
  std::snprintf(buf, sizeof buf, "big subtree %.1f%% of bytes; decrypted %.1f%%; skipped %u/%u chunks", 100 * big_share,
                100 * decrypted, r.stats.chunks_skipped, r.stats.chunks_total);
  return {ok, buf};
}

Outcome tamper_detection() {
  auto key = envelope::DocumentKey::generate();
  std::string text;
  doc::Tree t{TagName("a"), {}, {}};
  for (int i = 0; i < 30; ++i) t.children.push_back({TagName("b"), {}, "value " + std::to_string(i)});
  Bytes compact = compact::encode_compact(t);
  auto cs = static_cast<std::uint32_t>(compact.size() - compact::read_compact_header(compact).length - 40);
  Bytes stored = testgen::seal(t, key, cs);
  access::RuleSet rs = rules_of("+ s //a");
  std::string genuine = testgen::run(stored, key, rs, std::nullopt).output;
  if (envelope::parse_encrypted(stored).header.chunk_count != 2) return {false, "fixture is not two chunks"};

  std::size_t trials = 0;
  std::size_t detected = 0;
  std::size_t leaked = 0;
  auto attempt = [&](const Bytes& tampered) {
    ++trials;
    std::string out;
    try {
      soe::MemoryChunkSource src(tampered);
      soe::Session s = soe::open_session(key, rs, std::nullopt, soe::BudgetProfile::desk());
      soe::run_session(s, src, [&](std::string_view b) { out.append(b); });
    } catch (const IntegrityError&) {
      ++detected;
      if (genuine.rfind(out, 0) != 0) ++leaked;
      return;
    }
  };
  for (std::size_t byte = 0; byte < stored.size(); ++byte) {
    for (int bit = 0; bit < 8; ++bit) {
      Bytes b = stored;
      b[byte] ^= static_cast<std::uint8_t>(1u << bit);
      attempt(b);
    }
  }
  auto doc = envelope::parse_encrypted(stored);
  auto swapped = doc;
  std::swap(swapped.chunks[0].mac, swapped.chunks[1].mac);
  std::swap(swapped.chunks[0].ciphertext, swapped.chunks[1].ciphertext);
  swapped.chunks[1].ciphertext.resize(doc.chunks[1].ciphertext.size());
  attempt(envelope::serialize(swapped));
  auto other = envelope::encrypt_document(compact, key, envelope::random_doc_id(), cs);
  auto grafted = doc;
  grafted.chunks[1] = other.chunks[1];
  attempt(envelope::serialize(grafted));
  grafted = doc;
  grafted.chunks[0] = other.chunks[0];
  attempt(envelope::serialize(grafted));
  for (std::size_t cut = 1; cut < stored.size(); cut += 13) attempt(Bytes(stored.begin(), stored.end() - static_cast<long>(cut)));

  std::ostringstream s;
  s << detected << "/" << trials << " tamperings detected, " << leaked << " with unverified output";
  return {detected == trials && leaked == 0, s.str()};
}

doc::Tree nested(std::size_t depth) {
  doc::Tree root{TagName("a"), {}, {}};
  doc::Node* cur = &root;
  for (std::size_t i = 1; i < depth; ++i) {
    cur->children.push_back({TagName("a"), {}, {}});
    cur->children.push_back({TagName("t"), {}, "pending text"});
    cur = &cur->children.front();
  }
  cur->children.push_back({TagName("z"), {}, {}});
  return root;
}

Outcome budget_enforcement() {
  auto key = envelope::DocumentKey::generate();
  access::RuleSet rs = rules_of("+ s //a\n- s //b[c]\n+ s /*/d");
  testgen::Rng rng(2024);
  testgen::TreeShape shape;
  shape.max_depth = 4;
  std::uint64_t peak = 0;
  for (int i = 0; i < 200; ++i) {
    doc::Tree t = testgen::random_tree(rng, shape);
    if (doc::depth_of(t) > 4) return {false, "workload deeper than 4"};
    auto r = testgen::run(testgen::seal(t, key, 256), key, rs, std::nullopt, true, soe::BudgetProfile::smartcard());
    if (r.output != testgen::expected_text(rs, std::nullopt, t)) return {false, "wrong output under smartcard profile"};
    peak = std::max(peak, r.stats.peak_memory);
  }
  soe::Session s = soe::open_session(key, rules_of("+ s //a[z]"), std::nullopt, soe::BudgetProfile::smartcard());
  soe::MemoryChunkSource src(testgen::seal(nested(64), key, 256));
  bool aborted = false;
  try {
    soe::run_session(s, src);
  } catch (const BudgetExceeded&) {
    aborted = true;
  }
  std::ostringstream out;
  out << "depth-4 peak " << peak << " B; depth-64 " << (aborted ? "aborted" : "completed") << " with peak "
      << s.accountant().peak() << " B";
  return {peak <= 1024 && aborted && s.accountant().peak() <= 1024, out.str()};
}

Outcome bandwidth_model() {
  auto key = envelope::DocumentKey::generate();
  testgen::Rng rng(77);
  std::size_t exact = 0;
  for (int i = 0; i < 100; ++i) {
    doc::Tree t = testgen::random_tree(rng);
    auto r = testgen::run(testgen::seal(t, key, 256), key, rules_of("+ s //*"), std::nullopt, true,
                          soe::BudgetProfile{"throttled", 1u << 20, 2048});
    if (r.stats.transfer_seconds && *r.stats.transfer_seconds == static_cast<double>(r.stats.bytes_fetched) / 2048.0) {
      ++exact;
    }
  }
  return {exact == 100, std::to_string(exact) + "/100 sessions report bytesFetched/2048 s"};
}

Outcome transport_transparency() {
  auto dir = std::filesystem::temp_directory_path() / ("cardstream-accept-" + envelope::to_hex(envelope::random_doc_id()));
  dsp::Store store(dir);
  dsp::Server server(store, dsp::Endpoint{"127.0.0.1", 0});
  server.start();
  dsp::DspClient client(server.endpoint());
  auto key = envelope::DocumentKey::generate();
  std::size_t same = 0;
  std::size_t stray = 0;
  std::uint64_t skipped = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Case c = chunky_case(50000 + seed);
    Bytes stored = testgen::seal(c.tree, key, 256);
    envelope::DocId id = client.put_document(stored);
    soe::MemoryChunkSource local(stored);
    testgen::RecordingSource rec(local);
    auto a = testgen::run(rec, key, c.rules, c.query);
    server.clear_log();
    dsp::RemoteChunkSource remote(client, id);
    auto b = testgen::run(remote, key, c.rules, c.query);
    if (a.output == b.output && a.stats.bytes_fetched == b.stats.bytes_fetched) ++same;
    skipped += a.stats.chunks_skipped;
    for (const auto& r : server.request_log()) {
      if (r.op != dsp::Opcode::GetChunks) continue;
      for (std::uint32_t k = 0; k < r.count; ++k) stray += rec.fetched.count(r.first + k) ? 0 : 1;
    }
  }
  server.stop();
  std::filesystem::remove_all(dir);
  std::ostringstream out;
  out << same << "/100 identical; " << stray << " fetches inside skipped spans (" << skipped << " chunks skipped)";
  return {same == 100 && stray == 0, out.str()};
}

Outcome format_round_trips() {
  testgen::Rng rng(99);
  testgen::TreeShape shape;
  shape.alphabet = 8;
  for (int i = 0; i < 1000; ++i) {
    doc::Tree t = testgen::random_tree(rng, shape);
    if (compact::decode_events(compact::encode_compact(t)) != doc::tree_to_events(t)) {
      return {false, "compact round trip failed on " + doc::tree_to_text(t)};
    }
  }
  auto key = envelope::DocumentKey::generate();
  for (std::uint32_t cs : {256u, 512u, 4096u}) {
    for (std::size_t len : {std::size_t{0}, std::size_t{1}, std::size_t{cs - 1}, std::size_t{cs}, std::size_t{cs + 1}}) {
      Bytes plain(len);
      for (auto& b : plain) b = static_cast<std::uint8_t>(rng());
      if (len) plain[0] = 'P';
      auto doc = envelope::parse_encrypted(envelope::serialize(envelope::encrypt_document(plain, key, envelope::random_doc_id(), cs)));
      if (envelope::decrypt_document(doc, key) != plain) return {false, "envelope round trip failed at " + std::to_string(len)};
    }
  }
  return {true, "1000 compact trees and 15 envelope payloads round-trip"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"oracle equivalence", oracle_equivalence},
      {"skip soundness", skip_soundness},
      {"skip effectiveness", skip_effectiveness},
      {"tamper detection", tamper_detection},
      {"budget enforcement", budget_enforcement},
      {"bandwidth model", bandwidth_model},
      {"transport transparency", transport_transparency},
      {"format round-trips", format_round_trips},
  };
  int failed = 0;
  int n = 0;
  for (const Criterion& c : criteria) {
    ++n;
    auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %d. %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", n, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d/%d criteria passed\n", n - failed, n);
  return failed == 0 ? 0 : 1;
}

#include <filesystem>
#include <fstream>

#include "cardstream/error.hpp"
#include "cardstream/runtime.hpp"
#include "doctest.h"
#include "support/generators.hpp"
#include "support/pipeline.hpp"

using namespace cardstream;
using namespace cardstream::soe;
using envelope::Bytes;

namespace {

access::RuleSet rules_of(const char* text) { return access::rule_set_for("s", access::parse_rules(text)); }

// <a><b>..</b><c>{many e}</c><d>..</d></a> with c holding most of the bytes.
doc::Tree forbidden_middle(std::size_t fillers) {
  doc::Tree t{TagName("a"), {}, {}};
  t.children.push_back({TagName("b"), {}, std::string(40, 'b')});
  doc::Node c{TagName("c"), {}, {}};
  for (std::size_t i = 0; i < fillers; ++i) c.children.push_back({TagName("e"), {}, "filler " + std::to_string(i)});
  t.children.push_back(std::move(c));
  t.children.push_back({TagName("d"), {}, std::string(40, 'd')});
  return t;
}

// Compact token-stream length of `t` (header excluded).
std::size_t body_size(const doc::Tree& t) {
  Bytes c = compact::encode_compact(t);
  return c.size() - compact::read_compact_header(c).length;
}

doc::Tree nested(std::size_t depth, const std::string& text) {
  doc::Tree root{TagName("a"), {}, {}};
  doc::Node* cur = &root;
  for (std::size_t i = 1; i < depth; ++i) {
    cur->children.push_back({TagName("a"), {}, {}});
    cur->children.push_back({TagName("t"), {}, text});
    cur = &cur->children.front();
  }
  cur->children.push_back({TagName("z"), {}, {}});
  return root;
}

}  // namespace

TEST_CASE("budget profiles") {
  CHECK(BudgetProfile::desk().working_memory_bytes == 65536);
  CHECK_FALSE(BudgetProfile::desk().bandwidth_bytes_per_sec.has_value());
  CHECK(BudgetProfile::smartcard().working_memory_bytes == 1024);
  CHECK(BudgetProfile::smartcard().bandwidth_bytes_per_sec == std::optional<std::uint64_t>(2048));
  CHECK(BudgetProfile::by_name("smartcard").name == "smartcard");
  CHECK_THROWS_AS(BudgetProfile::by_name("mainframe"), std::invalid_argument);
}

TEST_CASE("opening sessions") {
  auto key = envelope::DocumentKey::generate();
  CHECK_NOTHROW(open_session(key, rules_of("+ s //a"), std::nullopt, BudgetProfile::desk()));
  std::string many;
  for (int i = 0; i < 40; ++i) many += "+ s //a/b/c[d/e=\"value\"]\n";
  access::RuleSet big = rules_of(many.c_str());
  CHECK_THROWS_AS(open_session(key, big, std::nullopt, BudgetProfile::smartcard()), BudgetExceeded);
  CHECK_NOTHROW(open_session(key, big, std::nullopt, BudgetProfile::desk()));
  CHECK_THROWS_AS(rules_of("+ s /a[position()=1]"), CompileError);
  Session s = open_session(key, rules_of("+ s /a/b\n- s //c"), xpath::parse_xpath("//b"), BudgetProfile::desk());
  CHECK(s.accountant().current(MemoryCategory::Automata) > 0);
}

TEST_CASE("single-chunk reference example") {
  auto key = envelope::DocumentKey::generate();
  doc::Tree t = doc::parse_xml_text("<a><b>x</b><c><b>y</b></c></a>");
  Bytes stored = testgen::seal(t, key, 256);
  SessionResult r = testgen::run(stored, key, rules_of("+ s //a\n- s /a/c"), std::nullopt);
  CHECK(r.output == "<a><b>x</b></a>");
  CHECK(r.stats.chunks_total == 1);
  CHECK(r.stats.chunks_fetched == 1);
  CHECK(r.stats.events_emitted == 5);
  CHECK_FALSE(r.stats.transfer_seconds.has_value());
}

TEST_CASE("sessions run once") {
  auto key = envelope::DocumentKey::generate();
  MemoryChunkSource source(testgen::seal(doc::parse_xml_text("<a/>"), key, 256));
  Session s = open_session(key, rules_of("+ s /a"), std::nullopt, BudgetProfile::desk());
  CHECK(run_session(s, source).output == "<a/>");
  CHECK_THROWS_AS(run_session(s, source), std::logic_error);
}

TEST_CASE("a forbidden subtree spanning most chunks is never fetched") {
  auto key = envelope::DocumentKey::generate();
  doc::Tree t = forbidden_middle(180);
  std::size_t body = body_size(t);
  auto cs = static_cast<std::uint32_t>((body + 9) / 10);
  REQUIRE(cs >= envelope::kMinChunkSize);
  Bytes stored = testgen::seal(t, key, cs);
  access::RuleSet rs = rules_of("+ s //a\n- s /a/c");

  MemoryChunkSource mem(stored);
  testgen::RecordingSource rec(mem);
  SessionResult skip = testgen::run(rec, key, rs, std::nullopt, true);
  SessionResult full = testgen::run(stored, key, rs, std::nullopt, false);
  CHECK(skip.stats.chunks_total == 10);
  CHECK(skip.stats.chunks_skipped >= 7);
  CHECK(full.stats.chunks_skipped == 0);
  CHECK(skip.output == full.output);
  CHECK(skip.output == testgen::expected_text(rs, std::nullopt, t));
  CHECK(rec.fetched.size() == skip.stats.chunks_fetched);
  CHECK(skip.stats.bytes_fetched + skip.stats.bytes_skipped == skip.stats.bytes_total);
  CHECK(skip.stats.bytes_decrypted <= skip.stats.bytes_fetched);
  CHECK(skip.stats.bytes_decrypted < full.stats.bytes_decrypted);

  SUBCASE("tampering inside the skipped range goes unnoticed") {
    std::uint32_t victim = 0;
    for (std::uint32_t i = 0; i < 10; ++i) {
      if (!rec.fetched.count(i)) victim = i;
    }
    REQUIRE(victim != 0);
    auto doc = envelope::parse_encrypted(stored);
    doc.chunks[victim].ciphertext[3] ^= 0x01;
    SessionResult r = testgen::run(envelope::serialize(doc), key, rs, std::nullopt, true);
    CHECK(r.output == skip.output);
    CHECK_THROWS_AS(testgen::run(envelope::serialize(doc), key, rs, std::nullopt, false), IntegrityError);
  }
  SUBCASE("tampering inside a fetched chunk aborts before its bytes are used") {
    for (std::uint32_t victim : rec.fetched) {
      auto doc = envelope::parse_encrypted(stored);
      doc.chunks[victim].mac[0] ^= 0x80;
      MemoryChunkSource src(envelope::serialize(doc));
      Session s = open_session(key, rs, std::nullopt, BudgetProfile::desk());
      std::string out;
      CHECK_THROWS_AS(run_session(s, src, [&](std::string_view b) { out.append(b); }), IntegrityError);
      CHECK(skip.output.rfind(out, 0) == 0);
      if (victim == 0) CHECK(out.empty());
    }
  }
}

TEST_CASE("header problems are integrity failures") {
  auto key = envelope::DocumentKey::generate();
  Bytes stored = testgen::seal(doc::parse_xml_text("<a><b>x</b></a>"), key, 256);
  access::RuleSet rs = rules_of("+ s //a");
  Bytes t = stored;
  t[30] ^= 0x01;  // chunk size field
  CHECK_THROWS_AS(testgen::run(t, key, rs, std::nullopt), IntegrityError);
  CHECK_THROWS_AS(testgen::run(stored, envelope::DocumentKey::generate(), rs, std::nullopt), IntegrityError);

  MemoryChunkSource src(stored);
  SessionOptions opts;
  opts.expected_doc_id = envelope::random_doc_id();
  Session s = open_session(key, rs, std::nullopt, BudgetProfile::desk(), opts);
  CHECK_THROWS_AS(run_session(s, src), IntegrityError);
}

TEST_CASE("file source matches the memory source") {
  auto key = envelope::DocumentKey::generate();
  testgen::Rng rng(101);
  doc::Tree t = testgen::random_tree(rng);
  Bytes stored = testgen::seal(t, key, 256);
  auto path = std::filesystem::temp_directory_path() / ("cardstream-" + envelope::to_hex(envelope::random_doc_id()));
  {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(stored.data()), static_cast<long>(stored.size()));
  }
  access::RuleSet rs = rules_of("+ s //*");
  FileChunkSource file(path.string());
  CHECK(file.get_header() == MemoryChunkSource(stored).get_header());
  CHECK_THROWS_AS(file.get_chunks(0, 1000), RangeError);
  SessionResult a = testgen::run(file, key, rs, std::nullopt);
  CHECK(a.output == testgen::run(stored, key, rs, std::nullopt).output);

  std::filesystem::resize_file(path, stored.size() - 1);
  CHECK_THROWS_AS(FileChunkSource(path.string()), IntegrityError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(FileChunkSource(path.string()), Error);
}

TEST_CASE("end-to-end output equals the reference at any chunk size") {
  auto key = envelope::DocumentKey::generate();
  testgen::Rng rng(103);
  for (int i = 0; i < 400; ++i) {
    doc::Tree t = testgen::random_tree(rng);
    access::RuleSet rs = testgen::random_rules(rng, {}, 6);
    auto q = testgen::random_query(rng);
    auto cs = static_cast<std::uint32_t>(256 + testgen::pick(rng, 300));
    Bytes stored = testgen::seal(t, key, cs);
    std::string want = testgen::expected_text(rs, q, t);
    SessionResult on = testgen::run(stored, key, rs, q, true);
    SessionResult off = testgen::run(stored, key, rs, q, false);
    CHECK(on.output == want);
    CHECK(off.output == want);
    CHECK(on.stats.bytes_fetched + on.stats.bytes_skipped == on.stats.bytes_total);
    CHECK(on.stats.chunks_fetched + on.stats.chunks_skipped == on.stats.chunks_total);
    CHECK(on.stats.bytes_fetched <= off.stats.bytes_fetched);
    CHECK(off.stats.bytes_fetched == off.stats.bytes_total);
    CHECK(on.stats.events_emitted == off.stats.events_emitted);
  }
}

TEST_CASE("smartcard budget") {
  auto key = envelope::DocumentKey::generate();
  testgen::Rng rng(107);
  testgen::TreeShape shape;
  shape.max_depth = 4;
  access::RuleSet rs = rules_of("+ s //a\n- s //b[c]\n+ s /*/d");
  for (int i = 0; i < 50; ++i) {
    doc::Tree t = testgen::random_tree(rng, shape);
    SessionResult r = testgen::run(testgen::seal(t, key, 256), key, rs, std::nullopt, true, BudgetProfile::smartcard());
    CHECK(r.stats.peak_memory <= 1024);
    CHECK(r.output == testgen::expected_text(rs, std::nullopt, t));
  }

  Bytes deep = testgen::seal(nested(64, "pending text"), key, 256);
  Session s = open_session(key, rules_of("+ s //a[z]"), std::nullopt, BudgetProfile::smartcard());
  MemoryChunkSource src(deep);
  CHECK_THROWS_AS(run_session(s, src), BudgetExceeded);
  CHECK(s.accountant().peak() <= 1024);
  // The same workload fits on the desk profile.
  CHECK_FALSE(testgen::run(deep, key, rules_of("+ s //a[z]"), std::nullopt).output.empty());
}

TEST_CASE("virtual transfer time follows the throttle") {
  auto key = envelope::DocumentKey::generate();
  testgen::Rng rng(109);
  for (int i = 0; i < 20; ++i) {
    doc::Tree t = testgen::random_tree(rng);
    SessionResult r = testgen::run(testgen::seal(t, key, 256), key, rules_of("+ s //b"), std::nullopt, true,
                                   BudgetProfile{"slow", 1u << 20, 2048});
    REQUIRE(r.stats.transfer_seconds.has_value());
    CHECK(*r.stats.transfer_seconds == static_cast<double>(r.stats.bytes_fetched) / 2048.0);
  }
}

TEST_CASE("stats format") {
  Stats s;
  s.bytes_fetched = 10;
  s.transfer_seconds = 0.5;
  std::string text = format_stats(s);
  CHECK(text.find("bytesFetched=10\n") != std::string::npos);
  CHECK(text.find("bytesDecrypted=0\n") != std::string::npos);
  CHECK(text.find("transferSeconds=0.5\n") != std::string::npos);
}

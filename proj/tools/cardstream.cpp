// Command-line front end: keys, encoding, encryption, the store server,
// rule upload and query sessions.
//
// Exit codes: 0 success, 1 usage or invalid input, 2 integrity failure,
// 3 budget exceeded, 4 transport failure.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cardstream/access.hpp"
#include "cardstream/compact.hpp"
#include "cardstream/dsp.hpp"
#include "cardstream/envelope.hpp"
#include "cardstream/error.hpp"
#include "cardstream/keyfile.hpp"
#include "cardstream/runtime.hpp"

namespace {

using namespace cardstream;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIntegrity = 2;
constexpr int kExitBudget = 3;
constexpr int kExitTransport = 4;

struct UsageError : Error {
  using Error::Error;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

envelope::Bytes read_bytes(const std::string& path) {
  std::string text = read_text(path);
  return envelope::Bytes(text.begin(), text.end());
}

void write_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw UsageError("cannot write " + path);
}

dsp::Endpoint server_endpoint(const std::string& server) {
  if (server.empty()) throw UsageError("no server given (use --server or CARDSTREAM_SERVER)");
  return dsp::parse_endpoint(server);
}

struct QueryArgs {
  std::string doc;
  std::string key;
  std::string rules;
  std::string query;
  std::string server;
  std::string file;
  std::string profile = "desk";
  std::string subject;
  bool no_skip = false;
  bool stats = false;
};

access::RuleSet resolve_rules(const QueryArgs& a, const envelope::DocumentKey& key,
                              const std::optional<envelope::DocId>& doc_id) {
  std::string text;
  if (!a.rules.empty()) {
    text = read_text(a.rules);
  } else {
    if (a.server.empty() || a.subject.empty()) {
      throw UsageError("--rules is required unless both --server and --subject are given");
    }
    dsp::DspClient client(server_endpoint(a.server));
    envelope::Digest digest = envelope::sha256(a.subject);
    auto blob = doc_id ? client.get_rules(*doc_id, digest) : std::nullopt;
    if (!blob) blob = client.get_rules(envelope::DocId{}, digest);
    if (!blob) throw UsageError("the server holds no rules for subject '" + a.subject + "'");
    text = open_rules(*blob, key);
  }
  std::vector<access::AccessRule> rules = access::parse_rules(text);
  std::string subject = a.subject;
  if (subject.empty()) {
    std::vector<std::string> subjects = access::subjects_of(rules);
    if (subjects.size() > 1) throw UsageError("rules name several subjects; pick one with --subject");
    if (!subjects.empty()) subject = subjects.front();
  }
  return access::rule_set_for(subject, rules);
}

int run_query(const QueryArgs& a) {
  if (a.server.empty() == a.file.empty()) throw UsageError("give exactly one of --server or --file");
  if (!a.server.empty() && a.doc.empty()) throw UsageError("--doc is required with --server");
  std::optional<envelope::DocId> doc_id;
  if (!a.doc.empty()) doc_id = envelope::parse_doc_id(a.doc);

  envelope::DocumentKey key = read_key_file(a.key);
  access::RuleSet rules = resolve_rules(a, key, doc_id);
  std::optional<xpath::PathExpr> query;
  if (!a.query.empty()) query = xpath::parse_xpath(a.query);

  soe::SessionOptions options;
  options.skip = !a.no_skip;
  options.expected_doc_id = doc_id;
  soe::Session session = soe::open_session(key, rules, query, soe::BudgetProfile::by_name(a.profile), options);

  soe::SessionResult result;
  if (!a.file.empty()) {
    soe::FileChunkSource source(a.file);
    result = soe::run_session(session, source);
  } else {
    dsp::DspClient client(server_endpoint(a.server));
    dsp::RemoteChunkSource source(client, *doc_id);
    result = soe::run_session(session, source);
  }
  if (!result.output.empty()) std::cout << result.output << '\n';
  if (a.stats) std::cerr << soe::format_stats(result.stats);
  return kExitOk;
}

int run_serve(const std::string& dir, const std::string& listen) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  dsp::Store store(dir);
  dsp::Server server(store, dsp::parse_endpoint(listen));
  server.start();
  std::cerr << "listening on " << server.endpoint().str() << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  return kExitOk;
}

int run_verify(const std::string& file, const std::string& key_path) {
  envelope::DocumentKey key = read_key_file(key_path);
  envelope::EncryptedDocument doc = envelope::parse_encrypted(read_bytes(file));
  envelope::Bytes plain = envelope::decrypt_document(doc, key);
  doc::EventList events = compact::decode_events(plain);
  std::cerr << "ok: " << doc.header.chunk_count << " chunks, " << events.size() << " events\n";
  return kExitOk;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Encrypted XML documents with client-side access control"};
  app.require_subcommand(1);
  int code = kExitOk;

  std::string out;
  auto* keygen = app.add_subcommand("keygen", "Generate a document key file");
  keygen->add_option("-o,--output", out, "Key file to create")->required();
  keygen->callback([&] { write_key_file(out, envelope::DocumentKey::generate()); });

  std::string input;
  auto* encode = app.add_subcommand("encode", "Encode XML into the indexed compact format");
  encode->add_option("input", input, "XML document")->required();
  encode->add_option("-o,--output", out, "Compact output file")->required();
  encode->callback([&] { write_bytes(out, compact::encode_compact(doc::parse_xml_text(read_text(input)))); });

  std::string key_path;
  std::uint32_t chunk_size = envelope::kDefaultChunkSize;
  auto* encrypt = app.add_subcommand("encrypt", "Encrypt a compact document into chunks");
  encrypt->add_option("input", input, "Compact document")->required();
  encrypt->add_option("-k,--key", key_path, "Key file")->required();
  encrypt->add_option("-o,--output", out, "Encrypted output file")->required();
  encrypt->add_option("--chunk-size", chunk_size, "Chunk size in bytes (256..1048576)");
  encrypt->callback([&] {
    envelope::Bytes plain = read_bytes(input);
    if (!compact::has_compact_magic(plain)) throw UsageError(input + " is not a compact document");
    envelope::DocumentKey key = read_key_file(key_path);
    envelope::DocId id = envelope::random_doc_id();
    write_bytes(out, envelope::serialize(envelope::encrypt_document(plain, key, id, chunk_size)));
    std::cout << envelope::to_hex(id) << '\n';
  });

  std::string dir;
  std::string listen = "127.0.0.1:7878";
  auto* serve = app.add_subcommand("serve", "Run the document store server");
  serve->add_option("--dir", dir, "Store directory")->required();
  serve->add_option("--listen", listen, "host:port to listen on");
  serve->callback([&] { code = run_serve(dir, listen); });

  std::string server;
  auto* put = app.add_subcommand("put", "Upload an encrypted document");
  put->add_option("input", input, "Encrypted document")->required();
  put->add_option("--server", server, "host:port of the store")->envname("CARDSTREAM_SERVER");
  put->callback([&] {
    dsp::DspClient client(server_endpoint(server));
    std::cout << envelope::to_hex(client.put_document(read_bytes(input))) << '\n';
  });

  std::string subject;
  std::string doc_hex;
  auto* rules = app.add_subcommand("rules", "Manage access rules");
  rules->require_subcommand(1);
  auto* rules_put = rules->add_subcommand("put", "Seal and upload the rules of one subject");
  rules_put->add_option("input", input, "Rules file")->required();
  rules_put->add_option("-k,--key", key_path, "Key file")->required();
  rules_put->add_option("--server", server, "host:port of the store")->envname("CARDSTREAM_SERVER");
  rules_put->add_option("--subject", subject, "Subject whose rules are uploaded")->required();
  rules_put->add_option("--doc", doc_hex, "Document the rules apply to (default: all)");
  rules_put->callback([&] {
    envelope::DocumentKey key = read_key_file(key_path);
    access::RuleSet set = access::rule_set_for(subject, access::parse_rules(read_text(input)));
    if (set.rules.empty()) throw UsageError("no rules for subject '" + subject + "'");
    envelope::DocId id = doc_hex.empty() ? envelope::DocId{} : envelope::parse_doc_id(doc_hex);
    dsp::DspClient client(server_endpoint(server));
    client.put_rules(id, envelope::sha256(subject), seal_rules(access::rules_to_text(set.rules), key));
  });

  QueryArgs q;
  auto* query = app.add_subcommand("query", "Run a query session over an encrypted document");
  query->add_option("--doc", q.doc, "Document id (hex)");
  query->add_option("-k,--key", q.key, "Key file")->required();
  query->add_option("--rules", q.rules, "Rules file");
  query->add_option("--query", q.query, "XPath query");
  query->add_option("--server", q.server, "host:port of the store")->envname("CARDSTREAM_SERVER");
  query->add_option("--file", q.file, "Local encrypted document");
  query->add_option("--profile", q.profile, "desk or smartcard")->check(CLI::IsMember({"desk", "smartcard"}));
  query->add_option("--subject", q.subject, "Subject whose rules apply");
  query->add_flag("--no-skip", q.no_skip, "Decode every chunk instead of skipping subtrees");
  query->add_flag("--stats", q.stats, "Print session statistics to stderr");
  query->callback([&] {
    // A file source needs no server; drop a value inherited from the environment.
    if (!q.file.empty() && query->count("--server") == 0) q.server.clear();
    code = run_query(q);
  });

  auto* verify = app.add_subcommand("verify", "Check every MAC of an encrypted document");
  verify->add_option("input", input, "Encrypted document")->required();
  verify->add_option("-k,--key", key_path, "Key file")->required();
  verify->callback([&] { code = run_verify(input, key_path); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const IntegrityError& e) {
    std::cerr << "integrity failure: " << e.what() << '\n';
    return kExitIntegrity;
  } catch (const CorruptStream& e) {
    std::cerr << "integrity failure: " << e.what() << '\n';
    return kExitIntegrity;
  } catch (const BudgetExceeded& e) {
    std::cerr << "budget exceeded: " << e.what() << '\n';
    return kExitBudget;
  } catch (const TransportError& e) {
    std::cerr << "transport failure: " << e.what() << '\n';
    return kExitTransport;
  } catch (const BindError& e) {
    std::cerr << "transport failure: " << e.what() << '\n';
    return kExitTransport;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

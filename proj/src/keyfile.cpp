#include "cardstream/keyfile.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cardstream/error.hpp"

namespace cardstream {

namespace {

constexpr std::string_view kKeyMagic = "cardstream-key v1";
constexpr std::size_t kKeyBytes = 48;
constexpr std::size_t kKeyBase64 = 64;

}  // namespace

std::string encode_key_file(const envelope::DocumentKey& key) {
  std::array<std::uint8_t, kKeyBytes> raw{};
  std::copy(key.enc.begin(), key.enc.end(), raw.begin());
  std::copy(key.mac.begin(), key.mac.end(), raw.begin() + 16);
  std::array<unsigned char, kKeyBase64 + 1> b64{};
  EVP_EncodeBlock(b64.data(), raw.data(), static_cast<int>(raw.size()));
  return std::string(kKeyMagic) + "\n" + reinterpret_cast<const char*>(b64.data()) + "\n";
}

envelope::DocumentKey decode_key_file(std::string_view text) {
  auto nl = text.find('\n');
  if (nl == std::string_view::npos || text.substr(0, nl) != kKeyMagic) throw Error("not a cardstream key file");
  std::string body(text.substr(nl + 1));
  std::erase_if(body, [](char c) { return c == '\n' || c == '\r'; });
  if (body.size() != kKeyBase64) throw Error("key file has the wrong length");
  std::array<unsigned char, kKeyBytes> raw{};
  if (EVP_DecodeBlock(raw.data(), reinterpret_cast<const unsigned char*>(body.data()), static_cast<int>(body.size())) !=
      static_cast<int>(kKeyBytes)) {
    throw Error("key file is not valid base64");
  }
  envelope::DocumentKey key;
  std::copy_n(raw.begin(), 16, key.enc.begin());
  std::copy_n(raw.begin() + 16, 32, key.mac.begin());
  return key;
}

void write_key_file(const std::filesystem::path& path, const envelope::DocumentKey& key) {
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
  if (fd < 0) throw Error("cannot create " + path.string() + ": " + std::strerror(errno));
  std::string text = encode_key_file(key);
  bool ok = ::fchmod(fd, 0600) == 0 && ::write(fd, text.data(), text.size()) == static_cast<ssize_t>(text.size());
  ::close(fd);
  if (!ok) throw Error("cannot write " + path.string());
}

envelope::DocumentKey read_key_file(const std::filesystem::path& path) {
  struct stat st {};
  if (::stat(path.c_str(), &st) != 0) throw Error("cannot open key file " + path.string());
  if (st.st_mode & (S_IROTH | S_IWOTH)) throw Error("key file " + path.string() + " is accessible by others");
  std::ifstream in(path);
  std::ostringstream text;
  text << in.rdbuf();
  return decode_key_file(text.str());
}

envelope::Bytes seal_rules(std::string_view rules_text, const envelope::DocumentKey& key) {
  auto bytes = std::span(reinterpret_cast<const std::uint8_t*>(rules_text.data()), rules_text.size());
  auto chunk = static_cast<std::uint32_t>(std::max<std::size_t>(envelope::kMinChunkSize, rules_text.size()));
  if (chunk > envelope::kMaxChunkSize) throw Error("rules text too large");
  return envelope::serialize(envelope::encrypt_document(bytes, key, envelope::random_doc_id(), chunk));
}

std::string open_rules(std::span<const std::uint8_t> blob, const envelope::DocumentKey& key) {
  envelope::Bytes plain = envelope::decrypt_document(envelope::parse_encrypted(blob), key);
  return std::string(plain.begin(), plain.end());
}

}  // namespace cardstream

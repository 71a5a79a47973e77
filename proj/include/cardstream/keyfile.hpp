#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "cardstream/envelope.hpp"

namespace cardstream {

/// Key file text: "cardstream-key v1" on the first line, then base64 of the
/// 16-byte encryption key followed by the 32-byte MAC key.
std::string encode_key_file(const envelope::DocumentKey& key);
/// Throws Error on any format problem.
envelope::DocumentKey decode_key_file(std::string_view text);

/// Writes with mode 0600. Throws Error.
void write_key_file(const std::filesystem::path& path, const envelope::DocumentKey& key);
/// Throws Error when the file is readable or writable by others.
envelope::DocumentKey read_key_file(const std::filesystem::path& path);

/// Rule text sealed as a single-chunk envelope under a fresh document id.
envelope::Bytes seal_rules(std::string_view rules_text, const envelope::DocumentKey& key);
/// Throws IntegrityError.
std::string open_rules(std::span<const std::uint8_t> blob, const envelope::DocumentKey& key);

}  // namespace cardstream

#include "cardstream/tag_name.hpp"

#include <stdexcept>

namespace cardstream {

// Bytes >= 0x80 are accepted as-is so UTF-8 names pass through unchanged.
bool TagName::is_name_start(char c) noexcept {
  auto u = static_cast<unsigned char>(c);
  return (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') || u == '_' || u >= 0x80;
}

bool TagName::is_name_char(char c) noexcept {
  auto u = static_cast<unsigned char>(c);
  return is_name_start(c) || (u >= '0' && u <= '9') || u == '-' || u == '.';
}

bool TagName::is_valid(std::string_view text) noexcept {
  if (text.empty() || !is_name_start(text.front())) return false;
  for (char c : text) {
    if (!is_name_char(c)) return false;
  }
  return true;
}

TagName::TagName(std::string text) : text_(std::move(text)) {
  if (!is_valid(text_)) throw std::invalid_argument("invalid tag name '" + text_ + "'");
}

}  // namespace cardstream

#pragma once

#include <compare>
#include <string>
#include <string_view>

namespace cardstream {

/// An element name: non-empty, XML NameChar only, no namespace colon.
class TagName {
public:
  /// Throws std::invalid_argument when `text` is not a valid name.
  explicit TagName(std::string text);

  static bool is_valid(std::string_view text) noexcept;
  static bool is_name_start(char c) noexcept;
  static bool is_name_char(char c) noexcept;

  const std::string& str() const noexcept { return text_; }

  friend bool operator==(const TagName&, const TagName&) = default;
  friend auto operator<=>(const TagName&, const TagName&) = default;

private:
  std::string text_;
};

}  // namespace cardstream

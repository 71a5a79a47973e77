#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace cardstream {

/// Fixed-width set of tag ids (one bit per dictionary entry).
class TagBitmap {
public:
  TagBitmap() = default;
  explicit TagBitmap(std::size_t bits) : words_((bits + 63) / 64, 0), bits_(bits) {}

  std::size_t size() const noexcept { return bits_; }
  void set(std::size_t i) { words_[i / 64] |= std::uint64_t{1} << (i % 64); }
  bool test(std::size_t i) const noexcept { return i < bits_ && (words_[i / 64] >> (i % 64)) & 1u; }

  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }

  void unite(const TagBitmap& other) {
    for (std::size_t i = 0; i < words_.size() && i < other.words_.size(); ++i) words_[i] |= other.words_[i];
  }

  bool is_subset_of(const TagBitmap& other) const noexcept {
    for (std::size_t i = 0; i < words_.size(); ++i) {
      std::uint64_t o = i < other.words_.size() ? other.words_[i] : 0;
      if (words_[i] & ~o) return false;
    }
    return true;
  }

  std::vector<std::size_t> set_bits() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < bits_; ++i) {
      if (test(i)) out.push_back(i);
    }
    return out;
  }

  friend bool operator==(const TagBitmap&, const TagBitmap&) = default;

private:
  std::vector<std::uint64_t> words_;
  std::size_t bits_ = 0;
};

}  // namespace cardstream

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace cardstream {

/// Working-memory categories tracked inside the secure environment.
enum class MemoryCategory : std::uint8_t {
  Automata,
  Tokens,
  SignStack,
  PredicateSet,
  PendingBuffers,
  SkeletonBuffer,
  ChunkWindow,
};

inline constexpr std::size_t kMemoryCategoryCount = 7;

std::string_view to_string(MemoryCategory c) noexcept;

/// Byte costs of the modelled in-card data structures.
namespace cost {
inline constexpr std::uint64_t kAutomatonHeader = 4;
inline constexpr std::uint64_t kAutomatonState = 4;
inline constexpr std::uint64_t kPredicate = 4;
inline constexpr std::uint64_t kFrame = 4;
inline constexpr std::uint64_t kToken = 6;
inline constexpr std::uint64_t kTokenExtraRef = 2;
inline constexpr std::uint64_t kSignEntry = 4;
inline constexpr std::uint64_t kCondNode = 6;
inline constexpr std::uint64_t kCondEdge = 2;
inline constexpr std::uint64_t kQueuedEvent = 3;
}  // namespace cost

/// Charges and releases modelled bytes per category. A charge that would
/// exceed the limit throws BudgetExceeded and leaves the counters unchanged,
/// so usage never goes above the limit.
class MemoryAccountant {
public:
  static constexpr std::uint64_t kUnlimited = UINT64_MAX;

  explicit MemoryAccountant(std::uint64_t limit = kUnlimited,
                            std::optional<std::uint64_t> pending_cap = std::nullopt)
      : limit_(limit), pending_cap_(pending_cap) {}

  void charge(MemoryCategory c, std::uint64_t bytes);
  void release(MemoryCategory c, std::uint64_t bytes) noexcept;

  std::uint64_t limit() const noexcept { return limit_; }
  std::uint64_t current() const noexcept { return total_; }
  std::uint64_t peak() const noexcept { return peak_; }
  std::uint64_t current(MemoryCategory c) const noexcept { return used_[index(c)]; }
  std::uint64_t peak(MemoryCategory c) const noexcept { return peaks_[index(c)]; }

private:
  static std::size_t index(MemoryCategory c) noexcept { return static_cast<std::size_t>(c); }

  std::uint64_t limit_;
  std::optional<std::uint64_t> pending_cap_;
  std::uint64_t total_ = 0;
  std::uint64_t peak_ = 0;
  std::array<std::uint64_t, kMemoryCategoryCount> used_{};
  std::array<std::uint64_t, kMemoryCategoryCount> peaks_{};
};

}  // namespace cardstream

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace nsatp {

/// Identifier written into every output that depends on random draws.
inline constexpr std::string_view kPrngName = "mt19937_64+splitmix64/v1";

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// FNV-1a over the bytes of `text`, then folded with `salt`.
std::uint64_t stable_hash(std::string_view text, std::uint64_t salt = 0) noexcept;

/// child = master ^ stable_hash(stage) ^ example_id.
///
/// Equivalently, the stage seed `master ^ stable_hash(stage)` xor'd with the
/// example id, so per-example streams do not depend on scheduling.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage,
                          std::uint64_t example_id = 0) noexcept;

/// Seeded generator with distribution code of our own.
///
/// The std:: distributions are implementation-defined, so draws made through
/// them differ between standard libraries. Everything here is specified down
/// to the bit, which keeps outputs reproducible across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

}  // namespace nsatp

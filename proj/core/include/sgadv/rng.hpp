#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace sgadv {

/// Seeded generator with portable distributions.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The standard library distributions are implementation-defined,
/// so the conversions to uniform reals, Gaussians and bounded integers are
/// written out here to keep generated data identical across toolchains.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64";
  static constexpr std::string_view kSeeding =
      "engine seeded with the 64-bit seed directly; uniform01 = (u64 >> 11) * 2^-53; "
      "normal via Box-Muller on two uniform01 draws (cosine branch, sine cached)";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  double normal();
  /// Uniform integer in [0, n) by rejection, n > 0.
  std::uint64_t below(std::uint64_t n);
  /// Fisher-Yates permutation of [0, n).
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Stable seed derivation: FNV-1a over `base` (8 little-endian bytes) followed
/// by each tag's bytes and a 0x1f separator, finalized with mix64.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::string_view> tags);

}  // namespace sgadv

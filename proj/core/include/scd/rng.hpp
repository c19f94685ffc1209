#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace scd {

/// Deterministic 64-bit generator (splitmix64 stream) with pinned
/// floating-point and bounded-integer transforms. Everything seeded from
/// one of these reproduces bit-identically across runs on one platform;
/// no standard-library distribution objects are involved, so results do
/// not depend on libstdc++ internals either.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform();

  /// Uniform in [lo, hi], both inclusive. Rejection sampled, unbiased.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Standard normal via Box-Muller (caches the spare deviate).
  double normal();

  /// Fisher-Yates permutation of {0, ..., n-1}.
  std::vector<std::size_t> permutation(std::size_t n);

private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// FNV-1a over the parts, finalized with a splitmix64 mix. Used to derive
/// independent child seeds: derive_seed(run_seed, "train", executable_id).
std::uint64_t derive_seed(std::uint64_t base,
                          std::initializer_list<std::string_view> parts);

}  // namespace scd

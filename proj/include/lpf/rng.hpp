#pragma once

#include <array>
#include <cstdint>
#include <cstddef>

namespace lpf {

/// Derive a child seed from a parent seed and a stream id.
///
/// Two-round splitmix64 hash of the pair. Any (seed, id) path through
/// repeated derivation yields statistically independent streams, which
/// is what lets trial workers run in parallel while staying bitwise
/// reproducible.
std::uint64_t derive_seed(std::uint64_t parent_seed, std::uint64_t stream_id);

/// Seedable xorshift-family generator (xoshiro256++) with splitmix64
/// initialization. One instance = one deterministic stream; child
/// streams are derived from the creating seed, not the current state,
/// so the number of draws taken never changes downstream streams.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 bits of resolution.
  double next_unit();

  double uniform(double lo, double hi);

  /// Standard normal via the Marsaglia polar method.
  double normal();

  /// Uniform index in [0, n). n must be >= 1.
  std::size_t pick_index(std::size_t n);

  RngStream child(std::uint64_t stream_id) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::array<std::uint64_t, 4> state_;
  std::uint64_t seed_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace lpf

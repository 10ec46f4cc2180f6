#pragma once

// Counter-based random streams.
//
// Every random draw in the library comes from an RngStream: a Philox4x32-10
// block cipher (Salmon et al., SC'11) keyed by a 64-bit seed and driven by a
// 128-bit counter whose upper half is a 64-bit stream id. Two streams with
// distinct (seed, stream id) pairs never share a counter block, so replicate
// work can be handed one stream each and run in any order with bit-identical
// results.

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>

namespace prodest {

/// Philox4x32 with 10 rounds. Stateless; maps (counter, key) to 128 bits.
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  static constexpr int kRounds = 10;

  static Counter encrypt(Counter counter, Key key) noexcept;
};

/// SplitMix64 finalizer, used to derive child stream ids.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// A 64-bit UniformRandomBitGenerator over one Philox substream.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform on (0, 1); safe to take the log of.
  double uniform_open() noexcept;
  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t uniform_index(std::uint64_t bound) noexcept;

  /// Independent child stream; the same (parent, id) always yields the same child.
  RngStream substream(std::uint64_t id) const noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  /// Number of 64-bit words drawn so far.
  std::uint64_t position() const noexcept { return 2 * block_ - (has_spare_ ? 1 : 0); }

 private:
  std::uint64_t refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::uint64_t spare_ = 0;
  bool has_spare_ = false;
};

}  // namespace prodest

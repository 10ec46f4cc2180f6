#include "prodest/rng.hpp"

namespace prodest {

namespace {

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) noexcept {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(product >> 32);
  lo = static_cast<std::uint32_t>(product);
}

inline Philox4x32::Counter philox_round(const Philox4x32::Counter& c,
                                        const Philox4x32::Key& k) noexcept {
  std::uint32_t hi0, lo0, hi1, lo1;
  mulhilo(Philox4x32::kMul0, c[0], hi0, lo0);
  mulhilo(Philox4x32::kMul1, c[2], hi1, lo1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

}  // namespace

Philox4x32::Counter Philox4x32::encrypt(Counter counter, Key key) noexcept {
  counter = philox_round(counter, key);
  for (int r = 1; r < kRounds; ++r) {
    key[0] += kWeyl0;
    key[1] += kWeyl1;
    counter = philox_round(counter, key);
  }
  return counter;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
    : seed_(seed), stream_id_(stream_id) {}

std::uint64_t RngStream::refill() noexcept {
  const Philox4x32::Counter ctr{
      static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
      static_cast<std::uint32_t>(stream_id_),
      static_cast<std::uint32_t>(stream_id_ >> 32)};
  const Philox4x32::Key key{static_cast<std::uint32_t>(seed_),
                            static_cast<std::uint32_t>(seed_ >> 32)};
  const auto out = Philox4x32::encrypt(ctr, key);
  ++block_;
  spare_ = static_cast<std::uint64_t>(out[2]) |
           (static_cast<std::uint64_t>(out[3]) << 32);
  has_spare_ = true;
  return static_cast<std::uint64_t>(out[0]) |
         (static_cast<std::uint64_t>(out[1]) << 32);
}

RngStream::result_type RngStream::operator()() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  return refill();
}

double RngStream::uniform() noexcept {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double RngStream::uniform_open() noexcept {
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

__extension__ using u128 = unsigned __int128;

// Lemire's multiply-shift with rejection; exact for every bound.
std::uint64_t RngStream::uniform_index(std::uint64_t bound) noexcept {
  u128 m = static_cast<u128>((*this)()) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      m = static_cast<u128>((*this)()) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

RngStream RngStream::substream(std::uint64_t id) const noexcept {
  return RngStream(seed_, mix64(stream_id_ ^ mix64(id)));
}

}  // namespace prodest

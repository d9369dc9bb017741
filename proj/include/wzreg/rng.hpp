#pragma once

#include <array>
#include <cstdint>

namespace wzreg {

/// Philox4x32-10 block function (Salmon et al., SC'11). Maps a 128-bit
/// counter and a 64-bit key to 128 pseudo-random bits.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic random stream built on Philox4x32-10.
///
/// The 64-bit master seed is the Philox key. The 128-bit counter holds a
/// 64-bit block index (low words) and a 64-bit stream id (high words), so
/// every (seed, stream id) pair names an independent sequence of blocks.
/// Sub-streams derive their id from the parent id and a child index, which
/// makes replicate i of any loop reproducible regardless of how the loop is
/// split across workers.
class Stream {
 public:
  explicit Stream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t id() const { return id_; }

  /// Independent child stream. Same (parent, index) always gives the same child.
  Stream substream(std::uint64_t index) const;

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  /// Standard normal by Box-Muller; pairs are consumed in order.
  double normal();

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t id_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace wzreg

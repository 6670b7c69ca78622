#ifndef HELFRICH_RNG_HPP
#define HELFRICH_RNG_HPP

/// Counter-based random streams (Philox4x32-10). A stream is fully determined by
/// (master_seed, replica_id, stream_id), so replicas can run in any order.

#include <array>
#include <cstdint>

namespace helfrich {

enum StreamId : std::uint32_t {
  kStreamEta = 1,
  kStreamBrownian = 2,
  kStreamInit = 3,
  kStreamAux = 4,
};

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key);

class RandomStream {
 public:
  RandomStream(std::uint64_t master_seed, std::uint64_t replica_id, std::uint32_t stream_id);

  /// Uniform on the open interval (0,1), 53-bit resolution.
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();
  std::uint64_t next_u64();

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint64_t block_ = 0;
  std::uint32_t replica_lo_;
  std::uint32_t stream_;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 finalizer, used to derive child seeds.
std::uint64_t mix64(std::uint64_t x);

}  // namespace helfrich

#endif

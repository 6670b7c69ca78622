#include "helfrich/rng.hpp"

#include <cmath>
#include <numbers>

namespace helfrich {

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
  constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t(M0) * ctr[0];
    const std::uint64_t p1 = std::uint64_t(M1) * ctr[2];
    ctr = {std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], std::uint32_t(p1),
           std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], std::uint32_t(p0)};
    key[0] += W0;
    key[1] += W1;
  }
  return ctr;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

RandomStream::RandomStream(std::uint64_t master_seed, std::uint64_t replica_id, std::uint32_t stream_id)
    : replica_lo_(std::uint32_t(replica_id)), stream_(stream_id) {
  // High replica bits fold into the key so ids beyond 2^32 stay distinct.
  const std::uint64_t k = mix64(master_seed ^ mix64(replica_id >> 32));
  key_ = {std::uint32_t(k), std::uint32_t(k >> 32)};
}

void RandomStream::refill() {
  buf_ = philox4x32({std::uint32_t(block_), std::uint32_t(block_ >> 32), replica_lo_, stream_}, key_);
  ++block_;
  pos_ = 0;
}

std::uint64_t RandomStream::next_u64() {
  if (pos_ > 2) refill();
  const std::uint64_t v = (std::uint64_t(buf_[pos_]) << 32) | buf_[pos_ + 1];
  pos_ += 2;
  return v;
}

double RandomStream::uniform() {
  return (double(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform(), u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double th = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(th);
  has_spare_ = true;
  return r * std::cos(th);
}

}  // namespace helfrich

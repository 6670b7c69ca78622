#ifndef HELFRICH_UTIL_HPP
#define HELFRICH_UTIL_HPP

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace helfrich {

/// Runs f(i) for i in [0,n) on `workers` threads. Work items are claimed
/// dynamically; callers must write results by index to stay deterministic.
template <class F>
void parallel_for(long n, int workers, F&& f) {
  workers = std::max(1, std::min<int>(workers, static_cast<int>(std::max<long>(n, 1))));
  if (workers == 1) {
    for (long i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<long> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto body = [&] {
    for (long i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v);
/// Round-trip exact decimal formatting ("%.17g").
std::string fmt_double(double v);

inline constexpr const char* kArtifactVersion = "helfrich-rough 0.3.0";

}  // namespace helfrich

#endif

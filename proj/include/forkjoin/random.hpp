#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace forkjoin {

// Deterministic per-replication uniform stream.
//
// A stream is identified by (master seed, replication index). The engine is
// std::mt19937_64 seeded through std::seed_seq, whose output is fixed by the
// standard, and all conversions to doubles/integers are done here rather than
// through the implementation-defined <random> distributions. Same pair, same
// bits, on every platform.
//
// Simulators consume draws in a fixed order per job: inter-arrival gap, then
// the server subset (one bounded integer per task), then one service time per
// task in the order the subset was drawn.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t replication)
      : engine_(make_engine(seed, replication)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1]; safe to feed to log().
  double uniform_open_low() {
    return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
  }

  double exponential(double rate) { return -std::log(uniform_open_low()) / rate; }

  // Unbiased integer in [0, bound) by Lemire's multiply-and-reject.
  std::uint64_t below(std::uint64_t bound) {
    std::uint64_t x = engine_();
    unsigned __int128 m = static_cast<unsigned __int128>(x) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = -bound % bound;
      while (low < threshold) {
        x = engine_();
        m = static_cast<unsigned __int128>(x) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  static std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t replication) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(replication),
                      static_cast<std::uint32_t>(replication >> 32), 0x666f726bU};
    return std::mt19937_64(seq);
  }

  std::mt19937_64 engine_;
};

inline RandomStream random_stream(std::uint64_t seed, std::uint64_t replication) {
  return RandomStream(seed, replication);
}

}  // namespace forkjoin

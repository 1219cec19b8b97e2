#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ebms {

// splitmix64 step; used to derive independent, reproducible substream
// seeds from a (seed, stream, salt) triple.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                 std::uint64_t salt = 0) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s ^= stream * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL;
  std::uint64_t b = splitmix64(s);
  s ^= salt * 0xda942042e4dd58b5ULL + 0x9e3779b97f4a7c15ULL;
  std::uint64_t c = splitmix64(s);
  return a ^ (b + 0x632be59bd9b4e019ULL) ^ (c << 1);
}

// Deterministic stream: the same (seed, stream, salt) yields the same
// draw sequence on every platform.  Distribution transforms are done by
// hand rather than with std::*_distribution, whose output is not pinned
// by the standard.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t salt = 0)
      : eng_(derive_seed(seed, stream, salt)) {}

  std::uint64_t next_u64() { return eng_(); }

  // uniform on [0, 1) with 53 random bits
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  // strictly positive: a zero draw would alias "event now" with the
  // hazard's first jump when inverting step cumulative hazards
  double exponential(double rate) {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return -std::log(u) / rate;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    // rejection sampling keeps the draw exactly uniform
    std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t r = eng_();
      if (r >= threshold) return r % n;
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace ebms

#pragma once

#include <cstdint>

namespace hfel {

// Deterministic 64-bit generator (splitmix64 core). Used instead of the
// std:: distributions so that seeded runs produce identical streams on every
// platform and standard library.
class Prng {
 public:
  explicit Prng(std::uint64_t seed) : state_(seed) { next(); }

  // Independent stream derived from (seed, stream id).
  static Prng substream(std::uint64_t seed, std::uint64_t stream) {
    Prng p(seed + 0x9e3779b97f4a7c15ULL * (stream + 1));
    p.next();
    return p;
  }

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is irrelevant at simulation scale.
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

  int range(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

 private:
  std::uint64_t state_;
};

}  // namespace hfel

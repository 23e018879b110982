#ifndef PEMB_RNG_HPP_
#define PEMB_RNG_HPP_

#include <cstdint>
#include <random>
#include <vector>

namespace pemb {

// splitmix64 mixing step. Used to derive uncorrelated sub-seeds from a base
// seed plus a stream index, so every component of a run draws from its own
// stream while the whole experiment stays a pure function of one seed.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix64(base ^ mix64(stream));
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t s1,
                                    std::uint64_t s2) {
  return derive_seed(derive_seed(base, s1), s2);
}

// Deterministic random stream. Wraps mt19937_64 but performs all value
// conversion itself: the std distributions are implementation-defined, and
// artifacts must be reproducible byte-for-byte from seeds alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), unbiased via rejection.
  int uniform_int(int n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<int>(x % bound);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Fisher-Yates with our own integer draws (std::shuffle is not portable).
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Radical-inverse (van der Corput) sequence in the given base; the building
// block for the low-discrepancy style grids used by population generators.
inline double radical_inverse(std::uint64_t index, std::uint64_t base) {
  double inv_base = 1.0 / static_cast<double>(base);
  double scale = inv_base;
  double value = 0.0;
  while (index > 0) {
    value += static_cast<double>(index % base) * scale;
    index /= base;
    scale *= inv_base;
  }
  return value;
}

}  // namespace pemb

#endif  // PEMB_RNG_HPP_

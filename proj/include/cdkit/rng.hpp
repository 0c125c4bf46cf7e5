#pragma once
#include <cmath>
#include <cstdint>
#include <random>

namespace cdkit {

// splitmix64 finalizer; used to derive independent stream seeds.
inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t z = seed ^ (salt + 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic RNG. std::mt19937_64 output is fully specified by the
// standard; the distributions here are hand-rolled because the std::
// distribution objects are not bit-portable across library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // uniform in [0, 1)
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive on both ends
  int uniform_int(int lo, int hi) {
    if (hi <= lo) return lo;
    uint64_t span = uint64_t(hi - lo) + 1;
    return lo + int(eng_() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; draws two uniforms, returns one (keeps the stream simple)
  double normal(double mu, double sigma) {
    double u1 = (double(eng_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mu + sigma * r * std::cos(6.283185307179586477 * u2);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace cdkit

#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace otfuse {

// Deterministic splitmix64 generator. Everything stochastic in the library
// draws from this so runs are bit-reproducible for a fixed seed, independent
// of platform and standard-library version.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// FNV-1a, used to hash role strings into seed derivations.
inline std::uint64_t hash_role(std::string_view role) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : role) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Independent child seed for (seed, role). Used so e.g. every experiment
// contender shares the retraining batch stream while drawing its own init.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view role) {
  Rng mix(seed ^ hash_role(role));
  return mix.next_u64();
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view role, std::uint64_t index) {
  Rng mix(seed ^ hash_role(role) ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
  return mix.next_u64();
}

}  // namespace otfuse

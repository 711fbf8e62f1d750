#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fedsim {

// Deterministic RNG stream addressed by (master seed, purpose, round, device).
// Streams are derived by hashing the full path rather than by splitting a
// shared generator, so any worker can reconstruct any stream independently
// and results do not depend on scheduling order.
class RngStream {
 public:
  RngStream() : RngStream(0) {}
  explicit RngStream(std::uint64_t seed);

  static RngStream derive(std::uint64_t master_seed, std::string_view purpose,
                          std::uint64_t round, std::uint64_t device);

  // Derive a sub-stream keyed off this stream's own seed.
  RngStream child(std::string_view purpose, std::uint64_t round = 0,
                  std::uint64_t device = 0) const;

  std::uint64_t seed() const { return seed_; }

  double normal(double mean = 0.0, double stddev = 1.0);
  double uniform();  // [0, 1)
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_int(std::uint64_t n);

  // Fisher-Yates shuffle, in place.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // First m elements of a shuffled copy of 0..n-1, returned sorted ascending.
  std::vector<int> sample_without_replacement(int n, int m);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// Stable 64-bit hash of a derivation path. Exposed for tests.
std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view purpose,
                          std::uint64_t round, std::uint64_t device);

}  // namespace fedsim

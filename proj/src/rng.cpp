#include "fedsim/rng.hpp"

#include <algorithm>
#include <stdexcept>

namespace fedsim {

namespace {

// splitmix64 finalizer; good avalanche, cheap, stable across platforms.
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_string(std::uint64_t h, std::string_view s) {
  // FNV-1a over the purpose tag, folded through the mixer.
  std::uint64_t f = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    f ^= c;
    f *= 0x100000001b3ULL;
  }
  return mix64(h ^ f);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view purpose,
                          std::uint64_t round, std::uint64_t device) {
  std::uint64_t h = mix64(master_seed);
  h = hash_string(h, purpose);
  h = mix64(h ^ round);
  h = mix64(h ^ device);
  return h;
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed) {
  // Expand the 64-bit seed before handing it to the engine so nearby seeds
  // do not produce correlated early output.
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(mix64(seed)),
                    static_cast<std::uint32_t>(mix64(seed) >> 32)};
  engine_.seed(seq);
}

RngStream RngStream::derive(std::uint64_t master_seed, std::string_view purpose,
                            std::uint64_t round, std::uint64_t device) {
  return RngStream(derive_seed(master_seed, purpose, round, device));
}

RngStream RngStream::child(std::string_view purpose, std::uint64_t round,
                           std::uint64_t device) const {
  return RngStream(derive_seed(seed_, purpose, round, device));
}

double RngStream::normal(double mean, double stddev) {
  if (stddev == 0) return mean;  // degenerate draws are exact, keep them defined
  std::normal_distribution<double> dist(mean, stddev);
  return dist(engine_);
}

double RngStream::uniform() {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  return dist(engine_);
}

std::uint64_t RngStream::uniform_int(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
  std::uniform_int_distribution<std::uint64_t> dist(0, n - 1);
  return dist(engine_);
}

std::vector<int> RngStream::sample_without_replacement(int n, int m) {
  if (m > n || m < 0) throw std::invalid_argument("sample_without_replacement: bad m");
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  // Partial Fisher-Yates: only the first m slots matter.
  for (int i = 0; i < m; ++i) {
    int j = i + static_cast<int>(uniform_int(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace fedsim

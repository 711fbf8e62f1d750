#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "fedsim/rng.hpp"

using namespace fedsim;

TEST_CASE("derive_seed is stable and path-sensitive") {
  auto a = derive_seed(42, "select", 3, 7);
  CHECK(a == derive_seed(42, "select", 3, 7));
  CHECK(a != derive_seed(43, "select", 3, 7));
  CHECK(a != derive_seed(42, "gbatch", 3, 7));
  CHECK(a != derive_seed(42, "select", 4, 7));
  CHECK(a != derive_seed(42, "select", 3, 8));
  // Component positions are not interchangeable.
  CHECK(derive_seed(42, "x", 1, 2) != derive_seed(42, "x", 2, 1));
}

TEST_CASE("streams with the same seed replay the same sequence") {
  RngStream a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
  RngStream c(124);
  bool any_diff = false;
  RngStream a2(123);
  for (int i = 0; i < 10; ++i) any_diff |= (a2.normal() != c.normal());
  CHECK(any_diff);
}

TEST_CASE("child streams are independent of parent consumption") {
  RngStream parent(9);
  RngStream child_before = parent.child("tag", 1, 2);
  parent.normal();
  parent.normal();
  RngStream child_after = parent.child("tag", 1, 2);
  CHECK(child_before.normal() == child_after.normal());
}

TEST_CASE("normal draws have the right first two moments") {
  RngStream rng(2024);
  const int N = 200000;
  double sum = 0, sumsq = 0;
  for (int i = 0; i < N; ++i) {
    double x = rng.normal(1.5, 2.0);
    sum += x;
    sumsq += x * x;
  }
  double mean = sum / N;
  double var = sumsq / N - mean * mean;
  CHECK(mean == doctest::Approx(1.5).epsilon(0.02));
  CHECK(var == doctest::Approx(4.0).epsilon(0.03));
}

TEST_CASE("uniform stays in [0,1) and covers it") {
  RngStream rng(5);
  double lo = 1, hi = 0;
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("uniform_int respects its bound and hits every value") {
  RngStream rng(6);
  std::map<std::uint64_t, int> counts;
  for (int i = 0; i < 6000; ++i) ++counts[rng.uniform_int(6)];
  CHECK(counts.size() == 6);
  for (auto& [v, c] : counts) {
    CHECK(v < 6);
    CHECK(c > 700);  // roughly uniform
  }
  CHECK_THROWS(rng.uniform_int(0));
}

TEST_CASE("shuffle permutes without losing elements") {
  RngStream rng(7);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  auto orig = v;
  rng.shuffle(v);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == orig);
  CHECK(v != orig);  // 50! makes identity astronomically unlikely
}

TEST_CASE("sample_without_replacement: sorted, unique, in range") {
  RngStream rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    auto s = rng.sample_without_replacement(20, 7);
    CHECK(s.size() == 7);
    CHECK(std::is_sorted(s.begin(), s.end()));
    std::set<int> uniq(s.begin(), s.end());
    CHECK(uniq.size() == 7);
    CHECK(*s.begin() >= 0);
    CHECK(s.back() < 20);
  }
  auto all = rng.sample_without_replacement(5, 5);
  CHECK(all == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(rng.sample_without_replacement(5, 0).empty());
}

TEST_CASE("sample_without_replacement is unbiased") {
  RngStream rng(99);
  std::vector<int> hits(10, 0);
  const int T = 40000;
  for (int t = 0; t < T; ++t) {
    for (int k : rng.sample_without_replacement(10, 3)) ++hits[k];
  }
  for (int k = 0; k < 10; ++k) {
    CHECK(hits[k] / static_cast<double>(T) == doctest::Approx(0.3).epsilon(0.05));
  }
}

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "fedmia/rng.hpp"

using namespace fedmia;

TEST_CASE("rng streams are reproducible") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  Rng c(42), d(42);
  for (int i = 0; i < 100; ++i) {
    CHECK(c.normal() == d.normal());
    CHECK(c.uniform01() == d.uniform01());
  }
}

TEST_CASE("below stays in range and covers small bounds") {
  Rng rng(7);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const std::uint64_t v = rng.below(5);
    CHECK(v < 5);
    seen.insert(v);
  }
  CHECK(seen.size() == 5);
}

TEST_CASE("shuffle is a deterministic permutation") {
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  std::vector<int> w = v;
  Rng a(3), b(3);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::sort(w.begin(), w.end());
  std::vector<int> sorted(100);
  std::iota(sorted.begin(), sorted.end(), 0);
  CHECK(w == sorted);
}

TEST_CASE("normal draws have roughly standard moments") {
  Rng rng(11);
  const int n = 20000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum_sq += z * z;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("derive_seed separates domains and indices") {
  const std::uint64_t base = derive_seed(1, "alpha");
  CHECK(base == derive_seed(1, "alpha"));
  CHECK(base != derive_seed(1, "beta"));
  CHECK(base != derive_seed(2, "alpha"));
  CHECK(derive_seed(1, "alpha", {0}) != derive_seed(1, "alpha", {1}));
  CHECK(derive_seed(1, "alpha", {0, 1}) != derive_seed(1, "alpha", {1, 0}));
}

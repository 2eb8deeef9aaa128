#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "rwta/rng.hpp"

using namespace rwta;

TEST_CASE("same seed, same stream; different seed, different stream") {
  SeededRng a(42), b(42), c(43);
  bool all_eq = true, any_diff = false;
  for (int i = 0; i < 64; ++i) {
    auto va = a.next_u64(), vb = b.next_u64(), vc = c.next_u64();
    all_eq = all_eq && (va == vb);
    any_diff = any_diff || (va != vc);
  }
  CHECK(all_eq);
  CHECK(any_diff);
}

TEST_CASE("mt19937_64 reference value pins the engine") {
  // The 10000th output of a default-seeded mt19937_64 is fixed by the
  // standard; if this moves, serialized streams are no longer portable.
  std::mt19937_64 eng(std::mt19937_64::default_seed);
  eng.discard(9999);
  CHECK(eng() == 9981545732273789042ULL);
}

TEST_CASE("uniform stays in [0,1) and fills the range") {
  SeededRng rng(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 20000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("normal has roughly standard moments") {
  SeededRng rng(99);
  const int n = 50000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.02);
  CHECK(std::abs(s2 / n - 1.0) < 0.03);
}

TEST_CASE("uniform_index covers [0,n) without gaps") {
  SeededRng rng(5);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) {
    auto k = rng.uniform_index(7);
    REQUIRE(k < 7);
    counts[k]++;
  }
  for (int c : counts) CHECK(c > 700);  // mean 1000, generous slack
  CHECK(rng.uniform_index(1) == 0);
}

TEST_CASE("shuffle is a permutation and is seed-deterministic") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  SeededRng a(12), b(12);
  a.shuffle(v.begin(), v.end());
  b.shuffle(w.begin(), w.end());
  CHECK(v == w);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> ref(50);
  std::iota(ref.begin(), ref.end(), 0);
  CHECK(sorted == ref);
  CHECK(v != ref);  // astronomically unlikely to be identity
}

TEST_CASE("fork gives decorrelated, label-stable child streams") {
  SeededRng root(1000);
  auto a1 = root.fork(1), a2 = root.fork(1), b = root.fork(2);
  bool same = true, diff = false;
  for (int i = 0; i < 32; ++i) {
    auto x = a1.next_u64(), y = a2.next_u64(), z = b.next_u64();
    same = same && (x == y);
    diff = diff || (x != z);
  }
  CHECK(same);
  CHECK(diff);
}

TEST_CASE("serialize round-trips mid-stream including the normal cache") {
  SeededRng rng(31337);
  rng.normal();  // leaves a cached second deviate
  for (int i = 0; i < 5; ++i) rng.uniform();
  auto blob = rng.serialize();
  auto copy = SeededRng::deserialize(blob);
  for (int i = 0; i < 100; ++i) {
    CHECK(rng.normal() == copy.normal());
    CHECK(rng.next_u64() == copy.next_u64());
  }
}

TEST_CASE("glorot init respects the fan-based bound and the seed") {
  Shape4 shape{8, 4, 3, 3};  // fan_in 4*9=36, fan_out 8*9=72
  const double limit = std::sqrt(6.0 / (36 + 72));
  SeededRng a(2), b(2);
  auto t1 = glorot_uniform<double>(shape, a);
  auto t2 = glorot_uniform<double>(shape, b);
  CHECK(bit_equal(t1, t2));
  double hi = 0;
  for (double v : t1.data) {
    CHECK(std::abs(v) <= limit);
    hi = std::max(hi, std::abs(v));
  }
  CHECK(hi > 0.8 * limit);  // actually uses the range
}

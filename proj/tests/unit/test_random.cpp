#include <doctest.h>

#include <cmath>
#include <set>
#include <string>

#include "memeify/random.hpp"

using memeify::Rng;

TEST_CASE("same seed gives the same stream") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);
}

TEST_CASE("derived streams depend on every key") {
  CHECK(Rng::derive(1, {2, 3}).next_u64() == Rng::derive(1, {2, 3}).next_u64());
  CHECK(Rng::derive(1, {2, 3}).next_u64() != Rng::derive(1, {3, 2}).next_u64());
  CHECK(Rng::derive(1, {2}).next_u64() != Rng::derive(2, {2}).next_u64());
}

TEST_CASE("uniform stays in [0, 1) and below(n) in range") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.below(7) < 7u);
  }
}

TEST_CASE("below is roughly uniform") {
  Rng rng(11);
  int counts[5] = {};
  const int n = 50000;
  for (int i = 0; i < n; ++i) ++counts[rng.below(5)];
  for (int c : counts) CHECK(std::abs(c - n / 5) < 600);
}

TEST_CASE("normal has zero mean and unit variance") {
  Rng rng(3);
  double sum = 0, sq = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(std::abs(sq / n - 1.0) < 0.03);
}

TEST_CASE("fnv1a64 reference values") {
  // Published FNV-1a 64-bit test vectors.
  CHECK(memeify::fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(memeify::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(memeify::fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("to_hex is fixed width") {
  char buf[17];
  memeify::to_hex(0xabcULL, buf);
  CHECK(std::string(buf) == "0000000000000abc");
}

TEST_CASE("splitmix64 reference values") {
  std::uint64_t state = 0;
  CHECK(memeify::splitmix64(state) == 0xe220a8397b1dcdafULL);
  CHECK(memeify::splitmix64(state) == 0x6e789e6aa1b965f4ULL);
}

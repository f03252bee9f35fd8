#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "lpf/rng.hpp"

using lpf::RngStream;

TEST_CASE("same seed reproduces the stream") {
  RngStream a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("child streams depend on seed, not on draws taken") {
  RngStream a(42), b(42);
  (void)a.next_u64();
  (void)a.normal();
  RngStream ca = a.child(7);
  RngStream cb = b.child(7);
  for (int i = 0; i < 100; ++i) CHECK(ca.next_u64() == cb.next_u64());
}

TEST_CASE("distinct stream ids decorrelate") {
  RngStream root(1);
  RngStream a = root.child(1);
  RngStream b = root.child(2);
  int agree = 0;
  for (int i = 0; i < 64; ++i)
    if (a.next_u64() == b.next_u64()) ++agree;
  CHECK(agree == 0);
}

TEST_CASE("derive_seed differs across parents and ids") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t p = 0; p < 32; ++p)
    for (std::uint64_t s = 0; s < 32; ++s) seen.insert(lpf::derive_seed(p, s));
  CHECK(seen.size() == 32u * 32u);
}

TEST_CASE("unit draws stay in [0,1) and look uniform") {
  RngStream s(9);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = s.next_unit();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::fabs(sum / n - 0.5) < 0.005);
}

TEST_CASE("normal draws match N(0,1) moments") {
  RngStream s(1234);
  const int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = s.normal();
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::fabs(mean) < 0.02);
  CHECK(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("pick_index covers the range uniformly") {
  RngStream s(5);
  std::vector<int> counts(10, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) counts[s.pick_index(10)]++;
  for (int c : counts) {
    CHECK(c > n / 10 - 600);
    CHECK(c < n / 10 + 600);
  }
}

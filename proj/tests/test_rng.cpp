#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "srhm/rng.hpp"

using namespace srhm;

TEST_CASE("same seed gives the same stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds and different splits disagree") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
  CHECK(same == 0);

  Rng root(7);
  Rng c1 = root.split(uint64_t(1)), c2 = root.split(uint64_t(2));
  same = 0;
  for (int i = 0; i < 64; ++i) same += c1.next_u64() == c2.next_u64();
  CHECK(same == 0);
}

TEST_CASE("splitting is order independent") {
  Rng root(99);
  Rng a_then = root.split("x").split(uint64_t(3));
  // drawing from an unrelated stream first must not matter
  Rng other = root.split("y");
  (void)other.next_u64();
  Rng a_again = root.split("x").split(uint64_t(3));
  for (int i = 0; i < 16; ++i) CHECK(a_then.next_u64() == a_again.next_u64());
}

TEST_CASE("uniform_int stays in range and covers all values") {
  Rng r(5);
  std::set<uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    uint64_t x = r.uniform_int(7);
    CHECK(x < 7);
    seen.insert(x);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("uniform_int is roughly uniform (chi-square)") {
  Rng r(2024);
  const int k = 10, n = 100000;
  std::vector<int> counts(k, 0);
  for (int i = 0; i < n; ++i) counts[r.uniform_int(k)]++;
  double chi2 = 0, expect = double(n) / k;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  CHECK(chi2 < 27.9);  // chi-square_{9, 0.999}
}

TEST_CASE("next_double lies in [0,1) with sane mean") {
  Rng r(11);
  double sum = 0;
  for (int i = 0; i < 10000; ++i) {
    double x = r.next_double();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    sum += x;
  }
  CHECK(std::abs(sum / 10000 - 0.5) < 0.02);
}

TEST_CASE("normal has zero mean unit variance") {
  Rng r(13);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

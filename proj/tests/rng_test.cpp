#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "epifnp/rng.hpp"

using epifnp::Rng;

TEST_CASE("rng: same seed reproduces the exact stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.uniform() == b.uniform());
  Rng c(42), d(42);
  for (int i = 0; i < 1000; ++i) CHECK(c.normal() == d.normal());
}

TEST_CASE("rng: different seeds diverge") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 100; ++i)
    if (a.uniform() == b.uniform()) ++same;
  CHECK(same < 5);
}

TEST_CASE("rng: uniform lies in [0,1) with mean near 1/2") {
  Rng r(7);
  double s = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    s += u;
  }
  CHECK(std::abs(s / n - 0.5) < 0.01);
}

TEST_CASE("rng: normal has mean 0 and variance 1") {
  Rng r(9);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    s += x;
    s2 += x * x;
  }
  double mean = s / n;
  double var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("rng: logistic is symmetric with the right scale") {
  Rng r(11);
  const int n = 200000;
  double s = 0.0;
  int pos = 0;
  for (int i = 0; i < n; ++i) {
    double x = r.logistic();
    s += x;
    if (x > 0) ++pos;
  }
  CHECK(std::abs(s / n) < 0.03);
  CHECK(std::abs(static_cast<double>(pos) / n - 0.5) < 0.01);
}

TEST_CASE("rng: bernoulli matches its probability") {
  Rng r(13);
  const int n = 100000;
  int hits = 0;
  for (int i = 0; i < n; ++i)
    if (r.bernoulli(0.3)) ++hits;
  CHECK(std::abs(static_cast<double>(hits) / n - 0.3) < 0.01);
}

TEST_CASE("rng: uniform_int covers its range") {
  Rng r(17);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) {
    std::size_t k = r.uniform_int(5);
    REQUIRE(k < 5);
    ++counts[k];
  }
  for (int c : counts) CHECK(std::abs(c - 10000) < 600);
}

TEST_CASE("rng: shuffle produces a permutation and is deterministic") {
  std::vector<int> v(20);
  std::iota(v.begin(), v.end(), 0);
  Rng r(21);
  r.shuffle(v);
  std::vector<int> w = v;
  std::sort(w.begin(), w.end());
  for (int i = 0; i < 20; ++i) CHECK(w[i] == i);

  std::vector<int> v2(20);
  std::iota(v2.begin(), v2.end(), 0);
  Rng r2(21);
  r2.shuffle(v2);
  CHECK(v == v2);
}

TEST_CASE("rng: derived streams are deterministic but distinct") {
  Rng a = Rng::derive(5, 1);
  Rng b = Rng::derive(5, 1);
  Rng c = Rng::derive(5, 2);
  double ua = a.uniform(), ub = b.uniform(), uc = c.uniform();
  CHECK(ua == ub);
  CHECK(ua != uc);
}

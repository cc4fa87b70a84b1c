#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cten/rng.hpp"
#include "cten/tensor.hpp"

using namespace cten;

TEST_CASE("shape product equals data length") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ShapeError);
}

TEST_CASE("rank-0 tensor is a scalar") {
  Tensor s = Tensor::scalar(2.5);
  CHECK(s.rank() == 0);
  CHECK(s.size() == 1);
  CHECK(s[0] == 2.5);
}

TEST_CASE("multi-index access is row-major and bounds-checked") {
  Tensor t({2, 3}, {0, 1, 2, 3, 4, 5});
  CHECK(t.at(1, 2) == 5.0);
  CHECK(t.at(0, 1) == 1.0);
  CHECK_THROWS_AS(t.at(2, 0), ShapeError);
  CHECK_THROWS_AS(t.at(0), ShapeError);
}

TEST_CASE("finiteness detection") {
  Tensor t({2}, {1.0, 2.0});
  CHECK(t.all_finite());
  t[1] = std::nan("");
  CHECK(!t.all_finite());
  t[1] = INFINITY;
  CHECK(!t.all_finite());
}

TEST_CASE("reshape preserves data and checks size") {
  Tensor t({2, 3}, {0, 1, 2, 3, 4, 5});
  Tensor r = t.reshaped({3, 2});
  CHECK(r.at(2, 1) == 5.0);
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
}

TEST_CASE("rng streams are deterministic and tag-separated") {
  Rng a(123), b(123), c(124);
  for (int i = 0; i < 100; ++i) {
    const double va = a.next_double();
    CHECK(va == b.next_double());
    CHECK(va >= 0.0);
    CHECK(va < 1.0);
  }
  CHECK(c.next_u64() != Rng(123).next_u64());

  Rng s1 = Rng::substream(9, 1), s2 = Rng::substream(9, 2);
  CHECK(s1.next_u64() != s2.next_u64());
}

TEST_CASE("rng shuffle is a permutation and seed-stable") {
  std::vector<int> v = {0, 1, 2, 3, 4, 5, 6, 7};
  Rng r(5);
  r.shuffle(v);
  std::vector<int> w = {0, 1, 2, 3, 4, 5, 6, 7};
  Rng r2(5);
  r2.shuffle(w);
  CHECK(v == w);
  std::sort(v.begin(), v.end());
  CHECK(v == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("log_uniform stays in range") {
  Rng r(77);
  for (int i = 0; i < 1000; ++i) {
    const double v = r.log_uniform(2.0, 200.0);
    CHECK(v >= 2.0);
    CHECK(v < 200.0);
  }
}

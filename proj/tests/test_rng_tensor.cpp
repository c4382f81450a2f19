#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "mvpa/rng.hpp"
#include "mvpa/tensor.hpp"

using namespace mvpa;

TEST_CASE("rng streams are deterministic and independent") {
  Rng a(42, 0), b(42, 0), c(42, 1);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t x = a.next_u64(), y = b.next_u64(), z = c.next_u64();
    all_equal = all_equal && (x == y);
    any_diff = any_diff || (x != z);
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("rng uniform ranges") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.next_double();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
  for (int i = 0; i < 10000; ++i) {
    const std::uint64_t v = rng.next_below(13);
    REQUIRE(v < 13);
  }
}

TEST_CASE("rng next_below is roughly uniform") {
  Rng rng(123);
  std::vector<int> buckets(8, 0);
  const int draws = 80000;
  for (int i = 0; i < draws; ++i) ++buckets[rng.next_below(8)];
  for (int b : buckets) {
    CHECK(b > draws / 8 - 600);
    CHECK(b < draws / 8 + 600);
  }
}

TEST_CASE("gaussian draws have expected moments") {
  Rng rng(99);
  double sum = 0.0, sq = 0.0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const double g = rng.next_gaussian();
    sum += g;
    sq += g * g;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("tensor shape and indexing") {
  Tensor t = Tensor::zeros({2, 3});
  t.at(1, 2) = 5.0;
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.row(1)[2] == 5.0);
  Tensor u = Tensor::full({4}, 2.5);
  CHECK(u.at(3) == 2.5);
}

TEST_CASE("bitwise_equal distinguishes signed zero, accepts NaN payloads") {
  Tensor a = Tensor::zeros({2});
  Tensor b = Tensor::zeros({2});
  CHECK(bitwise_equal(a, b));
  b.at(0) = -0.0;
  CHECK_FALSE(bitwise_equal(a, b));
  a.at(0) = -0.0;
  CHECK(bitwise_equal(a, b));
  a.at(1) = std::nan("");
  b.at(1) = a.at(1);
  CHECK(bitwise_equal(a, b));
}

TEST_CASE("embedding grid row order is channel-major") {
  EmbeddingGrid g(3, 4, 2);  // C=3, T=4
  CHECK(g.cell(0, 0) == 0);
  CHECK(g.cell(0, 3) == 3);
  CHECK(g.cell(1, 0) == 4);
  CHECK(g.cell(2, 3) == 11);
  g.row_of(2, 3)[1] = 7.0;
  CHECK(g.rows.at(11, 1) == 7.0);
}

TEST_CASE("dot and max_abs_diff") {
  const double a[3] = {1, 2, 3};
  const double b[3] = {4, -5, 6};
  CHECK(dot(a, b, 3) == Catch::Approx(12.0));
  Tensor x = Tensor::full({3}, 1.0);
  Tensor y = Tensor::full({3}, 1.0);
  y.at(2) = 1.5;
  CHECK(max_abs_diff(x, y) == Catch::Approx(0.5));
}

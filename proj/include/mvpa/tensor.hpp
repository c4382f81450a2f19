#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <utility>
#include <vector>

#include "mvpa/rng.hpp"

namespace mvpa {

// Dense row-major tensor of doubles. Rank is dynamic but the library only
// uses ranks 1..4. All numerics in this project are double precision.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(count(shape), 0.0);
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<std::size_t> s, double v) {
    Tensor t(std::move(s));
    for (double& x : t.data) x = v;
    return t;
  }

  static Tensor gaussian(std::vector<std::size_t> s, double stddev, Rng& rng) {
    Tensor t(std::move(s));
    for (double& x : t.data) x = stddev * rng.next_gaussian();
    return t;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { assert(i < shape.size()); return shape[i]; }

  double& at(std::size_t i) { assert(rank() == 1 && i < shape[0]); return data[i]; }
  double at(std::size_t i) const { assert(rank() == 1 && i < shape[0]); return data[i]; }

  double& at(std::size_t i, std::size_t j) {
    assert(rank() == 2 && i < shape[0] && j < shape[1]);
    return data[i * shape[1] + j];
  }
  double at(std::size_t i, std::size_t j) const {
    assert(rank() == 2 && i < shape[0] && j < shape[1]);
    return data[i * shape[1] + j];
  }

  double& at(std::size_t i, std::size_t j, std::size_t k) {
    assert(rank() == 3 && i < shape[0] && j < shape[1] && k < shape[2]);
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    assert(rank() == 3 && i < shape[0] && j < shape[1] && k < shape[2]);
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  // Rank-2 helpers.
  double* row(std::size_t i) { assert(rank() == 2 && i < shape[0]); return data.data() + i * shape[1]; }
  const double* row(std::size_t i) const {
    assert(rank() == 2 && i < shape[0]);
    return data.data() + i * shape[1];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// Embeddings for a C x T grid of segments, one d-dim row per cell. Cell (c,t)
// lives at row c*T + t; every module in this library uses that order.
struct EmbeddingGrid {
  std::size_t C = 0, T = 0, d = 0;
  Tensor rows;  // [C*T x d]

  EmbeddingGrid() = default;
  EmbeddingGrid(std::size_t C_, std::size_t T_, std::size_t d_)
      : C(C_), T(T_), d(d_), rows(Tensor::zeros({C_ * T_, d_})) {}

  std::size_t cell(std::size_t c, std::size_t t) const {
    assert(c < C && t < T);
    return c * T + t;
  }
  double* row_of(std::size_t c, std::size_t t) { return rows.row(cell(c, t)); }
  const double* row_of(std::size_t c, std::size_t t) const { return rows.row(cell(c, t)); }
};

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  assert(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double d = std::fabs(a.data[i] - b.data[i]);
    if (d > m) m = d;
  }
  return m;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  return a.data.empty() ||
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

}  // namespace mvpa

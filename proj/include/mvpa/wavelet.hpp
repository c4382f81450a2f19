#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "mvpa/series.hpp"
#include "mvpa/tensor.hpp"

namespace mvpa {

// Daubechies-4 analysis pair (8 taps, orthonormal). The low-pass taps sum to
// sqrt(2) and satisfy sum_k h[k]*h[k+2m] = delta_m; the unit tests check both
// identities directly.
inline constexpr std::size_t kDb4Taps = 8;
inline constexpr double kDb4Lo[kDb4Taps] = {
    0.23037781330885523,  0.71484657055254153,  0.63088076792959036,
    -0.02798376941698385, -0.18703481171888114, 0.03084138183598697,
    0.03288301166698295,  -0.01059740178499728};

inline double db4_hi(std::size_t k) {
  // Quadrature mirror: g[k] = (-1)^k h[taps-1-k].
  const double h = kDb4Lo[kDb4Taps - 1 - k];
  return (k % 2 == 0) ? h : -h;
}

// Largest admissible decomposition depth for an input of n samples.
inline std::size_t dwt_max_level(std::size_t n) {
  std::size_t level = 0;
  while (n >= 2 * (kDb4Taps - 1)) {
    n /= 2;
    ++level;
  }
  return level;
}

// Multi-level db4 coefficients. Band order is fixed: the final approximation
// first, then details from the deepest level down to level 1.
struct WaveletCoeffs {
  std::size_t input_length = 0;
  std::size_t level = 0;
  std::vector<Tensor> bands;  // [approx_L, detail_L, detail_{L-1}, ..., detail_1]

  std::size_t total_coeffs() const {
    std::size_t n = 0;
    for (const auto& b : bands) n += b.numel();
    return n;
  }

  Tensor flat() const {
    Tensor out = Tensor::zeros({total_coeffs()});
    std::size_t k = 0;
    for (const auto& b : bands)
      for (double v : b.data) out.at(k++) = v;
    return out;
  }
};

namespace detail {

// One periodized analysis step: x[n] -> approx[n/2], detail[n/2].
inline void dwt_step(const std::vector<double>& x, std::vector<double>& approx,
                     std::vector<double>& det) {
  const std::size_t n = x.size();
  const std::size_t half = n / 2;
  approx.assign(half, 0.0);
  det.assign(half, 0.0);
  for (std::size_t k = 0; k < half; ++k) {
    double a = 0.0, d = 0.0;
    for (std::size_t m = 0; m < kDb4Taps; ++m) {
      const double v = x[(2 * k + m) % n];
      a += kDb4Lo[m] * v;
      d += db4_hi(m) * v;
    }
    approx[k] = a;
    det[k] = d;
  }
}

// Inverse of dwt_step (transpose of the orthogonal analysis operator).
inline void idwt_step(const std::vector<double>& approx, const std::vector<double>& det,
                      std::vector<double>& x) {
  const std::size_t half = approx.size();
  const std::size_t n = 2 * half;
  x.assign(n, 0.0);
  for (std::size_t k = 0; k < half; ++k) {
    for (std::size_t m = 0; m < kDb4Taps; ++m) {
      x[(2 * k + m) % n] += kDb4Lo[m] * approx[k] + db4_hi(m) * det[k];
    }
  }
}

}  // namespace detail

inline WaveletCoeffs dwt_db4(const Tensor& x, std::size_t level) {
  if (x.rank() != 1) throw std::invalid_argument("dwt_db4: expected a rank-1 tensor");
  const std::size_t n = x.numel();
  if (level < 1) throw std::invalid_argument("dwt_db4: level must be >= 1");
  if (level > dwt_max_level(n))
    throw std::invalid_argument("dwt_db4: level " + std::to_string(level) +
                                " exceeds admissible maximum " +
                                std::to_string(dwt_max_level(n)) + " for length " +
                                std::to_string(n));
  if (n % (std::size_t(1) << level) != 0)
    throw std::invalid_argument("dwt_db4: input length must be divisible by 2^level");

  WaveletCoeffs out;
  out.input_length = n;
  out.level = level;
  std::vector<Tensor> details;
  std::vector<double> cur(x.data);
  std::vector<double> approx, det;
  for (std::size_t l = 0; l < level; ++l) {
    detail::dwt_step(cur, approx, det);
    Tensor dband = Tensor::zeros({det.size()});
    dband.data = det;
    details.push_back(std::move(dband));
    cur = approx;
  }
  Tensor aband = Tensor::zeros({cur.size()});
  aband.data = cur;
  out.bands.push_back(std::move(aband));
  for (std::size_t l = details.size(); l-- > 0;) out.bands.push_back(std::move(details[l]));
  return out;
}

inline Tensor idwt_db4(const WaveletCoeffs& coeffs) {
  if (coeffs.bands.size() != coeffs.level + 1)
    throw std::invalid_argument("idwt_db4: malformed coefficient set");
  std::vector<double> cur(coeffs.bands[0].data);
  for (std::size_t l = 0; l < coeffs.level; ++l) {
    const Tensor& det = coeffs.bands[1 + l];
    if (det.numel() != cur.size())
      throw std::invalid_argument("idwt_db4: band size mismatch");
    std::vector<double> up;
    detail::idwt_step(cur, det.data, up);
    cur = up;
  }
  Tensor out = Tensor::zeros({cur.size()});
  out.data = cur;
  return out;
}

// y_i = gain_i * x_i / sqrt(mean(x^2) + eps). A zero vector stays zero.
inline Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps = 1e-6) {
  if (x.numel() != gain.numel())
    throw std::invalid_argument("rms_norm: gain size mismatch");
  const std::size_t n = x.numel();
  double ms = 0.0;
  for (double v : x.data) ms += v * v;
  ms /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(ms + eps);
  Tensor y = x;
  for (std::size_t i = 0; i < n; ++i) y.data[i] = gain.data[i] * x.data[i] * inv;
  return y;
}

// ---------------------------------------------------------------------------
// Segment encoder: per cell, flatten the db4 pyramid, normalize, project.

struct EncoderParams {
  Tensor proj;  // [d x n_input]
  Tensor bias;  // [d]

  static EncoderParams init(std::size_t d, std::size_t n_input, Rng& rng) {
    EncoderParams p;
    p.proj = Tensor::gaussian({d, n_input}, 0.02, rng);
    p.bias = Tensor::zeros({d});
    return p;
  }
};

// Normalized wavelet features for every cell of a grid: [C*T x n_input].
// This is the fixed (data-dependent, parameter-free) half of the encoder;
// training only differentiates through the projection applied on top.
inline Tensor encoder_features(const SegmentGrid& grid, std::size_t level) {
  const std::size_t C = grid.channels(), T = grid.segments(), S = grid.segment_samples();
  Tensor feat = Tensor::zeros({C * T, S});
  Tensor unit_gain = Tensor::full({S}, 1.0);
  Tensor seg = Tensor::zeros({S});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t s = 0; s < S; ++s) seg.at(s) = grid.cells.at(c, t, s);
      const Tensor flat = dwt_db4(seg, level).flat();
      const Tensor norm = rms_norm(flat, unit_gain);
      double* dst = feat.row(c * T + t);
      for (std::size_t s = 0; s < S; ++s) dst[s] = norm.at(s);
    }
  }
  return feat;
}

inline EmbeddingGrid encode(const SegmentGrid& grid, const EncoderParams& params,
                            std::size_t level) {
  const std::size_t S = grid.segment_samples();
  if (params.proj.rank() != 2 || params.proj.dim(1) != S)
    throw std::invalid_argument("encode: projection width must equal segment sample count");
  const std::size_t d = params.proj.dim(0);
  const std::size_t C = grid.channels(), T = grid.segments();
  const Tensor feat = encoder_features(grid, level);
  EmbeddingGrid e(C, T, d);
  for (std::size_t i = 0; i < C * T; ++i) {
    const double* f = feat.row(i);
    double* out = e.rows.row(i);
    for (std::size_t j = 0; j < d; ++j) out[j] = dot(params.proj.row(j), f, S) + params.bias.at(j);
  }
  return e;
}

}  // namespace mvpa

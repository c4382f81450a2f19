#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "mvpa/autodiff.hpp"
#include "mvpa/rng.hpp"
#include "mvpa/tensor.hpp"

namespace mvpa {

// Attention over a C x T grid of cells. Logits decompose into three additive
// components: content (query vs key embedding, limited to a local window of
// recent segments), time (query vs relative time offset, spans the whole
// causal context) and channel (query vs relative channel offset). Keys and
// values are shared across head groups (grouped-query attention).

enum class Activation { softmax, sigmoid };

struct AttentionConfig {
  std::size_t n_heads = 4;
  std::size_t n_kv_groups = 2;
  std::size_t local_window = 4;   // content attends keys with t - t' < local_window
  double dropout_rate = 0.0;      // structured dropout on whole channels / time steps
  Activation activation = Activation::softmax;
  bool per_head_scale = false;    // false: 1/sqrt(d_model); true: 1/sqrt(d_head)
  double scale_override = 0.0;    // > 0 replaces the computed scale

  double scale_for(std::size_t d_model, std::size_t d_head) const {
    if (scale_override > 0.0) return scale_override;
    return 1.0 / std::sqrt(static_cast<double>(per_head_scale ? d_head : d_model));
  }
};

inline std::size_t kv_group_of(std::size_t head, std::size_t H, std::size_t G) {
  return head / (H / G);
}

struct MvpaParams {
  std::size_t d_model = 0, d_head = 0, n_heads = 0, n_kv_groups = 0;
  std::size_t t_max = 0, c_max = 0;
  Tensor W_q;                       // [H*dh x d]
  Tensor W_ke, W_kt, W_kc, W_v;     // [G*dh x d]
  Tensor W_o;                       // [d x H*dh]
  Tensor time_codes;                // [T_max x d], row = offset t - t'
  Tensor chan_codes;                // [2*C_max-1 x d], row c_max-1 = offset 0
  Tensor u, v, w;                   // [G x dh] content/time/channel query biases

  static MvpaParams init(std::size_t d, std::size_t H, std::size_t G, std::size_t t_max,
                         std::size_t c_max, Rng& rng) {
    if (H == 0 || G == 0 || H % G != 0)
      throw std::invalid_argument("MvpaParams: n_heads must be a multiple of n_kv_groups");
    if (d % H != 0) throw std::invalid_argument("MvpaParams: d_model must divide by n_heads");
    MvpaParams p;
    p.d_model = d;
    p.n_heads = H;
    p.n_kv_groups = G;
    p.d_head = d / H;
    p.t_max = t_max;
    p.c_max = c_max;
    const std::size_t dh = p.d_head;
    p.W_q = Tensor::gaussian({H * dh, d}, 0.02, rng);
    p.W_ke = Tensor::gaussian({G * dh, d}, 0.02, rng);
    p.W_kt = Tensor::gaussian({G * dh, d}, 0.02, rng);
    p.W_kc = Tensor::gaussian({G * dh, d}, 0.02, rng);
    p.W_v = Tensor::gaussian({G * dh, d}, 0.02, rng);
    p.W_o = Tensor::gaussian({d, H * dh}, 0.02, rng);
    p.time_codes = Tensor::gaussian({t_max, d}, 0.02, rng);
    p.chan_codes = Tensor::gaussian({2 * c_max - 1, d}, 0.02, rng);
    p.u = Tensor::zeros({G, dh});
    p.v = Tensor::zeros({G, dh});
    p.w = Tensor::zeros({G, dh});
    return p;
  }
};

struct OpCounters {
  std::uint64_t content_dots = 0;
  std::uint64_t time_dots = 0;
  std::uint64_t channel_dots = 0;
};

// ---------------------------------------------------------------------------
// Masks

// Boolean attend masks for a C x T grid, rows/cols in cell order c*T + t.
struct AttendMasks {
  std::size_t T = 0, C = 0;
  std::vector<std::uint8_t> causal;   // t' <= t: every component may attend
  std::vector<std::uint8_t> content;  // causal and t - t' < L: content component only

  std::size_t n() const { return T * C; }
  bool causal_at(std::size_t q, std::size_t k) const { return causal[q * n() + k] != 0; }
  bool content_at(std::size_t q, std::size_t k) const { return content[q * n() + k] != 0; }
};

inline AttendMasks causal_window_mask(std::size_t T, std::size_t C, std::size_t L) {
  if (L < 1) throw std::invalid_argument("causal_window_mask: window must be >= 1");
  AttendMasks m;
  m.T = T;
  m.C = C;
  const std::size_t N = T * C;
  m.causal.assign(N * N, 0);
  m.content.assign(N * N, 0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t cp = 0; cp < C; ++cp)
        for (std::size_t tp = 0; tp < T; ++tp) {
          const std::size_t q = c * T + t, k = cp * T + tp;
          if (tp <= t) {
            m.causal[q * N + k] = 1;
            if (t - tp < L) m.content[q * N + k] = 1;
          }
        }
  return m;
}

// Structured dropout: whole channels and whole time steps are dropped, each
// with probability p = 1 - sqrt(1 - r), so a cell survives with probability
// (1-p)^2 = 1-r. Dropped cells are removed from attention entirely.
inline double structured_drop_prob(double rate) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("structured dropout rate must lie in [0, 1)");
  return 1.0 - std::sqrt(1.0 - rate);
}

struct DropMask {
  std::size_t T = 0, C = 0;
  std::vector<std::uint8_t> channel_dropped;  // [C]
  std::vector<std::uint8_t> time_dropped;     // [T]
  std::vector<std::uint8_t> cell_kept;        // [C*T], cell order c*T + t

  bool kept(std::size_t c, std::size_t t) const { return cell_kept[c * T + t] != 0; }
};

inline DropMask structured_dropout_mask(std::size_t T, std::size_t C, double rate,
                                        std::uint64_t seed) {
  const double p = structured_drop_prob(rate);
  DropMask m;
  m.T = T;
  m.C = C;
  m.channel_dropped.assign(C, 0);
  m.time_dropped.assign(T, 0);
  m.cell_kept.assign(C * T, 1);
  if (rate == 0.0) return m;
  Rng chan_rng = Rng::stream_of(seed, 0);
  Rng time_rng = Rng::stream_of(seed, 1);
  for (std::size_t c = 0; c < C; ++c) m.channel_dropped[c] = chan_rng.next_double() < p ? 1 : 0;
  for (std::size_t t = 0; t < T; ++t) m.time_dropped[t] = time_rng.next_double() < p ? 1 : 0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t)
      m.cell_kept[c * T + t] = (m.channel_dropped[c] || m.time_dropped[t]) ? 0 : 1;
  return m;
}

// ---------------------------------------------------------------------------
// Relative shifts

// Offset-indexed time scores to (t, t')-indexed scores. Input column i of
// raw[h][c][t][.] holds the score against time code T-1-i; output entry
// (t, t') holds the score for offset t-t', future entries zeroed.
inline Tensor shift_time(const Tensor& raw) {
  if (raw.rank() != 4 || raw.dim(2) != raw.dim(3))
    throw std::invalid_argument("shift_time: expected [H x C x T x T]");
  const std::size_t H = raw.dim(0), C = raw.dim(1), T = raw.dim(2);
  Tensor out = Tensor::zeros({H, C, T, T});
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t tp = 0; tp <= t; ++tp) {
          const std::size_t src = (T - 1) - t + tp;
          out.data[((h * C + c) * T + t) * T + tp] =
              raw.data[((h * C + c) * T + t) * T + src];
        }
  return out;
}

// Offset-indexed channel scores to (c, c')-indexed scores. Input column j of
// raw[h][t][c][.] holds the score for offset c - c' = j - (C-1); all C x C
// output entries are populated (channel attention is not causal).
inline Tensor shift_channel(const Tensor& raw) {
  if (raw.rank() != 4 || raw.dim(3) != 2 * raw.dim(2) - 1)
    throw std::invalid_argument("shift_channel: expected [H x T x C x 2C-1]");
  const std::size_t H = raw.dim(0), T = raw.dim(1), C = raw.dim(2);
  Tensor out = Tensor::zeros({H, T, C, C});
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t cp = 0; cp < C; ++cp) {
          const std::size_t src = c + C - 1 - cp;
          out.data[((h * T + t) * C + c) * C + cp] =
              raw.data[((h * T + t) * C + c) * (2 * C - 1) + src];
        }
  return out;
}

// ---------------------------------------------------------------------------
// Logits

struct AttentionLogits {
  std::size_t H = 0, T = 0, C = 0;
  // [H x N x N], N = C*T, cell order c*T + t. content is zero outside the
  // local window; time/channel are zero above the diagonal; combined holds
  // -inf where the causal mask forbids attention.
  Tensor content, time, channel, combined;
  std::vector<std::uint8_t> causal;  // [N x N]

  std::size_t n() const { return T * C; }
};

namespace detail {

// rows of E projected by W [R x d] -> [N x R]
inline Tensor project(const Tensor& rows, const Tensor& W) {
  const std::size_t N = rows.dim(0), d = rows.dim(1), R = W.dim(0);
  if (W.dim(1) != d) throw std::invalid_argument("projection width mismatch");
  Tensor out = Tensor::zeros({N, R});
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t r = 0; r < R; ++r) out.at(i, r) = dot(rows.row(i), W.row(r), d);
  return out;
}

inline void check_grid(const EmbeddingGrid& E, const MvpaParams& P) {
  if (E.d != P.d_model) throw std::invalid_argument("embedding width != d_model");
  if (E.T > P.t_max) throw std::invalid_argument("grid has more segments than t_max");
  if (E.C > P.c_max) throw std::invalid_argument("grid has more channels than c_max");
  if (E.T == 0 || E.C == 0) throw std::invalid_argument("empty grid");
}

}  // namespace detail

// Reference path: every causal pair evaluated with the literal six-term
// expansion. Cost grows as T^2 * C^2 regardless of the window; the window is
// ignored here (content is computed on the full causal support).
inline AttentionLogits naive_mvpa_logits(const EmbeddingGrid& E, const MvpaParams& P) {
  detail::check_grid(E, P);
  const std::size_t H = P.n_heads, G = P.n_kv_groups, dh = P.d_head;
  const std::size_t T = E.T, C = E.C, N = C * T;
  const double ninf = -std::numeric_limits<double>::infinity();

  AttentionLogits L;
  L.H = H;
  L.T = T;
  L.C = C;
  L.content = Tensor::zeros({H, N, N});
  L.time = Tensor::zeros({H, N, N});
  L.channel = Tensor::zeros({H, N, N});
  L.combined = Tensor::full({H, N, N}, ninf);
  L.causal.assign(N * N, 0);

  const Tensor Q = detail::project(E.rows, P.W_q);
  const Tensor Ke = detail::project(E.rows, P.W_ke);
  Tensor Kt = Tensor::zeros({T, G * dh});   // projected time codes, row = offset
  for (std::size_t off = 0; off < T; ++off)
    for (std::size_t r = 0; r < G * dh; ++r)
      Kt.at(off, r) = dot(P.time_codes.row(off), P.W_kt.row(r), P.d_model);
  Tensor Kc = Tensor::zeros({2 * C - 1, G * dh});  // projected channel codes
  for (std::size_t j = 0; j < 2 * C - 1; ++j) {
    const std::size_t row = j + (P.c_max - C);  // offset j-(C-1) centered at c_max-1
    for (std::size_t r = 0; r < G * dh; ++r)
      Kc.at(j, r) = dot(P.chan_codes.row(row), P.W_kc.row(r), P.d_model);
  }

  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t g = kv_group_of(h, H, G);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t q = c * T + t;
        const double* qh = Q.row(q) + h * dh;
        for (std::size_t cp = 0; cp < C; ++cp)
          for (std::size_t tp = 0; tp <= t; ++tp) {
            const std::size_t k = cp * T + tp;
            L.causal[q * N + k] = 1;
            const double* ke = Ke.row(k) + g * dh;
            const double* kt = Kt.row(t - tp) + g * dh;
            const double* kc = Kc.row(c + C - 1 - cp) + g * dh;
            const double cont = dot(qh, ke, dh) + dot(P.u.row(g), ke, dh);
            const double time = dot(qh, kt, dh) + dot(P.v.row(g), kt, dh);
            const double chan = dot(qh, kc, dh) + dot(P.w.row(g), kc, dh);
            L.content.at(h, q, k) = cont;
            L.time.at(h, q, k) = time;
            L.channel.at(h, q, k) = chan;
            L.combined.at(h, q, k) = cont + time + chan;
          }
      }
  }
  return L;
}

// Efficient path: time scores are computed once per (query, offset) and
// broadcast over key channels; channel scores once per (query, offset) and
// broadcast over key times; content dots are restricted to the local window.
// Counters record exactly one increment per query-key style dot product.
inline AttentionLogits efficient_mvpa_logits(const EmbeddingGrid& E, const MvpaParams& P,
                                             const AttentionConfig& cfg,
                                             OpCounters* counters = nullptr) {
  detail::check_grid(E, P);
  if (cfg.n_heads != P.n_heads || cfg.n_kv_groups != P.n_kv_groups)
    throw std::invalid_argument("config head layout disagrees with params");
  const std::size_t H = P.n_heads, G = P.n_kv_groups, dh = P.d_head;
  const std::size_t T = E.T, C = E.C, N = C * T;
  const std::size_t Lw = cfg.local_window;
  const double ninf = -std::numeric_limits<double>::infinity();

  AttentionLogits L;
  L.H = H;
  L.T = T;
  L.C = C;
  L.content = Tensor::zeros({H, N, N});
  L.time = Tensor::zeros({H, N, N});
  L.channel = Tensor::zeros({H, N, N});
  L.combined = Tensor::full({H, N, N}, ninf);
  L.causal.assign(N * N, 0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t cp = 0; cp < C; ++cp)
        for (std::size_t tp = 0; tp <= t; ++tp) L.causal[(c * T + t) * N + cp * T + tp] = 1;

  const Tensor Q = detail::project(E.rows, P.W_q);
  const Tensor Ke = detail::project(E.rows, P.W_ke);
  Tensor Kt = Tensor::zeros({T, G * dh});
  for (std::size_t off = 0; off < T; ++off)
    for (std::size_t r = 0; r < G * dh; ++r)
      Kt.at(off, r) = dot(P.time_codes.row(off), P.W_kt.row(r), P.d_model);
  Tensor Kc = Tensor::zeros({2 * C - 1, G * dh});
  for (std::size_t j = 0; j < 2 * C - 1; ++j) {
    const std::size_t row = j + (P.c_max - C);
    for (std::size_t r = 0; r < G * dh; ++r)
      Kc.at(j, r) = dot(P.chan_codes.row(row), P.W_kc.row(r), P.d_model);
  }

  std::vector<double> qbias(dh);

  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t g = kv_group_of(h, H, G);

    // Content: windowed causal dots with the content bias folded into the query.
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t q = c * T + t;
        const double* qh = Q.row(q) + h * dh;
        for (std::size_t i = 0; i < dh; ++i) qbias[i] = qh[i] + P.u.at(g, i);
        const std::size_t t_lo = (t + 1 > Lw) ? t + 1 - Lw : 0;
        for (std::size_t cp = 0; cp < C; ++cp)
          for (std::size_t tp = t_lo; tp <= t; ++tp) {
            const std::size_t k = cp * T + tp;
            L.content.at(h, q, k) = dot(qbias.data(), Ke.row(k) + g * dh, dh);
            if (counters) ++counters->content_dots;
          }
      }

    // Time: one dot per (query, offset column), then the relative shift.
    // Raw column i scores time code T-1-i, matching shift_time's convention.
    Tensor raw_t = Tensor::zeros({1, C, T, T});
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t) {
        const double* qh = Q.row(c * T + t) + h * dh;
        for (std::size_t i = 0; i < dh; ++i) qbias[i] = qh[i] + P.v.at(g, i);
        for (std::size_t i = 0; i < T; ++i) {
          raw_t.data[((c * T) + t) * T + i] =
              dot(qbias.data(), Kt.row(T - 1 - i) + g * dh, dh);
          if (counters) ++counters->time_dots;
        }
      }
    const Tensor shifted_t = shift_time(raw_t);

    // Channel: one dot per (query, offset column), then the channel shift.
    Tensor raw_c = Tensor::zeros({1, T, C, 2 * C - 1});
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c) {
        const double* qh = Q.row(c * T + t) + h * dh;
        for (std::size_t i = 0; i < dh; ++i) qbias[i] = qh[i] + P.w.at(g, i);
        for (std::size_t j = 0; j < 2 * C - 1; ++j) {
          raw_c.data[(t * C + c) * (2 * C - 1) + j] =
              dot(qbias.data(), Kc.row(j) + g * dh, dh);
          if (counters) ++counters->channel_dots;
        }
      }
    const Tensor shifted_c = shift_channel(raw_c);

    // Broadcast: time scores across key channels, channel scores across key
    // times, then assemble the combined causal logits.
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t q = c * T + t;
        for (std::size_t cp = 0; cp < C; ++cp)
          for (std::size_t tp = 0; tp <= t; ++tp) {
            const std::size_t k = cp * T + tp;
            const double tv = shifted_t.data[((c * T) + t) * T + tp];
            const double cv = shifted_c.data[(t * C + c) * C + cp];
            L.time.at(h, q, k) = tv;
            L.channel.at(h, q, k) = cv;
            L.combined.at(h, q, k) = L.content.at(h, q, k) + tv + cv;
          }
      }
  }
  return L;
}

// ---------------------------------------------------------------------------
// Forward

// Full attention for one grid: efficient logits, structured dropout, scaled
// activation, value aggregation, output projection. Queries whose every key
// is masked (dropped cells included) produce a zero row.
inline EmbeddingGrid mvpa_forward(const EmbeddingGrid& E, const MvpaParams& P,
                                  const AttentionConfig& cfg, std::uint64_t seed,
                                  OpCounters* counters = nullptr) {
  const AttentionLogits L = efficient_mvpa_logits(E, P, cfg, counters);
  const DropMask drop = structured_dropout_mask(E.T, E.C, cfg.dropout_rate, seed);
  const std::size_t H = P.n_heads, G = P.n_kv_groups, dh = P.d_head;
  const std::size_t T = E.T, C = E.C, N = C * T;
  const double scale = cfg.scale_for(P.d_model, dh);

  const Tensor V = detail::project(E.rows, P.W_v);

  Tensor heads = Tensor::zeros({N, H * dh});
  std::vector<double> weights(N);
  std::vector<std::size_t> keys(N);

  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t g = kv_group_of(h, H, G);
    for (std::size_t q = 0; q < N; ++q) {
      const std::size_t qc = q / T, qt = q % T;
      std::size_t nk = 0;
      if (drop.kept(qc, qt)) {
        for (std::size_t k = 0; k < N; ++k) {
          if (!L.causal[q * N + k]) continue;
          if (!drop.cell_kept[k]) continue;
          keys[nk++] = k;
        }
      }
      if (nk == 0) continue;  // fully masked query: zero output row
      if (cfg.activation == Activation::softmax) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < nk; ++i)
          mx = std::max(mx, L.combined.at(h, q, keys[i]));
        double z = 0.0;
        for (std::size_t i = 0; i < nk; ++i) {
          weights[i] = std::exp(scale * L.combined.at(h, q, keys[i]) - scale * mx);
          z += weights[i];
        }
        for (std::size_t i = 0; i < nk; ++i) weights[i] /= z;
      } else {
        for (std::size_t i = 0; i < nk; ++i)
          weights[i] = 1.0 / (1.0 + std::exp(-scale * L.combined.at(h, q, keys[i])));
      }
      double* out = heads.row(q) + h * dh;
      for (std::size_t i = 0; i < nk; ++i) {
        const double a = weights[i];
        const double* vr = V.row(keys[i]) + g * dh;
        for (std::size_t j = 0; j < dh; ++j) out[j] += a * vr[j];
      }
    }
  }

  EmbeddingGrid out(C, T, P.d_model);
  for (std::size_t q = 0; q < N; ++q)
    for (std::size_t j = 0; j < P.d_model; ++j)
      out.rows.at(q, j) = dot(heads.row(q), P.W_o.row(j), H * dh);
  return out;
}

// ---------------------------------------------------------------------------
// Tape builder (training path)

struct MvpaParamNodes {
  Graph::NodeId W_q, W_ke, W_kt, W_kc, W_v, W_o;
  Graph::NodeId time_codes, chan_codes;
  Graph::NodeId u, v, w;
};

// Builds the same computation as mvpa_forward on the tape. z is the [N x d]
// normalized input; the drop mask must come from structured_dropout_mask with
// the same geometry so the plain and tape paths agree exactly.
inline Graph::NodeId attention_nodes(Graph& g, Graph::NodeId z, const MvpaParamNodes& P,
                                     const AttentionConfig& cfg, std::size_t T, std::size_t C,
                                     std::size_t c_max, const DropMask& drop) {
  const std::size_t H = cfg.n_heads, G = cfg.n_kv_groups;
  const std::size_t N = C * T;
  const std::size_t d = g.val(z).dim(1);
  const std::size_t dh = g.val(P.W_q).dim(0) / H;
  const double scale = cfg.scale_for(d, dh);

  const Graph::NodeId Q = g.matmul_nt(z, P.W_q);
  const Graph::NodeId Ke = g.matmul_nt(z, P.W_ke);
  const Graph::NodeId V = g.matmul_nt(z, P.W_v);

  std::vector<std::size_t> t_rows(T);
  for (std::size_t i = 0; i < T; ++i) t_rows[i] = i;
  const Graph::NodeId TK = g.matmul_nt(g.gather_rows(P.time_codes, t_rows), P.W_kt);

  std::vector<std::size_t> c_rows(2 * C - 1);
  for (std::size_t j = 0; j < 2 * C - 1; ++j) c_rows[j] = j + (c_max - C);
  const Graph::NodeId CK = g.matmul_nt(g.gather_rows(P.chan_codes, c_rows), P.W_kc);

  // Routing tables shared by every head.
  std::vector<int> time_map(N * N, -1), chan_map(N * N, -1);
  Tensor window01 = Tensor::zeros({N, N});
  Tensor attend01 = Tensor::zeros({N, N});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t q = c * T + t;
      if (!drop.kept(c, t)) continue;
      for (std::size_t cp = 0; cp < C; ++cp)
        for (std::size_t tp = 0; tp <= t; ++tp) {
          const std::size_t k = cp * T + tp;
          time_map[q * N + k] = static_cast<int>(t - tp);
          chan_map[q * N + k] = static_cast<int>(c + C - 1 - cp);
          if (t - tp < cfg.local_window) window01.at(q, k) = 1.0;
          if (drop.cell_kept[k]) attend01.at(q, k) = 1.0;
        }
    }

  std::vector<Graph::NodeId> head_outs;
  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t gi = kv_group_of(h, H, G);
    const Graph::NodeId Qh = g.slice_cols(Q, h * dh, (h + 1) * dh);
    const Graph::NodeId Keg = g.slice_cols(Ke, gi * dh, (gi + 1) * dh);
    const Graph::NodeId Vg = g.slice_cols(V, gi * dh, (gi + 1) * dh);
    const Graph::NodeId TKg = g.slice_cols(TK, gi * dh, (gi + 1) * dh);
    const Graph::NodeId CKg = g.slice_cols(CK, gi * dh, (gi + 1) * dh);
    const Graph::NodeId ug = g.reshape(g.gather_rows(P.u, {gi}), {dh});
    const Graph::NodeId vg = g.reshape(g.gather_rows(P.v, {gi}), {dh});
    const Graph::NodeId wg = g.reshape(g.gather_rows(P.w, {gi}), {dh});

    const Graph::NodeId content = g.mul_mask(g.matmul_nt(g.add_rowvec(Qh, ug), Keg), window01);
    const Graph::NodeId time = g.gather2d(g.matmul_nt(g.add_rowvec(Qh, vg), TKg), time_map, N);
    const Graph::NodeId chan = g.gather2d(g.matmul_nt(g.add_rowvec(Qh, wg), CKg), chan_map, N);
    const Graph::NodeId logits = g.scale(g.add(g.add(content, time), chan), scale);

    Graph::NodeId weights;
    if (cfg.activation == Activation::softmax) {
      weights = g.masked_softmax_rows(logits, attend01);
    } else {
      weights = g.mul_mask(g.sigmoid(logits), attend01);
    }
    head_outs.push_back(g.matmul(weights, Vg));
  }
  return g.matmul_nt(g.concat_cols(head_outs), P.W_o);
}

}  // namespace mvpa

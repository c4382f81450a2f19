#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mvpa/autodiff.hpp"
#include "mvpa/model.hpp"
#include "mvpa/tensor.hpp"

namespace mvpa {

struct ContrastiveConfig {
  double temperature = 0.1;
  std::size_t n_negatives = 30;
  bool include_positive_in_denominator = true;
};

inline double cosine_sim(const double* a, const double* b, std::size_t n) {
  const double na = std::sqrt(dot(a, a, n));
  const double nb = std::sqrt(dot(b, b, n));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b, n) / (na * nb);
}

inline double cosine_sim(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_sim: length mismatch");
  return cosine_sim(a.data(), b.data(), a.size());
}

// Confounders for one cell: n embedding rows drawn uniformly with replacement
// from the other windows of the batch. With a single-window batch this throws
// unless the positive cell is identified, in which case it falls back to the
// sole window's other cells (never the positive).
inline std::vector<std::vector<double>> sample_negatives(const std::vector<EmbeddingGrid>& batch,
                                                         std::size_t target_index, std::size_t n,
                                                         Rng& rng,
                                                         std::ptrdiff_t positive_cell = -1) {
  if (target_index >= batch.size())
    throw std::invalid_argument("sample_negatives: target_index out of range");
  const std::size_t d = batch[target_index].d;
  std::vector<std::vector<double>> out;
  out.reserve(n);
  if (batch.size() < 2) {
    if (positive_cell < 0)
      throw std::invalid_argument(
          "sample_negatives: need at least two windows to draw cross-window confounders; "
          "pass the positive cell index to fall back to same-window sampling");
    const EmbeddingGrid& g = batch[target_index];
    const std::size_t cells = g.C * g.T;
    if (cells < 2)
      throw std::invalid_argument("sample_negatives: single-cell window has no fallback pool");
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t cell;
      do {
        cell = static_cast<std::size_t>(rng.next_below(cells));
      } while (cell == static_cast<std::size_t>(positive_cell));
      const double* r = g.rows.row(cell);
      out.emplace_back(r, r + d);
    }
    return out;
  }
  // Pool: (window, cell) pairs over every window except the target.
  std::vector<std::pair<std::size_t, std::size_t>> pool_offsets;
  std::size_t pool = 0;
  for (std::size_t w = 0; w < batch.size(); ++w) {
    if (w == target_index) continue;
    pool_offsets.push_back({w, pool});
    pool += batch[w].C * batch[w].T;
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = static_cast<std::size_t>(rng.next_below(pool));
    std::size_t w = 0, base = 0;
    for (const auto& [wi, off] : pool_offsets) {
      if (k >= off) {
        w = wi;
        base = off;
      }
    }
    const double* r = batch[w].rows.row(k - base);
    out.emplace_back(r, r + d);
  }
  return out;
}

// One cell of Eq.-style InfoNCE, log-sum-exp stabilized.
inline double contrastive_loss(const std::vector<double>& o, const std::vector<double>& e_pos,
                               const std::vector<std::vector<double>>& Z,
                               const ContrastiveConfig& cfg) {
  if (Z.empty()) throw std::invalid_argument("contrastive_loss: empty confounder set");
  if (cfg.temperature <= 0.0) throw std::invalid_argument("contrastive_loss: temperature <= 0");
  const double pos = cosine_sim(o, e_pos) / cfg.temperature;
  std::vector<double> terms;
  if (cfg.include_positive_in_denominator) terms.push_back(pos);
  for (const auto& z : Z) terms.push_back(cosine_sim(o, z) / cfg.temperature);
  double mx = terms[0];
  for (double t : terms) mx = std::max(mx, t);
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  return mx + std::log(s) - pos;
}

// Cell indices for next-step prediction on a [C x T] grid: prediction row
// (c,t) is scored against embedding row (c,t+1), t = 0..T-2.
inline void predict_pairs(std::size_t C, std::size_t T, std::vector<std::size_t>& pred_idx,
                          std::vector<std::size_t>& pos_idx) {
  pred_idx.clear();
  pos_idx.clear();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t + 1 < T; ++t) {
      pred_idx.push_back(c * T + t);
      pos_idx.push_back(c * T + t + 1);
    }
}

// Per-cell confounder rows for a whole window, packed [M x K x d]. Embeddings
// are the plain encoder outputs of the current step; they enter the loss as
// constants.
inline Tensor pack_negatives(const std::vector<EmbeddingGrid>& batch, std::size_t target_index,
                             const std::vector<std::size_t>& pos_idx, std::size_t k, Rng& rng) {
  const std::size_t M = pos_idx.size(), d = batch[target_index].d;
  Tensor sets = Tensor::zeros({M, k, d});
  for (std::size_t i = 0; i < M; ++i) {
    const auto negs = sample_negatives(batch, target_index, k, rng,
                                       batch.size() < 2
                                           ? static_cast<std::ptrdiff_t>(pos_idx[i])
                                           : static_cast<std::ptrdiff_t>(-1));
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t x = 0; x < d; ++x) sets.at(i, j, x) = negs[j][x];
  }
  return sets;
}

struct ContrastiveTape {
  Graph::NodeId loss_sum;  // summed over cells
  Graph::NodeId logits;    // [M x 1+K], column 0 = positive, already / temperature
  std::size_t n_cells = 0;
};

// Tape composition over every predicting cell of one window. outputs and
// embeddings are [N x d] nodes from the model tape; negatives is the packed
// [M x K x d] constant block.
inline ContrastiveTape contrastive_tape(Graph& g, Graph::NodeId outputs, Graph::NodeId embeddings,
                                        const Tensor& negatives, std::size_t C, std::size_t T,
                                        const ContrastiveConfig& cfg) {
  std::vector<std::size_t> pred_idx, pos_idx;
  predict_pairs(C, T, pred_idx, pos_idx);
  const std::size_t M = pred_idx.size();
  if (negatives.dim(0) != M)
    throw std::invalid_argument("contrastive_tape: negatives rows != predicting cells");
  const double inv_tau = 1.0 / cfg.temperature;

  const Graph::NodeId pred = g.gather_rows(outputs, pred_idx);
  const Graph::NodeId pos = g.gather_rows(embeddings, pos_idx);
  const Graph::NodeId pos_col =
      g.scale(g.reshape(g.rows_cosine(pred, pos), {M, 1}), inv_tau);
  const Graph::NodeId neg = g.scale(g.rows_cosine_sets(pred, negatives), inv_tau);

  ContrastiveTape out;
  out.n_cells = M;
  out.logits = g.concat_cols({pos_col, neg});
  const Graph::NodeId lse = cfg.include_positive_in_denominator
                                ? g.logsumexp_rows(out.logits)
                                : g.logsumexp_rows(neg);
  out.loss_sum = g.sum_all(g.sub(g.reshape(lse, {M, 1}), pos_col));
  return out;
}

// Fraction of rows where the positive column strictly beats every confounder.
inline double contrastive_accuracy(const Tensor& logits) {
  const std::size_t M = logits.dim(0), W = logits.dim(1);
  if (M == 0) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < M; ++i) {
    bool best = true;
    for (std::size_t j = 1; j < W; ++j)
      if (logits.at(i, j) >= logits.at(i, 0)) {
        best = false;
        break;
      }
    if (best) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(M);
}

// ---------------------------------------------------------------------------
// Three-reference prediction quality: cosine of each prediction against the
// true next embedding, the two-step embedding, and a random segment within a
// two-minute lookahead. Cells without a two-step reference are skipped.

struct ThreeReferenceReport {
  double sim_true = 0.0;
  double sim_two_step = 0.0;
  double sim_random = 0.0;
  std::size_t cells_used = 0;
  std::size_t cells_skipped = 0;
};

inline std::size_t lookahead_segments(double segment_seconds) {
  return static_cast<std::size_t>(std::llround(120.0 / segment_seconds));
}

inline ThreeReferenceReport three_reference_eval(const ModelParams& params,
                                                 const ModelConfig& cfg, const SegmentGrid& grid,
                                                 std::uint64_t seed) {
  const ModelOutput mo = model_forward(params, cfg, grid);
  const std::size_t C = mo.outputs.C, T = mo.outputs.T, d = mo.outputs.d;
  const std::size_t la = lookahead_segments(cfg.segment_seconds);
  Rng rng(seed, 0x3EEF);
  ThreeReferenceReport rep;
  double s1 = 0.0, s2 = 0.0, sr = 0.0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t + 1 < T; ++t) {
      if (t + 2 >= T) {
        ++rep.cells_skipped;
        continue;
      }
      const double* o = mo.outputs.row_of(c, t);
      s1 += cosine_sim(o, mo.embeddings.row_of(c, t + 1), d);
      s2 += cosine_sim(o, mo.embeddings.row_of(c, t + 2), d);
      const std::size_t hi = std::min(T - 1, t + la);
      const std::size_t tr = t + 1 + static_cast<std::size_t>(rng.next_below(hi - t));
      sr += cosine_sim(o, mo.embeddings.row_of(c, tr), d);
      ++rep.cells_used;
    }
  if (rep.cells_used > 0) {
    rep.sim_true = s1 / static_cast<double>(rep.cells_used);
    rep.sim_two_step = s2 / static_cast<double>(rep.cells_used);
    rep.sim_random = sr / static_cast<double>(rep.cells_used);
  }
  return rep;
}

}  // namespace mvpa

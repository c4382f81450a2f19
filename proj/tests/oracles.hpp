#pragma once

// Independent reference computations for the test suite. Everything here is
// written straight from the definitions with its own loop structure so that a
// library bug cannot hide in a shared helper.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "mvpa/mvpa.hpp"

namespace oracle {

using mvpa::Tensor;

// y = W x, explicit loops
inline std::vector<double> matvec(const Tensor& W, const double* x) {
  const std::size_t R = W.dim(0), D = W.dim(1);
  std::vector<double> y(R, 0.0);
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < D; ++j) y[i] += W.at(i, j) * x[j];
  return y;
}

struct LogitParts {
  double content = 0.0, time = 0.0, channel = 0.0;
};

// The three additive logit components for head h, query (c,t), key (cp,tp),
// computed term by term from the printed formulas.
inline LogitParts logit_parts(const mvpa::EmbeddingGrid& E, const mvpa::MvpaParams& P,
                              std::size_t h, std::size_t c, std::size_t t, std::size_t cp,
                              std::size_t tp) {
  const std::size_t dh = P.d_head;
  const std::size_t g = mvpa::kv_group_of(h, P.n_heads, P.n_kv_groups);
  const double* xq = E.row_of(c, t);
  const double* xk = E.row_of(cp, tp);

  const std::vector<double> q_all = matvec(P.W_q, xq);
  const std::vector<double> ke_all = matvec(P.W_ke, xk);

  const std::size_t dt = t - tp;
  const std::vector<double> kt_all = matvec(P.W_kt, P.time_codes.row(dt));
  const std::size_t off_row = (c + P.c_max - 1) - cp;  // offset c-cp, shifted to row index
  const std::vector<double> kc_all = matvec(P.W_kc, P.chan_codes.row(off_row));

  LogitParts out;
  for (std::size_t i = 0; i < dh; ++i) {
    const double qi = q_all[h * dh + i];
    out.content += (qi + P.u.at(g, i)) * ke_all[g * dh + i];
    out.time += (qi + P.v.at(g, i)) * kt_all[g * dh + i];
    out.channel += (qi + P.w.at(g, i)) * kc_all[g * dh + i];
  }
  return out;
}

// Dense forward pass from the definitions: combined logits on the causal
// support (content only inside the local window), kept-cell masking, scaled
// activation, value aggregation, head concat, output projection.
inline Tensor attention_forward(const mvpa::EmbeddingGrid& E, const mvpa::MvpaParams& P,
                                const mvpa::AttentionConfig& cfg, const mvpa::DropMask& drop) {
  const std::size_t H = P.n_heads, dh = P.d_head, d = E.d;
  const std::size_t C = E.C, T = E.T, N = C * T;
  const double scale = cfg.scale_for(d, dh);
  Tensor heads = Tensor::zeros({N, H * dh});
  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t g = mvpa::kv_group_of(h, P.n_heads, P.n_kv_groups);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t) {
        if (!drop.kept(c, t)) continue;  // dropped queries attend nothing
        std::vector<double> logits;
        std::vector<std::size_t> keys;
        for (std::size_t cp = 0; cp < C; ++cp)
          for (std::size_t tp = 0; tp <= t; ++tp) {
            if (!drop.kept(cp, tp)) continue;
            const LogitParts lp = logit_parts(E, P, h, c, t, cp, tp);
            const bool in_window = t - tp < cfg.local_window;
            logits.push_back(scale * ((in_window ? lp.content : 0.0) + lp.time + lp.channel));
            keys.push_back(cp * T + tp);
          }
        if (keys.empty()) continue;
        std::vector<double> w(logits.size());
        if (cfg.activation == mvpa::Activation::softmax) {
          double mx = logits[0];
          for (double v : logits) mx = std::max(mx, v);
          double z = 0.0;
          for (std::size_t i = 0; i < logits.size(); ++i) z += std::exp(logits[i] - mx);
          for (std::size_t i = 0; i < logits.size(); ++i) w[i] = std::exp(logits[i] - mx) / z;
        } else {
          for (std::size_t i = 0; i < logits.size(); ++i) w[i] = 1.0 / (1.0 + std::exp(-logits[i]));
        }
        for (std::size_t i = 0; i < keys.size(); ++i) {
          const std::vector<double> v_all = matvec(P.W_v, E.rows.row(keys[i]));
          for (std::size_t j = 0; j < dh; ++j)
            heads.at(c * T + t, h * dh + j) += w[i] * v_all[g * dh + j];
        }
      }
  }
  Tensor out = Tensor::zeros({N, d});
  for (std::size_t i = 0; i < N; ++i) {
    const std::vector<double> o = matvec(P.W_o, heads.row(i));
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = o[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Wavelet: one analysis step as an explicit circular-correlation matrix.

inline Tensor dwt_analysis_matrix(std::size_t n) {
  Tensor W = Tensor::zeros({n, n});  // first n/2 rows approx, last n/2 detail
  for (std::size_t k = 0; k < n / 2; ++k)
    for (std::size_t m = 0; m < 8; ++m) {
      W.at(k, (2 * k + m) % n) += mvpa::kDb4Lo[m];
      W.at(n / 2 + k, (2 * k + m) % n) += mvpa::db4_hi(m);
    }
  return W;
}

// ---------------------------------------------------------------------------
// Central finite differences

inline std::vector<double> fd_grad(const std::function<double(const std::vector<double>&)>& f,
                                   std::vector<double> x, double step) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + step;
    const double fp = f(x);
    x[i] = keep - step;
    const double fm = f(x);
    x[i] = keep;
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

inline double fd_directional(const std::function<double(const std::vector<double>&)>& f,
                             const std::vector<double>& x, const std::vector<double>& dir,
                             double step) {
  std::vector<double> xp = x, xm = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] += step * dir[i];
    xm[i] -= step * dir[i];
  }
  return (f(xp) - f(xm)) / (2.0 * step);
}

// ---------------------------------------------------------------------------
// Kappa via an explicit contingency table (binary labels).

inline double kappa_contingency(const std::vector<std::uint8_t>& a,
                                const std::vector<std::uint8_t>& b) {
  double n00 = 0, n01 = 0, n10 = 0, n11 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0 && b[i] == 0) ++n00;
    if (a[i] == 0 && b[i] == 1) ++n01;
    if (a[i] == 1 && b[i] == 0) ++n10;
    if (a[i] == 1 && b[i] == 1) ++n11;
  }
  const double n = n00 + n01 + n10 + n11;
  const double po = (n00 + n11) / n;
  const double pe = ((n00 + n01) / n) * ((n00 + n10) / n) + ((n10 + n11) / n) * ((n01 + n11) / n);
  if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

// Detector brute force: every 10-second window independently.
inline std::vector<bool> threshold_fires(const std::vector<std::uint8_t>& labels) {
  std::vector<bool> fire(labels.size(), false);
  for (std::size_t s = 0; s < labels.size(); ++s) {
    int pos = 0;
    for (std::size_t i = (s >= 9 ? s - 9 : 0); i <= s; ++i) pos += labels[i];
    fire[s] = pos >= 3;
  }
  return fire;
}

}  // namespace oracle

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvpa/model.hpp"
#include "mvpa/objectives.hpp"
#include "mvpa/series.hpp"

namespace mvpa {

// ---------------------------------------------------------------------------
// Optimizer: Adam with decoupled weight decay. No schedule; the rate is fixed.

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.1;
  double clip_norm = 0.0;  // 0 disables the global-norm clip
};

struct AdamState {
  std::size_t step = 0;
  std::vector<Tensor> m, v;

  void init(const std::vector<NamedTensor>& params) {
    step = 0;
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.push_back(Tensor::zeros(p.tensor->shape));
      v.push_back(Tensor::zeros(p.tensor->shape));
    }
  }
};

inline void adamw_step(const std::vector<NamedTensor>& params, std::vector<Tensor>& grads,
                       AdamState& st, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != st.m.size())
    throw std::invalid_argument("adamw_step: parameter/gradient/state count mismatch");
  if (cfg.clip_norm > 0.0) {
    double sq = 0.0;
    for (const Tensor& g : grads)
      for (double x : g.data) sq += x * x;
    const double norm = std::sqrt(sq);
    if (norm > cfg.clip_norm) {
      const double s = cfg.clip_norm / norm;
      for (Tensor& g : grads)
        for (double& x : g.data) x *= s;
    }
  }
  st.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i].tensor;
    const Tensor& g = grads[i];
    if (!p.same_shape(g)) throw std::invalid_argument("adamw_step: shape mismatch at " + params[i].name);
    for (std::size_t j = 0; j < p.data.size(); ++j) {
      const double gj = g.data[j];
      st.m[i].data[j] = cfg.beta1 * st.m[i].data[j] + (1.0 - cfg.beta1) * gj;
      st.v[i].data[j] = cfg.beta2 * st.v[i].data[j] + (1.0 - cfg.beta2) * gj * gj;
      const double mh = st.m[i].data[j] / bc1;
      const double vh = st.v[i].data[j] / bc2;
      p.data[j] -= cfg.lr * (mh / (std::sqrt(vh) + cfg.eps) + cfg.weight_decay * p.data[j]);
    }
  }
}

inline std::vector<Tensor> collect_grads(const Graph& g,
                                         const std::vector<std::pair<std::string, Graph::NodeId>>& nodes) {
  std::vector<Tensor> out;
  out.reserve(nodes.size());
  for (const auto& [name, id] : nodes) out.push_back(g.grad(id));
  return out;
}

struct TraceRow {
  std::size_t step = 0;
  double loss = 0.0;      // mean per predicting cell (pretrain/finetune) or per element (forecast)
  double accuracy = 0.0;  // task-specific: confounder ranking, classification, or 0
};

// ---------------------------------------------------------------------------
// Pre-training: predict the next segment's embedding against confounders.

struct PretrainConfig {
  std::size_t steps = 500;
  std::size_t batch_windows = 4;  // windows forming each step's confounder pool
  ContrastiveConfig contrastive;
  AdamConfig adam;
  std::uint64_t seed = 0;
};

inline EmbeddingGrid embed_features(const Tensor& features, const EncoderParams& enc,
                                    std::size_t C, std::size_t T) {
  const std::size_t d = enc.proj.dim(0), n = enc.proj.dim(1);
  EmbeddingGrid out(C, T, d);
  for (std::size_t i = 0; i < C * T; ++i)
    for (std::size_t j = 0; j < d; ++j)
      out.rows.at(i, j) = dot(features.row(i), enc.proj.row(j), n) + enc.bias.at(j);
  return out;
}

struct PretrainResult {
  std::vector<TraceRow> trace;
};

inline PretrainResult pretrain(ModelParams& params, const ModelConfig& cfg,
                               const std::vector<SegmentGrid>& windows,
                               const PretrainConfig& tcfg) {
  if (windows.size() < 2)
    throw std::invalid_argument("pretrain: need at least 2 windows for cross-window confounders, got " +
                                std::to_string(windows.size()));
  const std::size_t W = windows.size();
  const std::size_t C = windows[0].channels(), T = windows[0].segments();
  if (T < 2) throw std::invalid_argument("pretrain: windows need at least 2 segments");
  for (const auto& w : windows)
    if (w.channels() != C || w.segments() != T || w.segment_samples() != cfg.segment_samples)
      throw std::invalid_argument("pretrain: all windows must share the profile geometry");

  std::vector<Tensor> features;
  features.reserve(W);
  for (const auto& w : windows) features.push_back(encoder_features(w, cfg.dwt_level));

  std::vector<std::size_t> pred_idx, pos_idx;
  predict_pairs(C, T, pred_idx, pos_idx);

  const std::size_t B = std::min(std::max<std::size_t>(tcfg.batch_windows, 2), W);
  std::vector<NamedTensor> named = collect_params(params);
  AdamState st;
  st.init(named);

  PretrainResult res;
  res.trace.reserve(tcfg.steps);
  for (std::size_t step = 0; step < tcfg.steps; ++step) {
    const std::size_t target = step % W;
    // Confounder pool: the target plus the next B-1 windows, cyclically.
    std::vector<EmbeddingGrid> batch;
    batch.reserve(B);
    for (std::size_t b = 0; b < B; ++b)
      batch.push_back(embed_features(features[(target + b) % W], params.enc, C, T));
    Rng neg_rng(derive_seed(tcfg.seed, step, 3));
    const Tensor negs = pack_negatives(batch, 0, pos_idx, tcfg.contrastive.n_negatives, neg_rng);

    Graph g;
    const ModelNodes nodes = lift_params(g, params, true);
    const TapeForward tf = model_nodes_forward(g, nodes, features[target], cfg, C, T,
                                               derive_seed(tcfg.seed, step, 4), true);
    const ContrastiveTape ct = contrastive_tape(g, tf.outputs, tf.embeddings, negs, C, T,
                                                tcfg.contrastive);
    g.backward(ct.loss_sum);
    std::vector<Tensor> grads = collect_grads(g, node_names(nodes));
    adamw_step(named, grads, st, tcfg.adam);

    TraceRow row;
    row.step = step;
    row.loss = g.val(ct.loss_sum).at(0) / static_cast<double>(ct.n_cells);
    row.accuracy = contrastive_accuracy(g.val(ct.logits));
    res.trace.push_back(row);
  }
  return res;
}

// ---------------------------------------------------------------------------
// LoRA fine-tuning: base frozen, adapters on q/v plus a linear head trained
// with cross entropy on the softmax outputs.

struct FinetuneConfig {
  std::size_t steps = 200;
  LoraConfig lora;
  AdamConfig adam{1e-3, 0.9, 0.999, 1e-8, 0.0, 0.0};
  std::uint64_t seed = 0;
  std::size_t n_classes = 2;
};

// Lift with adapter-modified q/v: W_eff = W + (alpha/rank) B A.
inline ModelNodes lift_params_with_adapters(Graph& g, const ModelParams& p,
                                            const std::vector<LayerAdapters>& ads,
                                            std::vector<std::pair<std::string, Graph::NodeId>>& trainable) {
  ModelNodes n = lift_params(g, p, false);
  for (std::size_t l = 0; l < n.layers.size(); ++l) {
    const std::string base = "adapters." + std::to_string(l) + ".";
    const Graph::NodeId qA = g.leaf(ads[l].q.A, true), qB = g.leaf(ads[l].q.B, true);
    const Graph::NodeId vA = g.leaf(ads[l].v.A, true), vB = g.leaf(ads[l].v.B, true);
    trainable.push_back({base + "q.A", qA});
    trainable.push_back({base + "q.B", qB});
    trainable.push_back({base + "v.A", vA});
    trainable.push_back({base + "v.B", vB});
    const double sq = ads[l].q.alpha / static_cast<double>(ads[l].q.rank());
    const double sv = ads[l].v.alpha / static_cast<double>(ads[l].v.rank());
    n.layers[l].attn.W_q = g.add(n.layers[l].attn.W_q, g.scale(g.matmul(qB, qA), sq));
    n.layers[l].attn.W_v = g.add(n.layers[l].attn.W_v, g.scale(g.matmul(vB, vA), sv));
  }
  return n;
}

// Mean over channels of the last segment's output rows -> class logits.
inline Graph::NodeId classify_logits_node(Graph& g, Graph::NodeId outputs, std::size_t C,
                                          std::size_t T, Graph::NodeId head_W,
                                          Graph::NodeId head_b) {
  std::vector<std::size_t> last;
  for (std::size_t c = 0; c < C; ++c) last.push_back(c * T + T - 1);
  const Graph::NodeId rows = g.gather_rows(outputs, last);
  Tensor avg = Tensor::full({1, C}, 1.0 / static_cast<double>(C));
  const Graph::NodeId pooled = g.matmul(g.constant(avg), rows);
  return g.add_rowvec(g.matmul_nt(pooled, head_W), head_b);
}

struct FinetuneResult {
  std::vector<TraceRow> trace;
};

inline FinetuneResult finetune(const ModelParams& base, const ModelConfig& cfg,
                               std::vector<LayerAdapters>& adapters, ClassifyHead& head,
                               const std::vector<SegmentGrid>& windows,
                               const std::vector<std::size_t>& labels,
                               const FinetuneConfig& tcfg) {
  if (windows.empty()) throw std::invalid_argument("finetune: no training windows");
  if (windows.size() != labels.size())
    throw std::invalid_argument("finetune: windows/labels length mismatch");
  for (std::size_t lab : labels)
    if (lab >= tcfg.n_classes) throw std::invalid_argument("finetune: label out of range");

  std::vector<Tensor> features;
  features.reserve(windows.size());
  for (const auto& w : windows) features.push_back(encoder_features(w, cfg.dwt_level));
  const std::size_t C = windows[0].channels(), T = windows[0].segments();

  // Adapter and head tensors in a fixed order for the optimizer.
  std::vector<NamedTensor> named = collect_adapters(adapters);
  named.push_back({"head.W", &head.W});
  named.push_back({"head.b", &head.b});
  AdamState st;
  st.init(named);

  FinetuneResult res;
  res.trace.reserve(tcfg.steps);
  for (std::size_t step = 0; step < tcfg.steps; ++step) {
    Graph g;
    std::vector<std::pair<std::string, Graph::NodeId>> tnodes;
    const ModelNodes nodes = lift_params_with_adapters(g, base, adapters, tnodes);
    const Graph::NodeId hW = g.leaf(head.W, true);
    const Graph::NodeId hb = g.leaf(head.b, true);
    tnodes.push_back({"head.W", hW});
    tnodes.push_back({"head.b", hb});

    Graph::NodeId total = -1;
    std::size_t correct = 0;
    for (std::size_t w = 0; w < windows.size(); ++w) {
      const TapeForward tf = model_nodes_forward(g, nodes, features[w], cfg, C, T,
                                                 derive_seed(tcfg.seed, step * windows.size() + w, 5),
                                                 true);
      const Graph::NodeId logits = classify_logits_node(g, tf.outputs, C, T, hW, hb);
      const Graph::NodeId loss_w = g.ce_softmax_rows(logits, {labels[w]});
      total = (total < 0) ? loss_w : g.add(total, loss_w);
      const Tensor& lv = g.val(logits);
      std::size_t arg = 0;
      for (std::size_t k = 1; k < lv.dim(1); ++k)
        if (lv.at(0, k) > lv.at(0, arg)) arg = k;
      if (arg == labels[w]) ++correct;
    }
    const Graph::NodeId loss = g.scale(total, 1.0 / static_cast<double>(windows.size()));
    g.backward(loss);
    std::vector<Tensor> grads = collect_grads(g, tnodes);
    adamw_step(named, grads, st, tcfg.adam);

    TraceRow row;
    row.step = step;
    row.loss = g.val(loss).at(0);
    row.accuracy = static_cast<double>(correct) / static_cast<double>(windows.size());
    res.trace.push_back(row);
  }
  return res;
}

// Materialized effective weights for plain inference with adapters.
inline ModelParams apply_adapters(const ModelParams& base, const std::vector<LayerAdapters>& ads) {
  if (ads.size() != base.layers.size())
    throw std::invalid_argument("apply_adapters: layer count mismatch");
  ModelParams out = base;
  for (std::size_t l = 0; l < ads.size(); ++l) {
    out.layers[l].attn.W_q = lora_effective_weight(base.layers[l].attn.W_q, ads[l].q);
    out.layers[l].attn.W_v = lora_effective_weight(base.layers[l].attn.W_v, ads[l].v);
  }
  return out;
}

inline std::size_t classify_window(const ModelParams& params, const ModelConfig& cfg,
                                   const SegmentGrid& grid, const ClassifyHead& head) {
  const ModelOutput mo = model_forward(params, cfg, grid);
  const Tensor logits = classify_logits(mo.outputs, head);
  std::size_t arg = 0;
  for (std::size_t k = 1; k < logits.dim(0); ++k)
    if (logits.at(k) > logits.at(arg)) arg = k;
  return arg;
}

// ---------------------------------------------------------------------------
// Forecast training: model plus a shared linear readout of the last segment,
// trained on mean-squared error against the next `horizon` raw samples.

struct ForecastConfig {
  std::size_t lookback = 96;
  std::size_t horizon = 96;
  std::size_t steps = 300;
  AdamConfig adam{1e-3, 0.9, 0.999, 1e-8, 0.0, 0.0};
  std::uint64_t seed = 0;
};

struct ForecastSample {
  SegmentGrid window;
  Tensor target;  // [C x horizon]
};

inline SegmentGrid slice_grid(const MultiChannelSeries& s, std::size_t start, std::size_t T,
                              std::size_t S) {
  const std::size_t C = s.channels();
  SegmentGrid g;
  g.cells = Tensor::zeros({C, T, S});
  g.segment_seconds = static_cast<double>(S) / s.sample_rate_hz;
  g.sample_rate_hz = s.sample_rate_hz;
  g.start_sample = start;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t i = 0; i < S; ++i) g.cells.at(c, t, i) = s.samples.at(c, start + t * S + i);
  return g;
}

inline std::vector<ForecastSample> make_forecast_samples(const MultiChannelSeries& s,
                                                         const ForecastConfig& fc,
                                                         std::size_t segment_samples,
                                                         std::size_t stride,
                                                         std::size_t max_samples) {
  if (fc.lookback % segment_samples != 0)
    throw std::invalid_argument("make_forecast_samples: lookback must be a whole number of segments");
  const std::size_t T = fc.lookback / segment_samples;
  const std::size_t C = s.channels(), N = s.length();
  std::vector<ForecastSample> out;
  for (std::size_t start = 0; start + fc.lookback + fc.horizon <= N; start += stride) {
    ForecastSample fs;
    fs.window = slice_grid(s, start, T, segment_samples);
    fs.target = Tensor::zeros({C, fc.horizon});
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < fc.horizon; ++k)
        fs.target.at(c, k) = s.samples.at(c, start + fc.lookback + k);
    out.push_back(std::move(fs));
    if (out.size() >= max_samples) break;
  }
  return out;
}

// Repeat-last-sample baseline over a sample set.
inline double lastvalue_mse(const std::vector<ForecastSample>& samples) {
  double se = 0.0;
  std::size_t n = 0;
  for (const auto& fs : samples) {
    const std::size_t C = fs.target.dim(0), Hn = fs.target.dim(1);
    const std::size_t T = fs.window.segments(), S = fs.window.segment_samples();
    for (std::size_t c = 0; c < C; ++c) {
      const double last = fs.window.cells.at(c, T - 1, S - 1);
      for (std::size_t k = 0; k < Hn; ++k) {
        const double e = fs.target.at(c, k) - last;
        se += e * e;
        ++n;
      }
    }
  }
  return n ? se / static_cast<double>(n) : 0.0;
}

inline Graph::NodeId forecast_node(Graph& g, Graph::NodeId outputs, std::size_t C, std::size_t T,
                                   Graph::NodeId head_W, Graph::NodeId head_b) {
  std::vector<std::size_t> last;
  for (std::size_t c = 0; c < C; ++c) last.push_back(c * T + T - 1);
  return g.add_rowvec(g.matmul_nt(g.gather_rows(outputs, last), head_W), head_b);
}

struct ForecastTrainResult {
  std::vector<TraceRow> trace;
};

inline ForecastTrainResult train_forecaster(ModelParams& params, ForecastHead& head,
                                            const ModelConfig& cfg,
                                            const std::vector<ForecastSample>& train,
                                            const ForecastConfig& fc,
                                            std::size_t batch_size = 8) {
  if (train.empty()) throw std::invalid_argument("train_forecaster: no samples");
  const std::size_t C = train[0].window.channels(), T = train[0].window.segments();
  std::vector<Tensor> features;
  features.reserve(train.size());
  for (const auto& fs : train) features.push_back(encoder_features(fs.window, cfg.dwt_level));

  std::vector<NamedTensor> named = collect_params(params);
  named.push_back({"forecast.W", &head.W});
  named.push_back({"forecast.b", &head.b});
  AdamState st;
  st.init(named);

  ForecastTrainResult res;
  res.trace.reserve(fc.steps);
  Rng pick(fc.seed, 0xF0CA);
  for (std::size_t step = 0; step < fc.steps; ++step) {
    Graph g;
    ModelNodes nodes = lift_params(g, params, true);
    const Graph::NodeId hW = g.leaf(head.W, true);
    const Graph::NodeId hb = g.leaf(head.b, true);
    auto tnodes = node_names(nodes);
    tnodes.push_back({"forecast.W", hW});
    tnodes.push_back({"forecast.b", hb});

    Graph::NodeId total = -1;
    const std::size_t B = std::min(batch_size, train.size());
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t w = static_cast<std::size_t>(pick.next_below(train.size()));
      const TapeForward tf = model_nodes_forward(g, nodes, features[w], cfg, C, T,
                                                 derive_seed(fc.seed, step, 6 + b), false);
      const Graph::NodeId pred = forecast_node(g, tf.outputs, C, T, hW, hb);
      const Graph::NodeId loss_b = g.mse_const(pred, train[w].target);
      total = (total < 0) ? loss_b : g.add(total, loss_b);
    }
    const Graph::NodeId loss = g.scale(total, 1.0 / static_cast<double>(B));
    g.backward(loss);
    std::vector<Tensor> grads = collect_grads(g, tnodes);
    adamw_step(named, grads, st, fc.adam);

    TraceRow row;
    row.step = step;
    row.loss = g.val(loss).at(0);
    res.trace.push_back(row);
  }
  return res;
}

inline Tensor forecast_window(const ModelParams& params, const ForecastHead& head,
                              const ModelConfig& cfg, const SegmentGrid& window) {
  const ModelOutput mo = model_forward(params, cfg, window);
  return forecast_values(mo.outputs, head);
}

inline double forecast_mse(const ModelParams& params, const ForecastHead& head,
                           const ModelConfig& cfg, const std::vector<ForecastSample>& samples) {
  double se = 0.0;
  std::size_t n = 0;
  for (const auto& fs : samples) {
    const Tensor pred = forecast_window(params, head, cfg, fs.window);
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
      const double e = pred.data[i] - fs.target.data[i];
      se += e * e;
      ++n;
    }
  }
  return n ? se / static_cast<double>(n) : 0.0;
}

}  // namespace mvpa

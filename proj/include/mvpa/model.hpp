#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mvpa/attention.hpp"
#include "mvpa/autodiff.hpp"
#include "mvpa/wavelet.hpp"

namespace mvpa {

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t n_kv_groups = 2;
  std::size_t d_model = 32;
  std::size_t d_inner = 72;
  std::size_t local_window = 4;
  double dropout_rate = 0.0;
  std::size_t segment_samples = 64;
  std::size_t dwt_level = 3;
  std::size_t t_max = 64;
  std::size_t c_max = 16;
  Activation activation = Activation::softmax;
  bool per_head_scale = false;
  bool gated_mlp = false;  // default combines the two MLP branches additively
  double rms_eps = 1e-6;
  double segment_seconds = 1.0;
  double sample_rate_hz = 64.0;

  // Desk-scale profile used by the test suite and the CLI default.
  static ModelConfig toy() { return ModelConfig{}; }

  // Full-scale layout; allocate only when you mean to.
  static ModelConfig small() {
    ModelConfig c;
    c.n_layers = 12;
    c.n_heads = 12;
    c.n_kv_groups = 4;
    c.d_model = 768;
    c.d_inner = 1728;
    c.local_window = 10;
    c.dropout_rate = 0.1;
    c.segment_samples = 2560;
    c.dwt_level = 8;
    c.t_max = 100;
    c.c_max = 64;
    c.segment_seconds = 5.0;
    c.sample_rate_hz = 512.0;
    return c;
  }

  AttentionConfig attention(bool training) const {
    AttentionConfig a;
    a.n_heads = n_heads;
    a.n_kv_groups = n_kv_groups;
    a.local_window = local_window;
    a.dropout_rate = training ? dropout_rate : 0.0;
    a.activation = activation;
    a.per_head_scale = per_head_scale;
    return a;
  }
};

struct MlpParams {
  Tensor W_u, W_g;  // [inner x d]
  Tensor W_s;       // [d x inner]

  static MlpParams init(std::size_t d, std::size_t inner, Rng& rng) {
    MlpParams p;
    p.W_u = Tensor::gaussian({inner, d}, 0.02, rng);
    p.W_g = Tensor::gaussian({inner, d}, 0.02, rng);
    p.W_s = Tensor::gaussian({d, inner}, 0.02, rng);
    return p;
  }
};

struct LayerParams {
  Tensor norm_gain;  // [d]
  MvpaParams attn;
  MlpParams mlp;
};

struct ModelParams {
  EncoderParams enc;
  std::vector<LayerParams> layers;

  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed) {
    Rng rng(seed, 0xC0DE);
    ModelParams p;
    p.enc = EncoderParams::init(cfg.d_model, cfg.segment_samples, rng);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      LayerParams lp;
      lp.norm_gain = Tensor::full({cfg.d_model}, 1.0);
      lp.attn = MvpaParams::init(cfg.d_model, cfg.n_heads, cfg.n_kv_groups, cfg.t_max,
                                 cfg.c_max, rng);
      lp.mlp = MlpParams::init(cfg.d_model, cfg.d_inner, rng);
      p.layers.push_back(std::move(lp));
    }
    return p;
  }
};

// Per-run seed derivation: one stable sub-seed per (layer, purpose) pair.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t layer, std::uint64_t purpose) {
  return mix64(seed ^ mix64(0xD1B54A32D192ED03ull + layer * 2654435761ull + purpose));
}

// ---------------------------------------------------------------------------
// Plain (inference) forward

inline Tensor rmsnorm_rows_plain(const Tensor& x, const Tensor& gain, double eps) {
  const std::size_t R = x.dim(0), C = x.dim(1);
  Tensor out = Tensor::zeros({R, C});
  for (std::size_t i = 0; i < R; ++i) {
    double ms = 0.0;
    for (std::size_t j = 0; j < C; ++j) ms += x.at(i, j) * x.at(i, j);
    const double inv = 1.0 / std::sqrt(ms / static_cast<double>(C) + eps);
    for (std::size_t j = 0; j < C; ++j) out.at(i, j) = gain.at(j) * x.at(i, j) * inv;
  }
  return out;
}

inline Tensor mlp_plain(const Tensor& z, const MlpParams& p, bool gated) {
  const std::size_t N = z.dim(0), d = z.dim(1), inner = p.W_u.dim(0);
  Tensor out = Tensor::zeros({N, d});
  std::vector<double> mix(inner);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t r = 0; r < inner; ++r) {
      const double uu = dot(z.row(i), p.W_u.row(r), d);
      const double gg = dot(z.row(i), p.W_g.row(r), d);
      const double sg = gg / (1.0 + std::exp(-gg));
      mix[r] = gated ? uu * sg : uu + sg;
    }
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = dot(mix.data(), p.W_s.row(j), inner);
  }
  return out;
}

struct ModelOutput {
  EmbeddingGrid embeddings;  // encoder output
  EmbeddingGrid outputs;     // decoder-stack output; cell (c,t) predicts (c,t+1)
};

// Inference path: no dropout of any kind. A training=true call applies the
// configured structured dropout with per-layer seeds (used by equivalence
// tests against the tape path).
inline ModelOutput model_forward(const ModelParams& params, const ModelConfig& cfg,
                                 const SegmentGrid& grid, std::uint64_t seed = 0,
                                 bool training = false) {
  ModelOutput out;
  out.embeddings = encode(grid, params.enc, cfg.dwt_level);
  const std::size_t C = out.embeddings.C, T = out.embeddings.T;
  const AttentionConfig acfg = cfg.attention(training);
  EmbeddingGrid cur = out.embeddings;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const LayerParams& lp = params.layers[l];
    EmbeddingGrid z(C, T, cfg.d_model);
    z.rows = rmsnorm_rows_plain(cur.rows, lp.norm_gain, cfg.rms_eps);
    const EmbeddingGrid attn = mvpa_forward(z, lp.attn, acfg, derive_seed(seed, l, 0));
    const Tensor mlp = mlp_plain(z.rows, lp.mlp, cfg.gated_mlp);
    for (std::size_t i = 0; i < C * T; ++i)
      for (std::size_t j = 0; j < cfg.d_model; ++j)
        cur.rows.at(i, j) += attn.rows.at(i, j) + mlp.at(i, j);
  }
  out.outputs = std::move(cur);
  return out;
}

// ---------------------------------------------------------------------------
// LoRA adapters

struct LoraConfig {
  std::size_t rank = 8;
  double alpha = 16.0;
};

struct LoraAdapter {
  Tensor A;  // [rank x d_in]
  Tensor B;  // [d_out x rank], zero at init so the adapter starts as a no-op
  double alpha = 16.0;

  static LoraAdapter init(std::size_t d_out, std::size_t d_in, const LoraConfig& cfg, Rng& rng) {
    LoraAdapter a;
    a.A = Tensor::gaussian({cfg.rank, d_in}, 0.02, rng);
    a.B = Tensor::zeros({d_out, cfg.rank});
    a.alpha = cfg.alpha;
    return a;
  }

  std::size_t rank() const { return A.dim(0); }
};

// W + (alpha/rank) * B * A
inline Tensor lora_effective_weight(const Tensor& W, const LoraAdapter& ad) {
  if (ad.B.dim(0) != W.dim(0) || ad.A.dim(1) != W.dim(1))
    throw std::invalid_argument("lora_effective_weight: adapter shape mismatch");
  const std::size_t R = W.dim(0), C = W.dim(1), r = ad.rank();
  const double s = ad.alpha / static_cast<double>(r);
  Tensor out = W;
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t k = 0; k < r; ++k) {
      const double b = ad.B.at(i, k);
      if (b == 0.0) continue;
      for (std::size_t j = 0; j < C; ++j) out.at(i, j) += s * b * ad.A.at(k, j);
    }
  return out;
}

// Adapters for the q and v projections of every layer.
struct LayerAdapters {
  LoraAdapter q, v;
};

inline std::vector<LayerAdapters> init_adapters(const ModelParams& params, const LoraConfig& cfg,
                                                std::uint64_t seed) {
  Rng rng(seed, 0x10A);
  std::vector<LayerAdapters> out;
  for (const LayerParams& lp : params.layers) {
    LayerAdapters la{
        LoraAdapter::init(lp.attn.W_q.dim(0), lp.attn.W_q.dim(1), cfg, rng),
        LoraAdapter::init(lp.attn.W_v.dim(0), lp.attn.W_v.dim(1), cfg, rng)};
    out.push_back(std::move(la));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Heads

struct ClassifyHead {
  Tensor W;  // [n_classes x d]
  Tensor b;  // [n_classes]

  static ClassifyHead init(std::size_t n_classes, std::size_t d, Rng& rng) {
    ClassifyHead h;
    h.W = Tensor::gaussian({n_classes, d}, 0.02, rng);
    h.b = Tensor::zeros({n_classes});
    return h;
  }
};

// Channel-averaged output of the last segment, projected to class logits.
inline Tensor classify_logits(const EmbeddingGrid& outputs, const ClassifyHead& head) {
  const std::size_t C = outputs.C, T = outputs.T, d = outputs.d;
  std::vector<double> pooled(d, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const double* r = outputs.row_of(c, T - 1);
    for (std::size_t j = 0; j < d; ++j) pooled[j] += r[j];
  }
  for (double& vv : pooled) vv /= static_cast<double>(C);
  const std::size_t K = head.W.dim(0);
  Tensor logits = Tensor::zeros({K});
  for (std::size_t k = 0; k < K; ++k)
    logits.at(k) = dot(pooled.data(), head.W.row(k), d) + head.b.at(k);
  return logits;
}

struct ForecastHead {
  Tensor W;  // [horizon x d], shared across channels
  Tensor b;  // [horizon]

  static ForecastHead init(std::size_t horizon, std::size_t d, Rng& rng) {
    ForecastHead h;
    h.W = Tensor::gaussian({horizon, d}, 0.02, rng);
    h.b = Tensor::zeros({horizon});
    return h;
  }
};

// Per channel, the last-segment output row projected to `horizon` future
// samples: [C x horizon].
inline Tensor forecast_values(const EmbeddingGrid& outputs, const ForecastHead& head) {
  const std::size_t C = outputs.C, T = outputs.T, d = outputs.d;
  const std::size_t horizon = head.W.dim(0);
  Tensor out = Tensor::zeros({C, horizon});
  for (std::size_t c = 0; c < C; ++c) {
    const double* r = outputs.row_of(c, T - 1);
    for (std::size_t k = 0; k < horizon; ++k) out.at(c, k) = dot(r, head.W.row(k), d) + head.b.at(k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameter enumeration / census

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

inline std::vector<NamedTensor> collect_params(ModelParams& p) {
  std::vector<NamedTensor> out;
  out.push_back({"enc.proj", &p.enc.proj});
  out.push_back({"enc.bias", &p.enc.bias});
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string base = "layers." + std::to_string(l) + ".";
    LayerParams& lp = p.layers[l];
    out.push_back({base + "norm_gain", &lp.norm_gain});
    out.push_back({base + "attn.W_q", &lp.attn.W_q});
    out.push_back({base + "attn.W_ke", &lp.attn.W_ke});
    out.push_back({base + "attn.W_kt", &lp.attn.W_kt});
    out.push_back({base + "attn.W_kc", &lp.attn.W_kc});
    out.push_back({base + "attn.W_v", &lp.attn.W_v});
    out.push_back({base + "attn.W_o", &lp.attn.W_o});
    out.push_back({base + "attn.time_codes", &lp.attn.time_codes});
    out.push_back({base + "attn.chan_codes", &lp.attn.chan_codes});
    out.push_back({base + "attn.u", &lp.attn.u});
    out.push_back({base + "attn.v", &lp.attn.v});
    out.push_back({base + "attn.w", &lp.attn.w});
    out.push_back({base + "mlp.W_u", &lp.mlp.W_u});
    out.push_back({base + "mlp.W_g", &lp.mlp.W_g});
    out.push_back({base + "mlp.W_s", &lp.mlp.W_s});
  }
  return out;
}

inline std::vector<NamedTensor> collect_adapters(std::vector<LayerAdapters>& ads) {
  std::vector<NamedTensor> out;
  for (std::size_t l = 0; l < ads.size(); ++l) {
    const std::string base = "adapters." + std::to_string(l) + ".";
    out.push_back({base + "q.A", &ads[l].q.A});
    out.push_back({base + "q.B", &ads[l].q.B});
    out.push_back({base + "v.A", &ads[l].v.A});
    out.push_back({base + "v.B", &ads[l].v.B});
  }
  return out;
}

inline std::size_t param_count(const std::vector<NamedTensor>& named) {
  std::size_t n = 0;
  for (const auto& nt : named) n += nt.tensor->numel();
  return n;
}

// Census by formula, no allocation. Matches collect_params + init shapes.
inline std::size_t census_total(const ModelConfig& cfg) {
  const std::size_t d = cfg.d_model, H = cfg.n_heads, G = cfg.n_kv_groups;
  const std::size_t dh = d / H;
  const std::size_t enc = d * cfg.segment_samples + d;
  const std::size_t attn = (H * dh) * d + 4 * (G * dh) * d + d * (H * dh) +
                           cfg.t_max * d + (2 * cfg.c_max - 1) * d + 3 * G * dh;
  const std::size_t mlp = 2 * cfg.d_inner * d + d * cfg.d_inner;
  return enc + cfg.n_layers * (d + attn + mlp);
}

inline std::size_t census_adapters(const ModelConfig& cfg, const LoraConfig& lora) {
  const std::size_t d = cfg.d_model, H = cfg.n_heads, G = cfg.n_kv_groups;
  const std::size_t dh = d / H;
  const std::size_t q = lora.rank * d + (H * dh) * lora.rank;
  const std::size_t v = lora.rank * d + (G * dh) * lora.rank;
  return cfg.n_layers * (q + v);
}

// ---------------------------------------------------------------------------
// Checkpoints: a text manifest (name, shape, dtype, byte offset) followed by
// one raw little-endian blob. Byte-stable across platforms.

namespace detail {

inline void write_le64(std::ofstream& f, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  f.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_le64(std::ifstream& f) {
  unsigned char b[8];
  f.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t double_bits(double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  return v;
}

inline double bits_double(std::uint64_t v) {
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& named) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << "mvpa-checkpoint v1\n";
  std::uint64_t offset = 0;
  for (const auto& nt : named) {
    f << "tensor " << nt.name << ' ' << nt.tensor->rank();
    for (std::size_t dmn : nt.tensor->shape) f << ' ' << dmn;
    f << " f64 " << offset << '\n';
    offset += nt.tensor->numel() * 8;
  }
  f << "blob " << offset << '\n';
  for (const auto& nt : named)
    for (double v : nt.tensor->data) detail::write_le64(f, detail::double_bits(v));
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != "mvpa-checkpoint v1")
    throw std::runtime_error(path + ": not a checkpoint file");
  struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::uint64_t offset;
  };
  std::vector<Entry> entries;
  std::uint64_t blob_size = 0;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string kind;
    ss >> kind;
    if (kind == "blob") {
      ss >> blob_size;
      break;
    }
    if (kind != "tensor") throw std::runtime_error(path + ": malformed manifest line: " + line);
    Entry e;
    std::size_t rank = 0;
    ss >> e.name >> rank;
    e.shape.resize(rank);
    for (std::size_t i = 0; i < rank; ++i) ss >> e.shape[i];
    std::string dtype;
    ss >> dtype >> e.offset;
    if (dtype != "f64") throw std::runtime_error(path + ": unsupported dtype " + dtype);
    entries.push_back(std::move(e));
  }
  const std::streampos blob_start = f.tellg();
  std::map<std::string, Tensor> out;
  for (const auto& e : entries) {
    f.seekg(blob_start + static_cast<std::streamoff>(e.offset));
    Tensor t = Tensor::zeros(e.shape);
    for (double& v : t.data) v = detail::bits_double(detail::read_le64(f));
    if (!f) throw std::runtime_error(path + ": truncated blob reading " + e.name);
    out.emplace(e.name, std::move(t));
  }
  return out;
}

inline void apply_checkpoint(const std::map<std::string, Tensor>& ckpt,
                             const std::vector<NamedTensor>& named) {
  for (const auto& nt : named) {
    auto it = ckpt.find(nt.name);
    if (it == ckpt.end()) throw std::runtime_error("checkpoint missing tensor " + nt.name);
    if (it->second.shape != nt.tensor->shape)
      throw std::runtime_error("checkpoint shape mismatch for " + nt.name);
    *nt.tensor = it->second;
  }
}

// ---------------------------------------------------------------------------
// Tape forward (training path)

struct LayerNodes {
  Graph::NodeId norm_gain;
  MvpaParamNodes attn;
  Graph::NodeId W_u, W_g, W_s;
};

struct ModelNodes {
  Graph::NodeId enc_proj, enc_bias;
  std::vector<LayerNodes> layers;
};

// Lifts every parameter tensor onto the tape. trainable=false freezes the
// whole model (used under LoRA fine-tuning).
inline ModelNodes lift_params(Graph& g, const ModelParams& p, bool trainable) {
  ModelNodes n;
  n.enc_proj = g.leaf(p.enc.proj, trainable);
  n.enc_bias = g.leaf(p.enc.bias, trainable);
  for (const LayerParams& lp : p.layers) {
    LayerNodes ln;
    ln.norm_gain = g.leaf(lp.norm_gain, trainable);
    ln.attn.W_q = g.leaf(lp.attn.W_q, trainable);
    ln.attn.W_ke = g.leaf(lp.attn.W_ke, trainable);
    ln.attn.W_kt = g.leaf(lp.attn.W_kt, trainable);
    ln.attn.W_kc = g.leaf(lp.attn.W_kc, trainable);
    ln.attn.W_v = g.leaf(lp.attn.W_v, trainable);
    ln.attn.W_o = g.leaf(lp.attn.W_o, trainable);
    ln.attn.time_codes = g.leaf(lp.attn.time_codes, trainable);
    ln.attn.chan_codes = g.leaf(lp.attn.chan_codes, trainable);
    ln.attn.u = g.leaf(lp.attn.u, trainable);
    ln.attn.v = g.leaf(lp.attn.v, trainable);
    ln.attn.w = g.leaf(lp.attn.w, trainable);
    ln.W_u = g.leaf(lp.mlp.W_u, trainable);
    ln.W_g = g.leaf(lp.mlp.W_g, trainable);
    ln.W_s = g.leaf(lp.mlp.W_s, trainable);
    n.layers.push_back(ln);
  }
  return n;
}

// Node ids in collect_params order, for reading gradients back by name.
inline std::vector<std::pair<std::string, Graph::NodeId>> node_names(const ModelNodes& n) {
  std::vector<std::pair<std::string, Graph::NodeId>> out;
  out.push_back({"enc.proj", n.enc_proj});
  out.push_back({"enc.bias", n.enc_bias});
  for (std::size_t l = 0; l < n.layers.size(); ++l) {
    const std::string base = "layers." + std::to_string(l) + ".";
    const LayerNodes& ln = n.layers[l];
    out.push_back({base + "norm_gain", ln.norm_gain});
    out.push_back({base + "attn.W_q", ln.attn.W_q});
    out.push_back({base + "attn.W_ke", ln.attn.W_ke});
    out.push_back({base + "attn.W_kt", ln.attn.W_kt});
    out.push_back({base + "attn.W_kc", ln.attn.W_kc});
    out.push_back({base + "attn.W_v", ln.attn.W_v});
    out.push_back({base + "attn.W_o", ln.attn.W_o});
    out.push_back({base + "attn.time_codes", ln.attn.time_codes});
    out.push_back({base + "attn.chan_codes", ln.attn.chan_codes});
    out.push_back({base + "attn.u", ln.attn.u});
    out.push_back({base + "attn.v", ln.attn.v});
    out.push_back({base + "attn.w", ln.attn.w});
    out.push_back({base + "mlp.W_u", ln.W_u});
    out.push_back({base + "mlp.W_g", ln.W_g});
    out.push_back({base + "mlp.W_s", ln.W_s});
  }
  return out;
}

struct TapeForward {
  Graph::NodeId embeddings;  // [N x d] encoder output
  Graph::NodeId outputs;     // [N x d] decoder-stack output
};

// features: rms-normalized wavelet coefficients for every cell, [N x n_input]
// (see encoder_features). training=true applies structured dropout inside
// attention and elementwise dropout on the attention branch.
inline TapeForward model_nodes_forward(Graph& g, const ModelNodes& nodes,
                                       const Tensor& features, const ModelConfig& cfg,
                                       std::size_t C, std::size_t T, std::uint64_t seed,
                                       bool training) {
  const std::size_t N = C * T;
  const AttentionConfig acfg = cfg.attention(training);

  TapeForward tf;
  const Graph::NodeId feat = g.constant(features);
  tf.embeddings = g.add_rowvec(g.matmul_nt(feat, nodes.enc_proj), nodes.enc_bias);

  Graph::NodeId cur = tf.embeddings;
  for (std::size_t l = 0; l < nodes.layers.size(); ++l) {
    const LayerNodes& ln = nodes.layers[l];
    const Graph::NodeId z = g.rmsnorm_rows(cur, ln.norm_gain, cfg.rms_eps);
    const DropMask drop =
        structured_dropout_mask(T, C, acfg.dropout_rate, derive_seed(seed, l, 0));
    Graph::NodeId attn = attention_nodes(g, z, ln.attn, acfg, T, C, cfg.c_max, drop);
    if (training && cfg.dropout_rate > 0.0) {
      // Inverted elementwise dropout on the attention branch.
      Rng rng(derive_seed(seed, l, 1));
      Tensor mask = Tensor::zeros({N, cfg.d_model});
      const double keep = 1.0 - cfg.dropout_rate;
      for (double& mv : mask.data) mv = rng.next_double() < keep ? 1.0 / keep : 0.0;
      attn = g.mul_mask(attn, mask);
    }
    // Parallel residual: attention and MLP both read the same normalized input.
    const Graph::NodeId uu = g.matmul_nt(z, ln.W_u);
    const Graph::NodeId gg = g.silu(g.matmul_nt(z, ln.W_g));
    const Graph::NodeId mixed = cfg.gated_mlp ? g.mul(uu, gg) : g.add(uu, gg);
    const Graph::NodeId mlp = g.matmul_nt(mixed, ln.W_s);
    cur = g.add(cur, g.add(attn, mlp));
  }
  tf.outputs = cur;
  return tf;
}

}  // namespace mvpa

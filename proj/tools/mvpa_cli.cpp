// mvpa: batch driver for data generation, verification, training, evaluation,
// and benchmarking. Every run writes a manifest echoing the fully resolved
// configuration in config-file syntax, so `--config <manifest>` reproduces it.
// Exit codes: 0 ok, 1 check/operation failure, 2 usage or missing input.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mvpa/mvpa.hpp"

namespace fs = std::filesystem;
using namespace mvpa;
using mvpa::detail::fmt_double;

namespace {

// ---------------------------------------------------------------------------
// Config resolution. Precedence: flags > config file > profile defaults.
// The manifest is itself a valid config file.

std::map<std::string, std::string> read_config(const std::string& path) {
  std::map<std::string, std::string> kv;
  if (path.empty()) return kv;
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
      line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    const std::size_t eq = line.find('=', start);
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key=value");
    std::string key = line.substr(start, eq - start);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    std::size_t vs = line.find_first_not_of(" \t", eq + 1);
    kv[key] = vs == std::string::npos ? "" : line.substr(vs);
  }
  return kv;
}

// Tracks resolved values in insertion order for the manifest.
struct Resolver {
  std::map<std::string, std::string> file;
  std::vector<std::pair<std::string, std::string>> resolved;

  void record(const std::string& key, const std::string& val) {
    for (auto& [k, v] : resolved)
      if (k == key) {
        v = val;
        return;
      }
    resolved.emplace_back(key, val);
  }

  template <typename T>
  T get(const CLI::Option* opt, T flag_val, const std::string& key, T def_val) {
    T v = def_val;
    const auto it = file.find(key);
    if (it != file.end()) {
      std::istringstream ss(it->second);
      if (!(ss >> v)) throw std::runtime_error("config key " + key + ": bad value " + it->second);
    }
    if (opt != nullptr && opt->count() > 0) v = flag_val;
    std::ostringstream out;
    out.precision(17);
    out << v;
    record(key, out.str());
    return v;
  }

  std::string get_str(const CLI::Option* opt, const std::string& flag_val, const std::string& key,
                      const std::string& def_val) {
    std::string v = def_val;
    const auto it = file.find(key);
    if (it != file.end()) v = it->second;
    if (opt != nullptr && opt->count() > 0) v = flag_val;
    record(key, v);
    return v;
  }
};

struct Common {
  std::uint64_t seed = 0;
  std::string out = "run";
  std::string config;
  std::string profile = "toy";
  CLI::Option *seed_opt = nullptr, *profile_opt = nullptr;
};

void add_common(CLI::App* app, Common& c) {
  c.seed_opt = app->add_option("--seed", c.seed, "master seed");
  app->add_option("--out", c.out, "output directory")->capture_default_str();
  app->add_option("--config", c.config, "key=value config file (a manifest works)");
  c.profile_opt = app->add_option("--profile", c.profile, "model profile")
                      ->check(CLI::IsMember({"toy", "small"}))
                      ->capture_default_str();
}

ModelConfig resolve_model(const Common& c, Resolver& r) {
  const std::string prof = r.get_str(c.profile_opt, c.profile, "profile", "toy");
  ModelConfig m = prof == "small" ? ModelConfig::small() : ModelConfig::toy();
  m.n_layers = r.get<std::size_t>(nullptr, 0, "n_layers", m.n_layers);
  m.n_heads = r.get<std::size_t>(nullptr, 0, "n_heads", m.n_heads);
  m.n_kv_groups = r.get<std::size_t>(nullptr, 0, "n_kv_groups", m.n_kv_groups);
  m.d_model = r.get<std::size_t>(nullptr, 0, "d_model", m.d_model);
  m.d_inner = r.get<std::size_t>(nullptr, 0, "d_inner", m.d_inner);
  m.local_window = r.get<std::size_t>(nullptr, 0, "local_window", m.local_window);
  m.dropout_rate = r.get<double>(nullptr, 0, "dropout_rate", m.dropout_rate);
  m.segment_samples = r.get<std::size_t>(nullptr, 0, "segment_samples", m.segment_samples);
  m.dwt_level = r.get<std::size_t>(nullptr, 0, "dwt_level", m.dwt_level);
  m.t_max = r.get<std::size_t>(nullptr, 0, "t_max", m.t_max);
  m.c_max = r.get<std::size_t>(nullptr, 0, "c_max", m.c_max);
  m.segment_seconds = r.get<double>(nullptr, 0, "segment_seconds", m.segment_seconds);
  m.sample_rate_hz = r.get<double>(nullptr, 0, "sample_rate_hz", m.sample_rate_hz);
  m.rms_eps = r.get<double>(nullptr, 0, "rms_eps", m.rms_eps);
  const std::string act = r.get_str(
      nullptr, "", "activation", m.activation == Activation::softmax ? "softmax" : "sigmoid");
  if (act == "softmax")
    m.activation = Activation::softmax;
  else if (act == "sigmoid")
    m.activation = Activation::sigmoid;
  else
    throw std::runtime_error("config key activation: expected softmax or sigmoid, got " + act);
  m.per_head_scale = r.get<int>(nullptr, 0, "per_head_scale", m.per_head_scale ? 1 : 0) != 0;
  m.gated_mlp = r.get<int>(nullptr, 0, "gated_mlp", m.gated_mlp ? 1 : 0) != 0;
  return m;
}

void write_manifest(const std::string& dir, const std::string& command, const Resolver& r) {
  std::ofstream f(fs::path(dir) / "manifest.txt");
  f << "# fully resolved configuration; pass back via --config to reproduce\n";
  f << "command=" << command << "\n";
  for (const auto& [k, v] : r.resolved) f << k << "=" << v << "\n";
  if (!f) throw std::runtime_error("write failed: manifest.txt in " + dir);
}

void require_file(const std::string& path, const char* what) {
  if (path.empty() || !fs::exists(path)) {
    std::ostringstream msg;
    msg << "missing " << what << (path.empty() ? "" : ": " + path);
    throw CLI::ValidationError(msg.str());
  }
}

std::string csv_path(const Common& c, const char* name) {
  fs::create_directories(c.out);
  return (fs::path(c.out) / name).string();
}

EventList seconds_to_events(const std::vector<std::uint8_t>& labels) {
  EventList out;
  out.recording_hours = static_cast<double>(labels.size()) / 3600.0;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (!labels[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < labels.size() && labels[j]) ++j;
    out.events.push_back({static_cast<double>(i), static_cast<double>(j)});
    i = j;
  }
  return out;
}

std::vector<std::size_t> label_windows(const std::vector<SegmentGrid>& windows,
                                       const std::vector<std::uint8_t>& seconds,
                                       double window_seconds) {
  std::vector<std::size_t> y;
  for (const SegmentGrid& g : windows) {
    const double s0 = static_cast<double>(g.start_sample) / g.sample_rate_hz;
    const std::size_t lo = static_cast<std::size_t>(s0);
    const std::size_t hi =
        std::min(seconds.size(), static_cast<std::size_t>(s0 + window_seconds));
    std::size_t pos = 0;
    for (std::size_t s = lo; s < hi && s < seconds.size(); ++s) pos += seconds[s];
    y.push_back(pos > 0 ? 1 : 0);
  }
  return y;
}

// ---------------------------------------------------------------------------
// gen-data

int cmd_gen_data(const Common& c, Resolver& r, const CLI::Option* ch_o, std::size_t channels,
                 const CLI::Option* du_o, double duration, const CLI::Option* ra_o, double rate,
                 const CLI::Option* br_o, double burst_rate, const CLI::Option* bf_o,
                 double base_freq, const CLI::Option* no_o, double noise) {
  SynthConfig sc;
  sc.channels = r.get(ch_o, channels, "channels", sc.channels);
  sc.duration_s = r.get(du_o, duration, "duration_s", sc.duration_s);
  sc.sample_rate_hz = r.get(ra_o, rate, "sample_rate_hz", sc.sample_rate_hz);
  sc.burst_rate_per_hour = r.get(br_o, burst_rate, "burst_rate_per_hour", sc.burst_rate_per_hour);
  sc.base_freq_hz = r.get(bf_o, base_freq, "base_freq_hz", sc.base_freq_hz);
  sc.noise_amp = r.get(no_o, noise, "noise_amp", sc.noise_amp);
  const std::uint64_t seed = r.get(c.seed_opt, c.seed, "seed", std::uint64_t{0});

  const SynthResult sr = synth_generate(sc, seed);
  save_series_csv(sr.series, csv_path(c, "series.csv"));
  save_intervals(sr.burst_intervals, csv_path(c, "burst_intervals.csv"));
  save_second_labels(intervals_to_seconds(sr.burst_intervals, sc.duration_s),
                     csv_path(c, "second_labels.csv"));
  write_manifest(c.out, "gen-data", r);
  std::cout << "wrote " << sr.series.channels() << " channels x " << sr.series.length()
            << " samples, " << sr.burst_intervals.size() << " burst intervals, to " << c.out
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// verify: invariant battery. --corrupt <check> perturbs that check's computed
// artifact before comparison, proving the battery catches a broken value.

struct Check {
  const char* name;
  bool (*fn)(bool corrupt);
};

bool check_shift_time(bool corrupt) {
  const std::size_t H = 2, C = 2, T = 4;
  Tensor raw = Tensor::zeros({H, C, T, T});
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < T; ++i)
          raw.data[((h * C + c) * T + t) * T + i] = 1000.0 * h + 100.0 * c + 10.0 * t + i;
  Tensor out = shift_time(raw);
  if (corrupt) out.data[0] += 1e-3;
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t tp = 0; tp < T; ++tp) {
          const double got = out.data[((h * C + c) * T + t) * T + tp];
          const double want =
              tp > t ? 0.0
                     : 1000.0 * h + 100.0 * c + 10.0 * t + static_cast<double>((T - 1) - (t - tp));
          if (got != want) return false;
        }
  return true;
}

bool check_shift_channel(bool corrupt) {
  const std::size_t H = 2, T = 3, C = 3;
  Tensor raw = Tensor::zeros({H, T, C, 2 * C - 1});
  for (std::size_t i = 0; i < raw.data.size(); ++i) raw.data[i] = static_cast<double>(i);
  Tensor out = shift_channel(raw);
  if (corrupt) out.data[1] += 1e-3;
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t cp = 0; cp < C; ++cp) {
          const std::size_t j = c + C - 1 - cp;
          const double want = raw.data[((h * T + t) * C + c) * (2 * C - 1) + j];
          if (out.data[((h * T + t) * C + c) * C + cp] != want) return false;
        }
  return true;
}

EmbeddingGrid verify_grid(std::size_t C, std::size_t T, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingGrid e(C, T, d);
  for (double& v : e.rows.data) v = rng.next_gaussian();
  return e;
}

MvpaParams verify_params(std::size_t d, std::size_t H, std::size_t G, std::uint64_t seed) {
  Rng rng(seed);
  MvpaParams p = MvpaParams::init(d, H, G, 8, 8, rng);
  for (double& v : p.u.data) v = 0.1 * rng.next_gaussian();
  for (double& v : p.v.data) v = 0.1 * rng.next_gaussian();
  for (double& v : p.w.data) v = 0.1 * rng.next_gaussian();
  return p;
}

bool check_oracle_equivalence(bool corrupt) {
  for (std::size_t T : {2ul, 4ul})
    for (std::size_t C : {2ul, 4ul}) {
      const EmbeddingGrid E = verify_grid(C, T, 8, 10 * T + C);
      const MvpaParams P = verify_params(8, 4, 2, 20 * T + C);
      const AttentionLogits naive = naive_mvpa_logits(E, P);
      AttentionConfig cfg;
      cfg.n_heads = 4;
      cfg.n_kv_groups = 2;
      cfg.local_window = T;
      AttentionLogits eff = efficient_mvpa_logits(E, P, cfg);
      if (corrupt) eff.combined.data[0] += 1e-3;
      const std::size_t N = C * T;
      for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t q = 0; q < N; ++q)
          for (std::size_t k = 0; k < N; ++k) {
            if (!naive.causal[q * N + k]) continue;
            if (std::abs(naive.combined.at(h, q, k) - eff.combined.at(h, q, k)) >= 1e-10)
              return false;
          }
    }
  return true;
}

bool check_causality(bool corrupt) {
  for (std::size_t trial = 0; trial < 50; ++trial) {
    const std::size_t C = 2, T = 4, d = 8;
    AttentionConfig cfg;
    cfg.n_heads = 4;
    cfg.n_kv_groups = 2;
    cfg.local_window = 2;
    EmbeddingGrid E = verify_grid(C, T, d, 300 + trial);
    const MvpaParams P = verify_params(d, 4, 2, 400 + trial);
    const EmbeddingGrid base = mvpa_forward(E, P, cfg, trial);
    const std::size_t t_pert = 2;
    Rng noise(500 + trial);
    for (std::size_t j = 0; j < d; ++j) E.row_of(trial % C, t_pert)[j] = noise.next_gaussian();
    EmbeddingGrid pert = mvpa_forward(E, P, cfg, trial);
    if (corrupt) pert.row_of(0, 0)[0] += 1e-12;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < t_pert; ++t)
        if (std::memcmp(pert.row_of(c, t), base.row_of(c, t), d * sizeof(double)) != 0)
          return false;
  }
  return true;
}

bool check_counters(bool corrupt) {
  const std::size_t T = 5, C = 3, L = 2, H = 4;
  AttentionConfig cfg;
  cfg.n_heads = H;
  cfg.n_kv_groups = 2;
  cfg.local_window = L;
  OpCounters ops;
  efficient_mvpa_logits(verify_grid(C, T, 8, 61), verify_params(8, H, 2, 62), cfg, &ops);
  if (corrupt) ops.time_dots += 1;
  std::size_t content = 0;
  for (std::size_t t = 0; t < T; ++t) content += std::min(t + 1, L);
  return ops.time_dots == H * C * T * T && ops.channel_dots == H * T * C * (2 * C - 1) &&
         ops.content_dots == H * C * C * content;
}

bool check_dropout_rate(bool corrupt) {
  double p = structured_drop_prob(0.1);
  if (corrupt) p += 1e-6;
  if (std::abs(p - (1.0 - std::sqrt(0.9))) >= 1e-12) return false;
  std::size_t dropped = 0;
  const std::size_t masks = 2000, T = 10, C = 10;
  for (std::uint64_t s = 0; s < masks; ++s) {
    const DropMask m = structured_dropout_mask(T, C, 0.1, s);
    for (std::uint8_t k : m.cell_kept) dropped += k ? 0 : 1;
  }
  const double frac = static_cast<double>(dropped) / static_cast<double>(masks * T * C);
  return std::abs(frac - 0.1) < 0.02;
}

bool check_gqa_grouping(bool corrupt) {
  std::size_t got = kv_group_of(5, 8, 4);
  if (corrupt) got += 1;
  if (got != 2) return false;
  return kv_group_of(0, 4, 2) == 0 && kv_group_of(1, 4, 2) == 0 && kv_group_of(2, 4, 2) == 1 &&
         kv_group_of(3, 4, 2) == 1;
}

bool check_attention_gradient(bool corrupt) {
  const std::size_t d = 6, H = 2, C = 2, T = 3;
  AttentionConfig cfg;
  cfg.n_heads = H;
  cfg.n_kv_groups = 1;
  cfg.local_window = 2;
  const EmbeddingGrid E = verify_grid(C, T, d, 71);
  MvpaParams P = verify_params(d, H, 1, 72);
  const DropMask none = structured_dropout_mask(T, C, 0.0, 0);
  Rng wr(73);
  Tensor wsum = Tensor::zeros({C * T, d});
  for (double& v : wsum.data) v = wr.next_gaussian();

  auto scalar = [&]() {
    Graph g;
    MvpaParamNodes n;
    n.W_q = g.leaf(P.W_q, false);
    n.W_ke = g.leaf(P.W_ke, false);
    n.W_kt = g.leaf(P.W_kt, false);
    n.W_kc = g.leaf(P.W_kc, false);
    n.W_v = g.leaf(P.W_v, false);
    n.W_o = g.leaf(P.W_o, false);
    n.time_codes = g.leaf(P.time_codes, false);
    n.chan_codes = g.leaf(P.chan_codes, false);
    n.u = g.leaf(P.u, false);
    n.v = g.leaf(P.v, false);
    n.w = g.leaf(P.w, false);
    const Graph::NodeId out =
        attention_nodes(g, g.constant(E.rows), n, cfg, T, C, P.c_max, none);
    const Tensor& ov = g.val(out);
    double s = 0.0;
    for (std::size_t i = 0; i < ov.data.size(); ++i) s += ov.data[i] * wsum.data[i];
    return s;
  };

  Graph g;
  MvpaParamNodes n;
  n.W_q = g.leaf(P.W_q, true);
  n.W_ke = g.leaf(P.W_ke, true);
  n.W_kt = g.leaf(P.W_kt, true);
  n.W_kc = g.leaf(P.W_kc, true);
  n.W_v = g.leaf(P.W_v, true);
  n.W_o = g.leaf(P.W_o, true);
  n.time_codes = g.leaf(P.time_codes, true);
  n.chan_codes = g.leaf(P.chan_codes, true);
  n.u = g.leaf(P.u, true);
  n.v = g.leaf(P.v, true);
  n.w = g.leaf(P.w, true);
  const Graph::NodeId out = attention_nodes(g, g.constant(E.rows), n, cfg, T, C, P.c_max, none);
  g.backward(g.sum_all(g.mul_mask(out, wsum)));

  Rng pick(74);
  const std::pair<Tensor*, Graph::NodeId> targets[] = {
      {&P.W_q, n.W_q}, {&P.W_v, n.W_v}, {&P.time_codes, n.time_codes}, {&P.u, n.u}};
  const double step = 1e-4;
  for (const auto& [host, node] : targets)
    for (int rep = 0; rep < 3; ++rep) {
      const std::size_t j = pick.next_below(host->data.size());
      const double keep = host->data[j];
      host->data[j] = keep + step;
      const double fp = scalar();
      host->data[j] = keep - step;
      const double fm = scalar();
      host->data[j] = keep;
      const double fd = (fp - fm) / (2 * step);
      double an = g.grad(node).data[j];
      if (corrupt) an += 1e-2;
      if (std::abs(fd - an) >= 1e-8 &&
          std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}) >= 1e-4)
        return false;
    }
  return true;
}

bool check_wavelet_roundtrip(bool corrupt) {
  for (const auto& [n, level] : {std::pair<std::size_t, std::size_t>{64, 3}, {512, 6}}) {
    Rng rng(80 + n);
    Tensor x = Tensor::zeros({n});
    for (double& v : x.data) v = rng.next_gaussian();
    const WaveletCoeffs wc = dwt_db4(x, level);
    if (wc.total_coeffs() != n) return false;
    Tensor back = idwt_db4(wc);
    if (corrupt) back.data[0] += 1e-6;
    if (max_abs_diff(x, back) >= 1e-8) return false;
    double ex = 0.0, ec = 0.0;
    for (double v : x.data) ex += v * v;
    for (const Tensor& b : wc.bands)
      for (double v : b.data) ec += v * v;
    if (std::abs(ex - ec) / ex >= 1e-8) return false;
  }
  return true;
}

bool check_contrastive_closed_form(bool corrupt) {
  ContrastiveConfig cfg;
  const std::vector<double> o{0.6, 0.8, 0.0};
  const std::vector<double> orth{-0.8, 0.6, 0.0};
  double uniform = contrastive_loss(o, o, std::vector<std::vector<double>>(30, o), cfg);
  if (corrupt) uniform += 1e-6;
  const double separated = contrastive_loss(o, o, std::vector<std::vector<double>>(30, orth), cfg);
  return std::abs(uniform - std::log(31.0)) < 1e-9 &&
         std::abs(separated - std::log1p(30.0 * std::exp(-10.0))) < 1e-12;
}

bool check_checkpoint_roundtrip(bool corrupt) {
  ModelConfig cfg = ModelConfig::toy();
  cfg.n_layers = 1;
  ModelParams p = ModelParams::init(cfg, 85);
  const fs::path tmp = fs::temp_directory_path() / "mvpa_verify_ckpt.bin";
  save_checkpoint(tmp.string(), collect_params(p));
  ModelParams q = ModelParams::init(cfg, 86);
  auto named = collect_params(q);
  apply_checkpoint(load_checkpoint(tmp.string()), named);
  if (corrupt) q.layers[0].attn.W_q.data[0] += 1e-9;
  auto a = collect_params(p);
  auto b = collect_params(q);
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!bitwise_equal(*a[i].tensor, *b[i].tensor)) return false;
  fs::remove(tmp);
  return true;
}

bool check_adapter_noop(bool corrupt) {
  ModelConfig cfg = ModelConfig::toy();
  cfg.n_layers = 2;
  const ModelParams base = ModelParams::init(cfg, 87);
  std::vector<LayerAdapters> ads = init_adapters(base, LoraConfig{}, 88);
  if (corrupt) ads[0].q.B.data[0] = 1e-9;
  SynthConfig sc;
  sc.channels = 2;
  sc.duration_s = 8.0;
  const SynthResult sr = synth_generate(sc, 89);
  const SegmentGrid grid = segment(sr.series, 4.0, 1.0, 4.0)[0];
  const ModelOutput a = model_forward(base, cfg, grid);
  const ModelOutput b = model_forward(apply_adapters(base, ads), cfg, grid);
  return bitwise_equal(a.outputs.rows, b.outputs.rows);
}

bool check_tape_forward(bool corrupt) {
  ModelConfig cfg = ModelConfig::toy();
  cfg.n_layers = 2;
  const ModelParams p = ModelParams::init(cfg, 95);
  SynthConfig sc;
  sc.channels = 2;
  sc.duration_s = 8.0;
  const SynthResult sr = synth_generate(sc, 96);
  const SegmentGrid grid = segment(sr.series, 4.0, 1.0, 4.0)[0];
  const std::size_t C = grid.channels(), T = grid.segments();
  const ModelOutput plain = model_forward(p, cfg, grid);
  Graph g;
  const ModelNodes nodes = lift_params(g, p, false);
  const Tensor features = encoder_features(grid, cfg.dwt_level);
  const TapeForward tf = model_nodes_forward(g, nodes, features, cfg, C, T, 0, false);
  Tensor tape_out = g.val(tf.outputs);
  if (corrupt) tape_out.data[0] += 1e-9;
  return max_abs_diff(plain.outputs.rows, tape_out) < 1e-10;
}

int cmd_verify(const Common& c, Resolver& r, const std::string& corrupt_name) {
  const Check checks[] = {{"shift_time", check_shift_time},
                          {"shift_channel", check_shift_channel},
                          {"oracle_equivalence", check_oracle_equivalence},
                          {"causality", check_causality},
                          {"counters", check_counters},
                          {"dropout_rate", check_dropout_rate},
                          {"gqa_grouping", check_gqa_grouping},
                          {"attention_gradient", check_attention_gradient},
                          {"wavelet_roundtrip", check_wavelet_roundtrip},
                          {"contrastive_closed_form", check_contrastive_closed_form},
                          {"checkpoint_roundtrip", check_checkpoint_roundtrip},
                          {"adapter_noop", check_adapter_noop},
                          {"tape_forward", check_tape_forward}};
  if (!corrupt_name.empty()) {
    bool known = false;
    for (const Check& ck : checks) known = known || corrupt_name == ck.name;
    if (!known) throw CLI::ValidationError("--corrupt: unknown check " + corrupt_name);
  }
  r.record("corrupt", corrupt_name);

  std::ofstream report(csv_path(c, "verify_report.csv"));
  report << "check,status\n";
  std::vector<std::string> failed;
  for (const Check& ck : checks) {
    const bool ok = ck.fn(corrupt_name == ck.name);
    report << ck.name << "," << (ok ? "pass" : "fail") << "\n";
    std::cout << ck.name << ": " << (ok ? "pass" : "FAIL") << "\n";
    if (!ok) failed.push_back(ck.name);
  }
  write_manifest(c.out, "verify", r);
  if (!failed.empty()) {
    std::cerr << "verify failed:";
    for (const std::string& n : failed) std::cerr << " " << n;
    std::cerr << "\n";
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// bench-attn

std::vector<std::size_t> parse_list(const std::string& s, const char* what) {
  std::vector<std::size_t> out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      out.push_back(static_cast<std::size_t>(std::stoul(tok)));
    } catch (const std::exception&) {
      throw CLI::ValidationError(std::string(what) + ": bad entry " + tok);
    }
  }
  if (out.empty()) throw CLI::ValidationError(std::string(what) + ": empty list");
  return out;
}

int cmd_bench(const Common& c, Resolver& r, const std::string& t_list, const std::string& c_list,
              std::size_t d, std::size_t heads, std::size_t groups, std::size_t mem_limit_mb,
              bool emit_gnuplot) {
  const std::vector<std::size_t> Ts = parse_list(t_list, "--t-list");
  const std::vector<std::size_t> Cs = parse_list(c_list, "--c-list");
  r.record("t_list", t_list);
  r.record("c_list", c_list);
  r.get<std::size_t>(nullptr, 0, "d_model", d);
  r.get<std::size_t>(nullptr, 0, "n_heads", heads);
  r.get<std::size_t>(nullptr, 0, "n_kv_groups", groups);
  const std::uint64_t seed = r.get(c.seed_opt, c.seed, "seed", std::uint64_t{0});

  std::ofstream csv(csv_path(c, "bench.csv"));
  csv << "T,C,naive_ns,efficient_ns,content_dots,time_dots,channel_dots\n";
  using clock = std::chrono::steady_clock;
  for (const std::size_t C : Cs)
    for (const std::size_t T : Ts) {
      const std::size_t N = C * T;
      // four [H x N x N] tensors per logit set, two sets live plus shift
      // staging: ~3x one set
      const double bytes = 3.0 * 4.0 * static_cast<double>(heads) * static_cast<double>(N) *
                           static_cast<double>(N) * 8.0;
      OpCounters ops;
      std::string naive_ns, efficient_ns;
      if (bytes <= static_cast<double>(mem_limit_mb) * 1048576.0) {
        const EmbeddingGrid E = verify_grid(C, T, d, seed + 17 * T + C);
        Rng rng(seed + 31 * T + C);
        const MvpaParams P = MvpaParams::init(d, heads, groups, std::max<std::size_t>(T, 1),
                                              std::max<std::size_t>(C, 1), rng);
        AttentionConfig cfg;
        cfg.n_heads = heads;
        cfg.n_kv_groups = groups;
        cfg.local_window = T;
        const auto t0 = clock::now();
        const AttentionLogits nv = naive_mvpa_logits(E, P);
        const auto t1 = clock::now();
        const AttentionLogits ef = efficient_mvpa_logits(E, P, cfg, &ops);
        const auto t2 = clock::now();
        (void)nv;
        (void)ef;
        naive_ns = std::to_string(
            std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
        efficient_ns = std::to_string(
            std::chrono::duration_cast<std::chrono::nanoseconds>(t2 - t1).count());
      } else {
        // counter-only row: the formulas the instrumented path is tested
        // against
        ops.time_dots = heads * C * T * T;
        ops.channel_dots = heads * T * C * (2 * C - 1);
        std::size_t content = 0;
        for (std::size_t t = 0; t < T; ++t) content += std::min(t + 1, T);
        ops.content_dots = heads * C * C * content;
      }
      csv << T << "," << C << "," << naive_ns << "," << efficient_ns << "," << ops.content_dots
          << "," << ops.time_dots << "," << ops.channel_dots << "\n";
    }
  csv.close();

  if (emit_gnuplot) {
    std::ofstream gp(csv_path(c, "bench.gnuplot"));
    gp << "set datafile separator ','\n"
       << "set logscale y\n"
       << "set xlabel 'T'\n"
       << "set ylabel 'ns'\n"
       << "set key left top\n"
       << "plot 'bench.csv' using 1:3 with linespoints title 'naive', \\\n"
       << "     'bench.csv' using 1:4 with linespoints title 'efficient'\n";
  }
  r.record("emit_gnuplot", emit_gnuplot ? "1" : "0");
  r.get<std::size_t>(nullptr, 0, "mem_limit_mb", mem_limit_mb);
  write_manifest(c.out, "bench-attn", r);
  std::cout << "wrote bench.csv (" << Ts.size() * Cs.size() << " rows) to " << c.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// pretrain

int cmd_pretrain(const Common& c, Resolver& r, const CLI::Option* data_o, std::string data,
                 const CLI::Option* ws_o, double window_seconds, const CLI::Option* st_o,
                 std::size_t steps, const CLI::Option* lr_o, double lr, const CLI::Option* wd_o,
                 double wd, const CLI::Option* bw_o, std::size_t batch_windows) {
  const ModelConfig mc = resolve_model(c, r);
  const std::uint64_t seed = r.get(c.seed_opt, c.seed, "seed", std::uint64_t{0});
  data = r.get_str(data_o, data, "data", data);

  MultiChannelSeries series;
  if (data.empty()) {
    SynthConfig sc;
    sc.channels = 4;
    sc.duration_s = 120.0;
    sc.sample_rate_hz = mc.sample_rate_hz;
    series = synth_generate(sc, seed).series;
  } else {
    require_file(data, "--data series file");
    series = load_series_csv(data);
  }

  PretrainConfig tc;
  tc.steps = r.get(st_o, steps, "steps", tc.steps);
  tc.adam.lr = r.get(lr_o, lr, "lr", 1e-3);
  tc.adam.weight_decay = r.get(wd_o, wd, "weight_decay", 0.01);
  tc.batch_windows = r.get(bw_o, batch_windows, "batch_windows", tc.batch_windows);
  tc.seed = seed;
  const double win_s = r.get(ws_o, window_seconds, "window_seconds", 8.0);

  const std::vector<SegmentGrid> windows =
      segment(series, win_s, mc.segment_seconds, win_s);
  ModelParams params = ModelParams::init(mc, seed);
  const PretrainResult res = pretrain(params, mc, windows, tc);

  std::ofstream trace(csv_path(c, "trace.csv"));
  trace << "step,loss,accuracy\n";
  for (const TraceRow& row : res.trace)
    trace << row.step << "," << fmt_double(row.loss) << "," << fmt_double(row.accuracy) << "\n";
  save_checkpoint(csv_path(c, "model.ckpt"), collect_params(params));
  write_manifest(c.out, "pretrain", r);
  const TraceRow& last = res.trace.back();
  std::cout << "pretrained " << tc.steps << " steps on " << windows.size()
            << " windows; final loss " << fmt_double(last.loss) << ", accuracy "
            << fmt_double(last.accuracy) << "; checkpoint in " << c.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// finetune

int cmd_finetune(const Common& c, Resolver& r, const CLI::Option* data_o, std::string data,
                 const CLI::Option* lab_o, std::string labels_path, const CLI::Option* ck_o,
                 std::string checkpoint, const CLI::Option* ws_o, double window_seconds,
                 const CLI::Option* st_o, std::size_t steps, const CLI::Option* lr_o, double lr,
                 const CLI::Option* rk_o, std::size_t rank) {
  const ModelConfig mc = resolve_model(c, r);
  const std::uint64_t seed = r.get(c.seed_opt, c.seed, "seed", std::uint64_t{0});
  data = r.get_str(data_o, data, "data", data);
  labels_path = r.get_str(lab_o, labels_path, "labels", labels_path);
  checkpoint = r.get_str(ck_o, checkpoint, "checkpoint", checkpoint);

  require_file(data, "--data series file");
  require_file(labels_path, "--labels second-label file");
  const MultiChannelSeries series = load_series_csv(data);
  const std::vector<std::uint8_t> seconds = load_second_labels(labels_path);

  const double win_s = r.get(ws_o, window_seconds, "window_seconds", 8.0);
  const std::vector<SegmentGrid> windows = segment(series, win_s, mc.segment_seconds, win_s);
  const std::vector<std::size_t> y = label_windows(windows, seconds, win_s);

  ModelParams base = ModelParams::init(mc, seed);
  if (!checkpoint.empty()) {
    require_file(checkpoint, "--checkpoint file");
    auto named = collect_params(base);
    apply_checkpoint(load_checkpoint(checkpoint), named);
  }

  FinetuneConfig tc;
  tc.steps = r.get(st_o, steps, "steps", tc.steps);
  tc.adam.lr = r.get(lr_o, lr, "lr", 1e-3);
  tc.lora.rank = r.get(rk_o, rank, "lora_rank", tc.lora.rank);
  tc.seed = seed;

  std::vector<LayerAdapters> ads = init_adapters(base, tc.lora, seed + 1);
  Rng hr(seed + 2);
  ClassifyHead head = ClassifyHead::init(tc.n_classes, mc.d_model, hr);
  const FinetuneResult res = finetune(base, mc, ads, head, windows, y, tc);

  std::ofstream trace(csv_path(c, "trace.csv"));
  trace << "step,loss,accuracy\n";
  for (const TraceRow& row : res.trace)
    trace << row.step << "," << fmt_double(row.loss) << "," << fmt_double(row.accuracy) << "\n";

  ModelParams tuned = apply_adapters(base, ads);
  std::vector<NamedTensor> named = collect_params(tuned);
  named.push_back({"head.W", &head.W});
  named.push_back({"head.b", &head.b});
  save_checkpoint(csv_path(c, "tuned.ckpt"), named);
  write_manifest(c.out, "finetune", r);

  std::size_t positives = 0;
  for (std::size_t v : y) positives += v;
  const TraceRow& last = res.trace.back();
  std::cout << "finetuned " << tc.steps << " steps on " << windows.size() << " windows ("
            << positives << " positive); final loss " << fmt_double(last.loss)
            << ", train accuracy " << fmt_double(last.accuracy) << "; tuned.ckpt in " << c.out
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const Common& c, Resolver& r, const CLI::Option* p_o, std::string pred_path,
             const CLI::Option* t_o, std::string truth_path) {
  pred_path = r.get_str(p_o, pred_path, "pred", pred_path);
  truth_path = r.get_str(t_o, truth_path, "truth", truth_path);
  const std::uint64_t seed = r.get(c.seed_opt, c.seed, "seed", std::uint64_t{0});
  require_file(pred_path, "--pred second-label file");
  require_file(truth_path, "--truth second-label file");

  const std::vector<std::uint8_t> pred = load_second_labels(pred_path);
  const std::vector<std::uint8_t> truth = load_second_labels(truth_path);
  if (pred.size() != truth.size())
    throw CLI::ValidationError("pred and truth label files differ in length");

  const double hours = static_cast<double>(pred.size()) / 3600.0;
  EventList detected = online_threshold(pred);
  detected.recording_hours = hours;
  const std::vector<std::size_t> supports = event_supports(detected, pred);
  const PostprocessResult post = episodic_postprocess(detected, supports);
  EventList kept = post.events;
  kept.recording_hours = hours;
  const EventList truth_events = seconds_to_events(truth);
  const DetectionMetrics det = detection_metrics(kept, truth_events, hours);

  const double kappa = cohen_kappa(pred, truth);
  const std::size_t n_seg = std::min<std::size_t>(300, pred.size());
  const KappaEstimate ke = kappa_estimate(pred, truth, n_seg, 250, seed);

  std::ofstream report(csv_path(c, "report.csv"));
  report << "metric,value\n";
  report << "kappa," << fmt_double(kappa) << "\n";
  report << "kappa_sampled_mean," << fmt_double(ke.mean) << "\n";
  report << "kappa_band," << landis_koch_band(ke.mean) << "\n";
  report << "f1," << fmt_double(det.f1) << "\n";
  report << "sensitivity," << fmt_double(det.sensitivity) << "\n";
  report << "precision," << fmt_double(det.precision) << "\n";
  report << "fp_per_hour," << fmt_double(det.fp_per_hour) << "\n";
  report << "pred_events," << kept.events.size() << "\n";
  report << "truth_events," << truth_events.events.size() << "\n";
  write_manifest(c.out, "eval", r);
  std::cout << "kappa " << fmt_double(kappa) << " (" << landis_koch_band(ke.mean) << "), f1 "
            << fmt_double(det.f1) << ", fp/h " << fmt_double(det.fp_per_hour) << "; report in "
            << c.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// forecast

int cmd_forecast(const Common& c, Resolver& r, const CLI::Option* data_o, std::string data,
                 const CLI::Option* lb_o, std::size_t lookback, const CLI::Option* hz_o,
                 std::size_t horizon, const CLI::Option* st_o, std::size_t steps,
                 const CLI::Option* lr_o, double lr, const CLI::Option* ba_o, std::size_t batch,
                 const CLI::Option* sr_o, std::size_t stride) {
  // forecast-shaped toy layout unless the config overrides it: short segments
  // so a 96-sample lookback is a whole number of segments
  if (r.file.find("segment_samples") == r.file.end()) r.file["segment_samples"] = "16";
  if (r.file.find("dwt_level") == r.file.end()) r.file["dwt_level"] = "1";
  if (r.file.find("t_max") == r.file.end()) r.file["t_max"] = "8";
  if (r.file.find("c_max") == r.file.end()) r.file["c_max"] = "4";
  if (r.file.find("local_window") == r.file.end()) r.file["local_window"] = "6";
  if (r.file.find("d_inner") == r.file.end()) r.file["d_inner"] = "48";
  const ModelConfig mc = resolve_model(c, r);
  const std::uint64_t seed = r.get(c.seed_opt, c.seed, "seed", std::uint64_t{0});
  data = r.get_str(data_o, data, "data", data);

  MultiChannelSeries series;
  if (data.empty()) {
    SynthConfig sc;
    sc.channels = 2;
    sc.duration_s = 40.0;
    sc.noise_amp = 0.02;
    sc.sample_rate_hz = mc.sample_rate_hz;
    series = synth_generate(sc, seed).series;
  } else {
    require_file(data, "--data series file");
    series = load_series_csv(data);
  }

  ForecastConfig fc;
  fc.lookback = r.get(lb_o, lookback, "lookback", fc.lookback);
  fc.horizon = r.get(hz_o, horizon, "horizon", fc.horizon);
  fc.steps = r.get(st_o, steps, "steps", fc.steps);
  fc.adam.lr = r.get(lr_o, lr, "lr", 2e-3);
  fc.seed = seed;
  const std::size_t batch_n = r.get(ba_o, batch, "batch", std::size_t{8});
  const std::size_t stride_n = r.get(sr_o, stride, "stride", std::size_t{32});

  const auto samples = make_forecast_samples(series, fc, mc.segment_samples, stride_n, 1000);
  if (samples.size() < 5)
    throw CLI::ValidationError("series too short: only " + std::to_string(samples.size()) +
                               " forecast windows");
  const std::size_t n_train = samples.size() * 4 / 5;
  const std::vector<ForecastSample> train(samples.begin(), samples.begin() + n_train);
  const std::vector<ForecastSample> test(samples.begin() + n_train, samples.end());

  ModelParams params = ModelParams::init(mc, seed);
  Rng hr(seed + 3);
  ForecastHead head = ForecastHead::init(fc.horizon, mc.d_model, hr);
  const ForecastTrainResult res = train_forecaster(params, head, mc, train, fc, batch_n);

  std::ofstream trace(csv_path(c, "trace.csv"));
  trace << "step,loss\n";
  for (const TraceRow& row : res.trace)
    trace << row.step << "," << fmt_double(row.loss) << "\n";

  const double model_mse = forecast_mse(params, head, mc, test);
  const double baseline = lastvalue_mse(test);
  std::ofstream report(csv_path(c, "report.csv"));
  report << "metric,value\n";
  report << "model_mse," << fmt_double(model_mse) << "\n";
  report << "lastvalue_mse," << fmt_double(baseline) << "\n";
  report << "improvement," << fmt_double(baseline > 0 ? 1.0 - model_mse / baseline : 0.0) << "\n";
  report << "train_windows," << train.size() << "\n";
  report << "test_windows," << test.size() << "\n";
  write_manifest(c.out, "forecast", r);
  std::cout << "forecast MSE " << fmt_double(model_mse) << " vs last-value "
            << fmt_double(baseline) << " on " << test.size() << " held-out windows; report in "
            << c.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-variate parallel attention toolkit"};
  app.require_subcommand(1);

  // gen-data
  Common gd_c;
  auto* gd = app.add_subcommand("gen-data", "generate a synthetic multi-channel series");
  add_common(gd, gd_c);
  std::size_t gd_channels = 4;
  double gd_duration = 120.0, gd_rate = 64.0, gd_burst = 0.0, gd_freq = 2.0, gd_noise = 0.05;
  auto* gd_ch = gd->add_option("--channels", gd_channels, "channel count");
  auto* gd_du = gd->add_option("--duration", gd_duration, "seconds");
  auto* gd_ra = gd->add_option("--rate", gd_rate, "sample rate Hz");
  auto* gd_br = gd->add_option("--burst-rate", gd_burst, "bursts per hour");
  auto* gd_bf = gd->add_option("--base-freq", gd_freq, "base oscillation Hz");
  auto* gd_no = gd->add_option("--noise", gd_noise, "noise amplitude");

  // verify
  Common vf_c;
  auto* vf = app.add_subcommand("verify", "run the invariant battery");
  add_common(vf, vf_c);
  std::string vf_corrupt;
  vf->add_option("--corrupt", vf_corrupt, "test hook: perturb the named check's artifact");

  // bench-attn
  Common be_c;
  auto* be = app.add_subcommand("bench-attn", "time naive vs efficient logits and count dots");
  add_common(be, be_c);
  std::string be_t = "1,2,4,8,16,32", be_cl = "1,2,4,8";
  std::size_t be_d = 32, be_h = 4, be_g = 2, be_mem = 1024;
  bool be_gp = false;
  be->add_option("--t-list", be_t, "comma-separated T values")->capture_default_str();
  be->add_option("--c-list", be_cl, "comma-separated C values")->capture_default_str();
  be->add_option("--d", be_d, "embedding width")->capture_default_str();
  be->add_option("--heads", be_h, "attention heads")->capture_default_str();
  be->add_option("--groups", be_g, "kv groups")->capture_default_str();
  be->add_option("--mem-limit-mb", be_mem, "degrade to counter-only rows past this estimate")
      ->capture_default_str();
  be->add_flag("--emit-gnuplot", be_gp, "write a gnuplot script next to the CSV");

  // pretrain
  Common pt_c;
  auto* pt = app.add_subcommand("pretrain", "contrastive pre-training on windowed series");
  add_common(pt, pt_c);
  std::string pt_data;
  double pt_ws = 8.0, pt_lr = 1e-3, pt_wd = 0.01;
  std::size_t pt_steps = 500, pt_bw = 4;
  auto* pt_da = pt->add_option("--data", pt_data, "series CSV (default: built-in synthetic)");
  auto* pt_wo = pt->add_option("--window-seconds", pt_ws, "window length");
  auto* pt_st = pt->add_option("--steps", pt_steps, "optimizer steps");
  auto* pt_lo = pt->add_option("--lr", pt_lr, "learning rate");
  auto* pt_wd_o = pt->add_option("--weight-decay", pt_wd, "decoupled weight decay");
  auto* pt_bw_o = pt->add_option("--batch-windows", pt_bw, "windows per confounder pool");

  // finetune
  Common ft_c;
  auto* ft = app.add_subcommand("finetune", "adapter fine-tuning for window classification");
  add_common(ft, ft_c);
  std::string ft_data, ft_labels, ft_ckpt;
  double ft_ws = 8.0, ft_lr = 1e-3;
  std::size_t ft_steps = 200, ft_rank = 8;
  auto* ft_da = ft->add_option("--data", ft_data, "series CSV");
  auto* ft_la = ft->add_option("--labels", ft_labels, "per-second 0/1 label CSV");
  auto* ft_ck = ft->add_option("--checkpoint", ft_ckpt, "pretrained checkpoint (optional)");
  auto* ft_wo = ft->add_option("--window-seconds", ft_ws, "window length");
  auto* ft_st = ft->add_option("--steps", ft_steps, "optimizer steps");
  auto* ft_lo = ft->add_option("--lr", ft_lr, "learning rate");
  auto* ft_rk = ft->add_option("--rank", ft_rank, "adapter rank");

  // eval
  Common ev_c;
  auto* ev = app.add_subcommand("eval", "agreement and detection metrics for label files");
  add_common(ev, ev_c);
  std::string ev_pred, ev_truth;
  auto* ev_p = ev->add_option("--pred", ev_pred, "predicted per-second labels CSV");
  auto* ev_t = ev->add_option("--truth", ev_truth, "ground-truth per-second labels CSV");

  // forecast
  Common fo_c;
  auto* fo = app.add_subcommand("forecast", "train a forecaster and compare to last-value");
  add_common(fo, fo_c);
  std::string fo_data;
  std::size_t fo_lb = 96, fo_hz = 96, fo_steps = 300, fo_batch = 8, fo_stride = 32;
  double fo_lr = 2e-3;
  auto* fo_da = fo->add_option("--data", fo_data, "series CSV (default: built-in synthetic)");
  auto* fo_lb_o = fo->add_option("--lookback", fo_lb, "input samples per window");
  auto* fo_hz_o = fo->add_option("--horizon", fo_hz, "samples to predict");
  auto* fo_st = fo->add_option("--steps", fo_steps, "optimizer steps");
  auto* fo_lo = fo->add_option("--lr", fo_lr, "learning rate");
  auto* fo_ba = fo->add_option("--batch", fo_batch, "windows per step");
  auto* fo_sr = fo->add_option("--stride", fo_stride, "window stride in samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gd->parsed()) {
      Resolver r;
      r.file = read_config(gd_c.config);
      return cmd_gen_data(gd_c, r, gd_ch, gd_channels, gd_du, gd_duration, gd_ra, gd_rate, gd_br,
                          gd_burst, gd_bf, gd_freq, gd_no, gd_noise);
    }
    if (vf->parsed()) {
      Resolver r;
      r.file = read_config(vf_c.config);
      return cmd_verify(vf_c, r, vf_corrupt);
    }
    if (be->parsed()) {
      Resolver r;
      r.file = read_config(be_c.config);
      return cmd_bench(be_c, r, be_t, be_cl, be_d, be_h, be_g, be_mem, be_gp);
    }
    if (pt->parsed()) {
      Resolver r;
      r.file = read_config(pt_c.config);
      return cmd_pretrain(pt_c, r, pt_da, pt_data, pt_wo, pt_ws, pt_st, pt_steps, pt_lo, pt_lr,
                          pt_wd_o, pt_wd, pt_bw_o, pt_bw);
    }
    if (ft->parsed()) {
      Resolver r;
      r.file = read_config(ft_c.config);
      return cmd_finetune(ft_c, r, ft_da, ft_data, ft_la, ft_labels, ft_ck, ft_ckpt, ft_wo, ft_ws,
                          ft_st, ft_steps, ft_lo, ft_lr, ft_rk, ft_rank);
    }
    if (ev->parsed()) {
      Resolver r;
      r.file = read_config(ev_c.config);
      return cmd_eval(ev_c, r, ev_p, ev_pred, ev_t, ev_truth);
    }
    if (fo->parsed()) {
      Resolver r;
      r.file = read_config(fo_c.config);
      return cmd_forecast(fo_c, r, fo_da, fo_data, fo_lb_o, fo_lb, fo_hz_o, fo_hz, fo_st,
                          fo_steps, fo_lo, fo_lr, fo_ba, fo_batch, fo_sr, fo_stride);
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

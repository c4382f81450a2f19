#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mvpa/rng.hpp"
#include "mvpa/tensor.hpp"

namespace mvpa {

// Multi-channel recording sampled at a uniform rate. Labels, when present,
// hold one 0/1 entry per whole second of the recording.
struct MultiChannelSeries {
  Tensor samples;  // [C x N]
  double sample_rate_hz = 0.0;
  std::vector<std::string> channel_ids;
  std::vector<std::uint8_t> second_labels;

  std::size_t channels() const { return samples.rank() == 2 ? samples.dim(0) : 0; }
  std::size_t length() const { return samples.rank() == 2 ? samples.dim(1) : 0; }
  double duration_s() const { return sample_rate_hz > 0 ? length() / sample_rate_hz : 0.0; }
};

// One analysis window cut into T segments of S samples per channel.
struct SegmentGrid {
  Tensor cells;  // [C x T x S]
  double segment_seconds = 0.0;
  double sample_rate_hz = 0.0;
  std::size_t start_sample = 0;  // offset of the window in the source series

  std::size_t channels() const { return cells.dim(0); }
  std::size_t segments() const { return cells.dim(1); }
  std::size_t segment_samples() const { return cells.dim(2); }
};

// ---------------------------------------------------------------------------
// Segmentation / resampling

inline std::vector<SegmentGrid> segment(const MultiChannelSeries& series,
                                        double window_seconds,
                                        double segment_seconds,
                                        double stride_seconds) {
  if (segment_seconds <= 0 || window_seconds <= 0 || stride_seconds <= 0)
    throw std::invalid_argument("segment: window, segment and stride must be positive");
  const double ratio = window_seconds / segment_seconds;
  const double rounded = std::round(ratio);
  if (std::fabs(ratio - rounded) > 1e-9 || rounded < 1.0)
    throw std::invalid_argument("segment: window_seconds must be an integer multiple of segment_seconds");
  const std::size_t T = static_cast<std::size_t>(rounded);
  const std::size_t S = static_cast<std::size_t>(std::llround(segment_seconds * series.sample_rate_hz));
  if (S == 0) throw std::invalid_argument("segment: segment shorter than one sample");
  const std::size_t stride = static_cast<std::size_t>(std::llround(stride_seconds * series.sample_rate_hz));
  if (stride == 0) throw std::invalid_argument("segment: stride shorter than one sample");
  const std::size_t C = series.channels();
  const std::size_t N = series.length();
  const std::size_t window_samples = T * S;

  std::vector<SegmentGrid> grids;
  for (std::size_t start = 0; start + window_samples <= N; start += stride) {
    SegmentGrid g;
    g.cells = Tensor::zeros({C, T, S});
    g.segment_seconds = segment_seconds;
    g.sample_rate_hz = series.sample_rate_hz;
    g.start_sample = start;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t s = 0; s < S; ++s)
          g.cells.at(c, t, s) = series.samples.at(c, start + t * S + s);
    grids.push_back(std::move(g));
  }
  return grids;
}

// Linear-interpolation resampler. Resampling at the source rate returns a
// bitwise-identical copy.
inline MultiChannelSeries resample(const MultiChannelSeries& series, double target_hz) {
  if (target_hz <= 0) throw std::invalid_argument("resample: target rate must be positive");
  MultiChannelSeries out;
  out.sample_rate_hz = target_hz;
  out.channel_ids = series.channel_ids;
  out.second_labels = series.second_labels;
  const std::size_t C = series.channels();
  const std::size_t N = series.length();
  if (target_hz == series.sample_rate_hz) {
    out.samples = series.samples;
    return out;
  }
  const std::size_t M = static_cast<std::size_t>(std::llround(
      static_cast<double>(N) * target_hz / series.sample_rate_hz));
  out.samples = Tensor::zeros({C, M});
  const double step = series.sample_rate_hz / target_hz;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < M; ++i) {
      const double x = static_cast<double>(i) * step;
      const std::size_t i0 = static_cast<std::size_t>(x);
      if (i0 + 1 >= N) {
        out.samples.at(c, i) = series.samples.at(c, N - 1);
        continue;
      }
      const double frac = x - static_cast<double>(i0);
      const double a = series.samples.at(c, i0);
      const double b = series.samples.at(c, i0 + 1);
      out.samples.at(c, i) = a + frac * (b - a);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator

struct SynthConfig {
  std::size_t channels = 4;
  double duration_s = 600.0;
  double sample_rate_hz = 64.0;
  double amplitude = 1.0;
  double base_freq_hz = 2.0;
  double freq_spread = 0.35;      // channel c oscillates at base*(1 + spread*c)
  double coupling = 0.6;          // weight of the shared phase-lagged source
  double phase_lag_s = 0.05;      // per-channel lag of the shared source
  double chirp_rate = 0.5;        // relative frequency ramp across the recording
  double noise_amp = 0.05;
  double burst_rate_per_hour = 0.0;
  double burst_duration_s = 12.0;
  double burst_amp = 4.0;
  double burst_freq_hz = 11.0;
};

struct SynthResult {
  MultiChannelSeries series;
  std::vector<std::pair<double, double>> burst_intervals;
};

inline SynthResult synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.channels == 0 || cfg.duration_s <= 0 || cfg.sample_rate_hz <= 0)
    throw std::invalid_argument("synth_generate: empty geometry");
  const std::size_t C = cfg.channels;
  const std::size_t N = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate_hz));

  Rng phase_rng = Rng::stream_of(seed, 0);
  Rng noise_rng = Rng::stream_of(seed, 1);
  Rng burst_rng = Rng::stream_of(seed, 2);

  const double shared_phase = phase_rng.next_uniform(0.0, 6.283185307179586);
  std::vector<double> chan_phase(C);
  for (std::size_t c = 0; c < C; ++c) chan_phase[c] = phase_rng.next_uniform(0.0, 6.283185307179586);

  // Burst count is deterministic (rate * duration, rounded); placement is
  // random with enforced separation so intervals never merge.
  std::vector<std::pair<double, double>> bursts;
  const std::size_t n_bursts = static_cast<std::size_t>(
      std::llround(cfg.burst_rate_per_hour * cfg.duration_s / 3600.0));
  if (n_bursts > 0) {
    const double gap = 2.0;
    for (std::size_t attempt = 0; attempt < 1000 && bursts.size() < n_bursts; ++attempt) {
      const double start = burst_rng.next_uniform(0.0, cfg.duration_s - cfg.burst_duration_s);
      bool clear = true;
      for (const auto& b : bursts)
        if (start < b.second + gap && b.first - gap < start + cfg.burst_duration_s) clear = false;
      if (clear) bursts.emplace_back(start, start + cfg.burst_duration_s);
    }
    std::sort(bursts.begin(), bursts.end());
  }

  MultiChannelSeries s;
  s.sample_rate_hz = cfg.sample_rate_hz;
  s.samples = Tensor::zeros({C, N});
  for (std::size_t c = 0; c < C; ++c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ch%zu", c);
    s.channel_ids.emplace_back(buf);
  }

  const double two_pi = 6.283185307179586476925286766559;
  auto ramp_phase = [&](double f0, double t) {
    // Instantaneous frequency ramps linearly from f0 to f0*(1+chirp_rate).
    return two_pi * f0 * (t + 0.5 * cfg.chirp_rate * t * t / cfg.duration_s);
  };

  for (std::size_t c = 0; c < C; ++c) {
    const double fc = cfg.base_freq_hz * (1.0 + cfg.freq_spread * static_cast<double>(c));
    for (std::size_t i = 0; i < N; ++i) {
      const double t = static_cast<double>(i) / cfg.sample_rate_hz;
      double v = (1.0 - cfg.coupling) * std::sin(ramp_phase(fc, t) + chan_phase[c]);
      if (cfg.coupling != 0.0) {
        const double tl = t - cfg.phase_lag_s * static_cast<double>(c);
        v += cfg.coupling * std::sin(ramp_phase(cfg.base_freq_hz, tl) + shared_phase);
      }
      v *= cfg.amplitude;
      if (cfg.noise_amp != 0.0) v += cfg.noise_amp * noise_rng.next_gaussian();
      for (const auto& b : bursts) {
        if (t >= b.first && t < b.second) {
          v += cfg.burst_amp * std::sin(two_pi * cfg.burst_freq_hz * t + chan_phase[c]);
          break;
        }
      }
      s.samples.at(c, i) = v;
    }
  }

  s.second_labels.assign(static_cast<std::size_t>(std::ceil(cfg.duration_s)), 0);
  for (const auto& b : bursts) {
    const std::size_t lo = static_cast<std::size_t>(std::floor(b.first));
    const std::size_t hi = std::min(s.second_labels.size(),
                                    static_cast<std::size_t>(std::ceil(b.second)));
    for (std::size_t sec = lo; sec < hi; ++sec) s.second_labels[sec] = 1;
  }

  return SynthResult{std::move(s), std::move(bursts)};
}

// ---------------------------------------------------------------------------
// CSV formats
//
// Series file: one header line
//   # sample_rate_hz=<float> channels=<id1;id2;...>
// then one comma-separated row per sample.
// Interval sidecar: one "<start_s>,<end_s>" line per event.

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& tok, std::size_t line_no) {
  double v = 0.0;
  const char* b = tok.data();
  const char* e = b + tok.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{})
    throw std::runtime_error("line " + std::to_string(line_no) + ": bad number '" + tok + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = s.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(s.substr(pos));
      break;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

inline std::string rstrip(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' ')) s.pop_back();
  return s;
}

}  // namespace detail

inline void save_series_csv(const MultiChannelSeries& s, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << "# sample_rate_hz=" << detail::fmt_double(s.sample_rate_hz) << " channels=";
  for (std::size_t c = 0; c < s.channel_ids.size(); ++c) {
    if (c) f << ';';
    f << s.channel_ids[c];
  }
  f << '\n';
  const std::size_t C = s.channels(), N = s.length();
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t c = 0; c < C; ++c) {
      if (c) f << ',';
      f << detail::fmt_double(s.samples.at(c, i));
    }
    f << '\n';
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline MultiChannelSeries load_series_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error(path + ": empty file");
  line = detail::rstrip(line);
  const std::string head = "# sample_rate_hz=";
  if (line.rfind(head, 0) != 0)
    throw std::runtime_error("line 1: expected '# sample_rate_hz=...' header");
  const std::size_t sp = line.find(" channels=");
  if (sp == std::string::npos) throw std::runtime_error("line 1: missing 'channels=' field");
  MultiChannelSeries s;
  s.sample_rate_hz = detail::parse_double(line.substr(head.size(), sp - head.size()), 1);
  const std::string chan_part = line.substr(sp + 10);
  s.channel_ids = chan_part.empty() ? std::vector<std::string>{} : detail::split(chan_part, ';');
  const std::size_t C = s.channel_ids.size();
  if (C == 0) throw std::runtime_error("line 1: no channels declared");

  std::vector<double> flat;
  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    line = detail::rstrip(line);
    if (line.empty()) continue;
    auto toks = detail::split(line, ',');
    if (toks.size() != C)
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected " +
                               std::to_string(C) + " fields, got " + std::to_string(toks.size()));
    for (const auto& t : toks) flat.push_back(detail::parse_double(t, line_no));
  }
  const std::size_t N = flat.size() / C;
  s.samples = Tensor::zeros({C, N});
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t c = 0; c < C; ++c) s.samples.at(c, i) = flat[i * C + c];
  return s;
}

inline void save_intervals(const std::vector<std::pair<double, double>>& iv,
                           const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& e : iv)
    f << detail::fmt_double(e.first) << ',' << detail::fmt_double(e.second) << '\n';
}

inline std::vector<std::pair<double, double>> load_intervals(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<std::pair<double, double>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    line = detail::rstrip(line);
    if (line.empty()) continue;
    auto toks = detail::split(line, ',');
    if (toks.size() != 2)
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected start,end");
    out.emplace_back(detail::parse_double(toks[0], line_no), detail::parse_double(toks[1], line_no));
  }
  return out;
}

inline std::vector<std::uint8_t> intervals_to_seconds(
    const std::vector<std::pair<double, double>>& iv, double duration_s) {
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(std::ceil(duration_s)), 0);
  for (const auto& e : iv) {
    if (e.second <= e.first) continue;
    const std::size_t lo = static_cast<std::size_t>(std::max(0.0, std::floor(e.first)));
    const std::size_t hi = std::min(labels.size(), static_cast<std::size_t>(std::ceil(e.second)));
    for (std::size_t s = lo; s < hi; ++s) labels[s] = 1;
  }
  return labels;
}

inline void save_second_labels(const std::vector<std::uint8_t>& labels, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  for (auto v : labels) f << int(v) << '\n';
}

inline std::vector<std::uint8_t> load_second_labels(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<std::uint8_t> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    line = detail::rstrip(line);
    if (line.empty()) continue;
    if (line != "0" && line != "1")
      throw std::runtime_error("line " + std::to_string(line_no) + ": labels must be 0 or 1");
    out.push_back(line == "1" ? 1 : 0);
  }
  return out;
}

}  // namespace mvpa

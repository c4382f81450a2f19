#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mvpa/rng.hpp"
#include "mvpa/tensor.hpp"

namespace mvpa {

struct EventList {
  std::vector<std::pair<double, double>> events;  // (start_s, end_s), sorted, disjoint
  double recording_hours = 0.0;
};

inline void validate_events(const EventList& e, const char* who) {
  for (std::size_t i = 0; i < e.events.size(); ++i) {
    if (!(e.events[i].first < e.events[i].second))
      throw std::invalid_argument(std::string(who) + ": event with start >= end");
    if (i > 0 && e.events[i].first < e.events[i - 1].second)
      throw std::invalid_argument(std::string(who) + ": events overlap or are unsorted");
  }
}

// ---------------------------------------------------------------------------
// Episodic post-processing: merge gaps < 300 s, drop events < 20 s, drop
// events with < 5 positive responses. Order fixed; changing it changes output.

struct PostprocessResult {
  EventList events;
  std::vector<std::size_t> supports;  // positive responses per surviving event
};

inline PostprocessResult episodic_postprocess(const EventList& raw,
                                              const std::vector<std::size_t>& positives_per_event) {
  if (raw.events.size() != positives_per_event.size())
    throw std::invalid_argument("episodic_postprocess: events/supports length mismatch");
  validate_events(raw, "episodic_postprocess");

  struct Ev {
    double s, e;
    std::size_t support;
  };
  std::vector<Ev> merged;
  for (std::size_t i = 0; i < raw.events.size(); ++i) {
    const Ev cur{raw.events[i].first, raw.events[i].second, positives_per_event[i]};
    if (!merged.empty() && cur.s - merged.back().e < 300.0) {
      merged.back().e = std::max(merged.back().e, cur.e);
      merged.back().support += cur.support;
    } else {
      merged.push_back(cur);
    }
  }

  PostprocessResult out;
  out.events.recording_hours = raw.recording_hours;
  for (const Ev& ev : merged) {
    if (ev.e - ev.s < 20.0) continue;
    if (ev.support < 5) continue;
    out.events.events.push_back({ev.s, ev.e});
    out.supports.push_back(ev.support);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Online thresholding: at each second s the detector looks at the trailing
// 10-second window [s-9, s] and fires when it holds >= 3 positive seconds.
// Consecutive firing seconds form one event, so a clean onset is reported
// about 3 seconds late.

inline EventList online_threshold(const std::vector<std::uint8_t>& labels) {
  const std::size_t n = labels.size();
  EventList out;
  out.recording_hours = static_cast<double>(n) / 3600.0;
  std::size_t run_start = 0;
  bool in_run = false;
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t lo = s >= 9 ? s - 9 : 0;
    std::size_t pos = 0;
    for (std::size_t i = lo; i <= s; ++i) pos += labels[i] ? 1 : 0;
    const bool fire = pos >= 3;
    if (fire && !in_run) {
      run_start = s;
      in_run = true;
    } else if (!fire && in_run) {
      out.events.push_back({static_cast<double>(run_start), static_cast<double>(s)});
      in_run = false;
    }
  }
  if (in_run) out.events.push_back({static_cast<double>(run_start), static_cast<double>(n)});
  return out;
}

// Positive seconds covered by each event, for feeding the episodic filter.
inline std::vector<std::size_t> event_supports(const EventList& events,
                                               const std::vector<std::uint8_t>& labels) {
  std::vector<std::size_t> out;
  for (const auto& [s, e] : events.events) {
    const std::size_t lo = static_cast<std::size_t>(std::max(0.0, std::floor(s)));
    const std::size_t hi = std::min(labels.size(), static_cast<std::size_t>(std::ceil(e)));
    std::size_t n = 0;
    for (std::size_t i = lo; i < hi; ++i) n += labels[i] ? 1 : 0;
    out.push_back(n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cohen's kappa with marginal-product chance agreement. Degenerate case where
// chance agreement is 1 (both raters constant) maps to 1 on full agreement,
// else 0.

inline double cohen_kappa(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cohen_kappa: length mismatch");
  if (a.empty()) throw std::invalid_argument("cohen_kappa: empty labels");
  const double n = static_cast<double>(a.size());
  std::map<std::uint8_t, double> ca, cb;
  double agree = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca[a[i]] += 1.0;
    cb[b[i]] += 1.0;
    if (a[i] == b[i]) agree += 1.0;
  }
  const double po = agree / n;
  double pe = 0.0;
  for (const auto& [k, na] : ca) {
    auto it = cb.find(k);
    if (it != cb.end()) pe += (na / n) * (it->second / n);
  }
  if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

// ---------------------------------------------------------------------------
// Sampled kappa: each iteration draws n_segments positions with replacement,
// computes kappa on the sample, and folds it into a running mean.

struct KappaEstimate {
  double mean = 0.0;
  std::vector<double> per_iteration;  // kappa of each sample
  std::vector<double> running_mean;
  std::vector<double> running_delta;  // |mean_i - mean_{i-1}|, first entry 0
};

inline KappaEstimate kappa_estimate(const std::vector<std::uint8_t>& pred,
                                    const std::vector<std::uint8_t>& truth,
                                    std::size_t n_segments = 300, std::size_t iterations = 250,
                                    std::uint64_t seed = 0) {
  if (pred.size() != truth.size()) throw std::invalid_argument("kappa_estimate: length mismatch");
  if (pred.empty()) throw std::invalid_argument("kappa_estimate: empty labels");
  KappaEstimate out;
  double sum = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    Rng rng(seed, 0xCA44A + it);
    std::vector<std::uint8_t> sa(n_segments), sb(n_segments);
    for (std::size_t j = 0; j < n_segments; ++j) {
      const std::size_t idx = static_cast<std::size_t>(rng.next_below(pred.size()));
      sa[j] = pred[idx];
      sb[j] = truth[idx];
    }
    const double k = cohen_kappa(sa, sb);
    out.per_iteration.push_back(k);
    sum += k;
    const double mean = sum / static_cast<double>(it + 1);
    out.running_delta.push_back(out.running_mean.empty()
                                    ? 0.0
                                    : std::abs(mean - out.running_mean.back()));
    out.running_mean.push_back(mean);
  }
  out.mean = out.running_mean.empty() ? 0.0 : out.running_mean.back();
  return out;
}

// ---------------------------------------------------------------------------
// Event-level detection metrics with any-overlap matching.

struct DetectionMetrics {
  double f1 = 0.0;
  double sensitivity = 0.0;
  double precision = 0.0;
  double fp_per_hour = 0.0;
  std::size_t true_positives = 0;   // truth events overlapped by some prediction
  std::size_t false_positives = 0;  // predictions overlapping no truth event
};

inline bool events_overlap(const std::pair<double, double>& a, const std::pair<double, double>& b) {
  return a.first < b.second && b.first < a.second;
}

inline DetectionMetrics detection_metrics(const EventList& pred, const EventList& truth,
                                          double recording_hours) {
  if (recording_hours <= 0.0)
    throw std::invalid_argument("detection_metrics: recording_hours must be positive");
  DetectionMetrics m;
  std::size_t matched_pred = 0;
  for (const auto& p : pred.events) {
    bool hit = false;
    for (const auto& t : truth.events)
      if (events_overlap(p, t)) {
        hit = true;
        break;
      }
    if (hit)
      ++matched_pred;
    else
      ++m.false_positives;
  }
  for (const auto& t : truth.events)
    for (const auto& p : pred.events)
      if (events_overlap(p, t)) {
        ++m.true_positives;
        break;
      }
  m.sensitivity = truth.events.empty()
                      ? 0.0
                      : static_cast<double>(m.true_positives) / static_cast<double>(truth.events.size());
  m.precision = pred.events.empty()
                    ? 0.0
                    : static_cast<double>(matched_pred) / static_cast<double>(pred.events.size());
  m.f1 = (m.precision + m.sensitivity > 0.0)
             ? 2.0 * m.precision * m.sensitivity / (m.precision + m.sensitivity)
             : 0.0;
  m.fp_per_hour = static_cast<double>(m.false_positives) / recording_hours;
  return m;
}

// ---------------------------------------------------------------------------
// Forecast metrics

struct ForecastMetrics {
  double mse = 0.0;
  double mae = 0.0;
};

inline ForecastMetrics forecast_metrics(const Tensor& pred, const Tensor& truth) {
  if (!pred.same_shape(truth)) throw std::invalid_argument("forecast_metrics: shape mismatch");
  ForecastMetrics m;
  const std::size_t n = pred.numel();
  if (n == 0) return m;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = pred.data[i] - truth.data[i];
    m.mse += e * e;
    m.mae += std::abs(e);
  }
  m.mse /= static_cast<double>(n);
  m.mae /= static_cast<double>(n);
  return m;
}

// Conventional agreement bands for a kappa value.
inline const char* landis_koch_band(double kappa) {
  if (kappa < 0.0) return "poor";
  if (kappa <= 0.20) return "slight";
  if (kappa <= 0.40) return "fair";
  if (kappa <= 0.60) return "moderate";
  if (kappa <= 0.80) return "substantial";
  return "almost perfect";
}

}  // namespace mvpa

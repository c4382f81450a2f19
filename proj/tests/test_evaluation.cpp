#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>

#include "mvpa/evaluation.hpp"
#include "mvpa/rng.hpp"
#include "oracles.hpp"

using namespace mvpa;

namespace {

EventList make_events(std::vector<std::pair<double, double>> ev, double hours = 1.0) {
  EventList out;
  out.events = std::move(ev);
  out.recording_hours = hours;
  return out;
}

// Random sorted disjoint event list with supports.
void random_events(Rng& rng, EventList& ev, std::vector<std::size_t>& supports) {
  ev.events.clear();
  supports.clear();
  double t = rng.next_uniform(0.0, 100.0);
  const std::size_t n = 1 + rng.next_below(8);
  for (std::size_t i = 0; i < n; ++i) {
    const double len = 1.0 + rng.next_uniform(0.0, 100.0);
    ev.events.push_back({t, t + len});
    supports.push_back(rng.next_below(12));
    t += len + rng.next_uniform(0.0, 600.0);
  }
  ev.recording_hours = t / 3600.0;
}

std::vector<std::pair<double, double>> fire_runs(const std::vector<bool>& fire) {
  std::vector<std::pair<double, double>> runs;
  std::size_t start = 0;
  bool in = false;
  for (std::size_t s = 0; s < fire.size(); ++s) {
    if (fire[s] && !in) {
      start = s;
      in = true;
    } else if (!fire[s] && in) {
      runs.push_back({static_cast<double>(start), static_cast<double>(s)});
      in = false;
    }
  }
  if (in) runs.push_back({static_cast<double>(start), static_cast<double>(fire.size())});
  return runs;
}

}  // namespace

TEST_CASE("event validation") {
  CHECK_NOTHROW(validate_events(make_events({{0, 5}, {10, 20}}), "t"));
  CHECK_THROWS_AS(validate_events(make_events({{5, 5}}), "t"), std::invalid_argument);
  CHECK_THROWS_AS(validate_events(make_events({{0, 10}, {5, 20}}), "t"), std::invalid_argument);
  CHECK_THROWS_AS(validate_events(make_events({{10, 20}, {0, 5}}), "t"), std::invalid_argument);
}

TEST_CASE("episodic filter: merge, then length, then support") {
  SECTION("close events merge and pool their support") {
    const auto res = episodic_postprocess(make_events({{0, 30}, {200, 240}}), {3, 3});
    REQUIRE(res.events.events.size() == 1);
    CHECK(res.events.events[0].first == 0.0);
    CHECK(res.events.events[0].second == 240.0);
    CHECK(res.supports == std::vector<std::size_t>{6});
  }
  SECTION("short events are removed") {
    const auto res = episodic_postprocess(make_events({{0, 15}}), {9});
    CHECK(res.events.events.empty());
  }
  SECTION("weakly supported events are removed") {
    const auto res = episodic_postprocess(make_events({{0, 30}}), {4});
    CHECK(res.events.events.empty());
    const auto keep = episodic_postprocess(make_events({{0, 30}}), {5});
    CHECK(keep.events.events.size() == 1);
  }
  SECTION("only gaps under five minutes merge") {
    const auto res =
        episodic_postprocess(make_events({{0, 10}, {100, 130}, {500, 520}}), {2, 3, 6});
    REQUIRE(res.events.events.size() == 2);
    CHECK(res.events.events[0] == std::pair<double, double>{0.0, 130.0});
    CHECK(res.supports[0] == 5);
    CHECK(res.events.events[1] == std::pair<double, double>{500.0, 520.0});
  }
  SECTION("gap of exactly 300 seconds stays separate") {
    const auto res = episodic_postprocess(make_events({{0, 30}, {330, 360}}), {5, 5});
    CHECK(res.events.events.size() == 2);
  }
  SECTION("empty input") {
    const auto res = episodic_postprocess(make_events({}), {});
    CHECK(res.events.events.empty());
  }
  SECTION("validation") {
    CHECK_THROWS_AS(episodic_postprocess(make_events({{0, 30}}), {1, 2}),
                    std::invalid_argument);
    CHECK_THROWS_AS(episodic_postprocess(make_events({{0, 30}, {10, 40}}), {5, 5}),
                    std::invalid_argument);
  }
}

TEST_CASE("episodic filter is idempotent") {
  Rng rng(77);
  EventList ev;
  std::vector<std::size_t> supports;
  for (int trial = 0; trial < 50; ++trial) {
    random_events(rng, ev, supports);
    const auto once = episodic_postprocess(ev, supports);
    const auto twice = episodic_postprocess(once.events, once.supports);
    CHECK(once.events.events == twice.events.events);
    CHECK(once.supports == twice.supports);
  }
}

TEST_CASE("online threshold hand cases") {
  SECTION("two isolated positives never fire") {
    std::vector<std::uint8_t> labels(40, 0);
    labels[5] = labels[20] = 1;
    CHECK(online_threshold(labels).events.empty());
  }
  SECTION("a ten-second burst yields one event, reported on the third positive") {
    std::vector<std::uint8_t> labels(40, 0);
    for (std::size_t s = 10; s < 20; ++s) labels[s] = 1;
    const EventList ev = online_threshold(labels);
    REQUIRE(ev.events.size() == 1);
    CHECK(ev.events[0].first == 12.0);   // onset 10, detector needs 3 positives
    CHECK(ev.events[0].second == 27.0);  // trailing window drains 7 s after offset
  }
  SECTION("alternating labels keep the window above threshold") {
    std::vector<std::uint8_t> labels(20, 0);
    for (std::size_t s = 1; s < 20; s += 2) labels[s] = 1;
    const EventList ev = online_threshold(labels);
    REQUIRE(ev.events.size() == 1);
    CHECK(ev.events[0].first == 5.0);
    CHECK(ev.events[0].second == 20.0);
  }
  SECTION("all quiet") {
    CHECK(online_threshold(std::vector<std::uint8_t>(30, 0)).events.empty());
    CHECK(online_threshold({}).events.empty());
  }
  SECTION("hours follow the label length") {
    CHECK(online_threshold(std::vector<std::uint8_t>(7200, 0)).recording_hours ==
          Catch::Approx(2.0));
  }
}

TEST_CASE("online threshold equals the brute-force window scan") {
  Rng rng(88);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint8_t> labels(50);
    for (auto& l : labels) l = rng.next_double() < 0.3 ? 1 : 0;
    const EventList ev = online_threshold(labels);
    const auto want = fire_runs(oracle::threshold_fires(labels));
    CHECK(ev.events == want);
  }
}

TEST_CASE("event supports count covered positive seconds") {
  std::vector<std::uint8_t> labels(10, 0);
  labels[2] = labels[3] = labels[7] = 1;
  const auto sup = event_supports(make_events({{2, 5}, {6, 9}}), labels);
  CHECK(sup == std::vector<std::size_t>{2, 1});
}

TEST_CASE("kappa closed forms") {
  CHECK(cohen_kappa({1, 1, 0, 0}, {1, 1, 0, 0}) == Catch::Approx(1.0));
  CHECK(cohen_kappa({1, 1, 0, 0}, {1, 0, 1, 0}) == Catch::Approx(0.0).margin(1e-15));
  CHECK(cohen_kappa({1, 1, 1, 1}, {1, 1, 1, 1}) == 1.0);   // both constant, agreeing
  CHECK(cohen_kappa({1, 1}, {1, 0}) == 0.0);               // one constant
  CHECK(cohen_kappa({1, 1}, {0, 0}) == 0.0);               // constant, disjoint
  CHECK_THROWS_AS(cohen_kappa({1}, {1, 0}), std::invalid_argument);
  CHECK_THROWS_AS(cohen_kappa({}, {}), std::invalid_argument);
}

TEST_CASE("kappa equals the contingency-table oracle and is symmetric") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::uint8_t> a(60), b(60);
    for (std::size_t i = 0; i < 60; ++i) {
      a[i] = rng.next_double() < 0.4 ? 1 : 0;
      b[i] = rng.next_double() < 0.6 ? 1 : 0;
    }
    const double k = cohen_kappa(a, b);
    CHECK(k == Catch::Approx(oracle::kappa_contingency(a, b)).margin(1e-12));
    CHECK(k == Catch::Approx(cohen_kappa(b, a)).margin(1e-12));
    CHECK(k >= -1.0);
    CHECK(k <= 1.0);
  }
}

TEST_CASE("sampled kappa: perfect agreement stays at one") {
  std::vector<std::uint8_t> labels(500);
  Rng rng(111);
  for (auto& l : labels) l = rng.next_double() < 0.5 ? 1 : 0;
  const KappaEstimate est = kappa_estimate(labels, labels, 300, 50, 3);
  CHECK(est.mean == 1.0);
  for (double k : est.per_iteration) CHECK(k == 1.0);
  for (double d : est.running_delta) CHECK(d == 0.0);
}

TEST_CASE("sampled kappa: independent raters land near zero") {
  Rng rng(112);
  std::vector<std::uint8_t> a(10000), b(10000);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.next_double() < 0.5 ? 1 : 0;
    b[i] = rng.next_double() < 0.5 ? 1 : 0;
  }
  const KappaEstimate est = kappa_estimate(a, b, 300, 250, 4);
  CHECK(std::abs(est.mean) < 0.05);
  CHECK(est.per_iteration.size() == 250);
  CHECK(est.running_mean.size() == 250);
  CHECK(est.running_mean.back() == est.mean);
  CHECK(est.running_delta.front() == 0.0);
  CHECK(est.running_delta.back() < 0.01);  // the mean has settled
}

TEST_CASE("sampled kappa is deterministic in the seed") {
  std::vector<std::uint8_t> a{1, 0, 1, 1, 0, 0, 1, 0}, b{1, 0, 0, 1, 0, 1, 1, 0};
  const KappaEstimate e1 = kappa_estimate(a, b, 50, 20, 9);
  const KappaEstimate e2 = kappa_estimate(a, b, 50, 20, 9);
  CHECK(e1.per_iteration == e2.per_iteration);
  const KappaEstimate e3 = kappa_estimate(a, b, 50, 20, 10);
  CHECK(e1.per_iteration != e3.per_iteration);
  CHECK_THROWS_AS(kappa_estimate({}, {}, 10, 5, 0), std::invalid_argument);
}

TEST_CASE("detection metrics hand cases") {
  SECTION("perfect prediction") {
    const EventList t = make_events({{0, 10}, {50, 60}}, 2.0);
    const DetectionMetrics m = detection_metrics(t, t, 2.0);
    CHECK(m.f1 == 1.0);
    CHECK(m.sensitivity == 1.0);
    CHECK(m.precision == 1.0);
    CHECK(m.fp_per_hour == 0.0);
    CHECK(m.true_positives == 2);
    CHECK(m.false_positives == 0);
  }
  SECTION("no predictions") {
    const DetectionMetrics m =
        detection_metrics(make_events({}), make_events({{0, 10}}), 1.0);
    CHECK(m.f1 == 0.0);
    CHECK(m.sensitivity == 0.0);
    CHECK(m.fp_per_hour == 0.0);
  }
  SECTION("one hit, one spurious, two hours") {
    const DetectionMetrics m = detection_metrics(make_events({{0, 10}, {50, 60}}),
                                                 make_events({{5, 8}}), 2.0);
    CHECK(m.true_positives == 1);
    CHECK(m.false_positives == 1);
    CHECK(m.sensitivity == 1.0);
    CHECK(m.precision == 0.5);
    CHECK(m.f1 == Catch::Approx(2.0 / 3.0));
    CHECK(m.fp_per_hour == 0.5);
  }
  SECTION("one prediction covering two truths") {
    const DetectionMetrics m = detection_metrics(make_events({{0, 100}}),
                                                 make_events({{10, 20}, {50, 70}}), 1.0);
    CHECK(m.true_positives == 2);
    CHECK(m.sensitivity == 1.0);
    CHECK(m.precision == 1.0);
    CHECK(m.f1 == 1.0);
  }
  SECTION("touching events do not overlap") {
    CHECK(!events_overlap({0.0, 5.0}, {5.0, 10.0}));
    CHECK(events_overlap({0.0, 5.1}, {5.0, 10.0}));
    const DetectionMetrics m =
        detection_metrics(make_events({{0, 5}}), make_events({{5, 10}}), 1.0);
    CHECK(m.true_positives == 0);
    CHECK(m.false_positives == 1);
  }
  SECTION("order of event lists does not matter") {
    const EventList p = make_events({{0, 10}, {30, 40}, {80, 90}});
    const EventList t = make_events({{8, 12}, {85, 95}});
    const DetectionMetrics m = detection_metrics(p, t, 1.0);
    CHECK(m.true_positives == 2);
    CHECK(m.false_positives == 1);
  }
  SECTION("recording length must be positive") {
    CHECK_THROWS_AS(detection_metrics(make_events({}), make_events({}), 0.0),
                    std::invalid_argument);
  }
}

TEST_CASE("forecast metrics") {
  CHECK(forecast_metrics(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})).mse == 0.0);
  const Tensor pred = Tensor::full({2, 2}, 3.0);
  const Tensor truth = Tensor::full({2, 2}, 1.0);
  const ForecastMetrics m = forecast_metrics(pred, truth);
  CHECK(m.mse == 4.0);
  CHECK(m.mae == 2.0);
  CHECK_THROWS_AS(forecast_metrics(Tensor::zeros({2}), Tensor::zeros({3})),
                  std::invalid_argument);

  Rng rng(13);
  Tensor a = Tensor::zeros({4, 5}), b = Tensor::zeros({4, 5});
  for (double& v : a.data) v = rng.next_gaussian();
  for (double& v : b.data) v = rng.next_gaussian();
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    se += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    ae += std::abs(a.data[i] - b.data[i]);
  }
  const ForecastMetrics r = forecast_metrics(a, b);
  CHECK(r.mse == Catch::Approx(se / 20.0).epsilon(1e-14));
  CHECK(r.mae == Catch::Approx(ae / 20.0).epsilon(1e-14));
}

TEST_CASE("agreement bands") {
  CHECK(std::string(landis_koch_band(-0.2)) == "poor");
  CHECK(std::string(landis_koch_band(0.0)) == "slight");
  CHECK(std::string(landis_koch_band(0.20)) == "slight");
  CHECK(std::string(landis_koch_band(0.21)) == "fair");
  CHECK(std::string(landis_koch_band(0.40)) == "fair");
  CHECK(std::string(landis_koch_band(0.55)) == "moderate");
  CHECK(std::string(landis_koch_band(0.80)) == "substantial");
  CHECK(std::string(landis_koch_band(0.81)) == "almost perfect");
  CHECK(std::string(landis_koch_band(1.0)) == "almost perfect");
}

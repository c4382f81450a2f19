#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "mvpa/series.hpp"

using namespace mvpa;

namespace {

MultiChannelSeries ramp_series(std::size_t C, std::size_t N, double rate) {
  MultiChannelSeries s;
  s.sample_rate_hz = rate;
  s.samples = Tensor::zeros({C, N});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < N; ++i) s.samples.at(c, i) = 100.0 * c + i;
  for (std::size_t c = 0; c < C; ++c) s.channel_ids.push_back("ch" + std::to_string(c));
  return s;
}

std::string temp_path(const char* name) {
  return std::string("test_tmp_") + name;
}

}  // namespace

TEST_CASE("segment splits windows on the stride grid") {
  const MultiChannelSeries s = ramp_series(2, 640, 64.0);
  const auto grids = segment(s, 10.0, 1.0, 5.0);
  REQUIRE(grids.size() == 1);  // starts: 0 only (320 + 640 > 640)
  CHECK(grids[0].channels() == 2);
  CHECK(grids[0].segments() == 10);
  CHECK(grids[0].segment_samples() == 64);
  CHECK(grids[0].start_sample == 0);

  const auto more = segment(s, 5.0, 1.0, 5.0);
  REQUIRE(more.size() == 2);
  CHECK(more[1].start_sample == 320);
  // cell values are exact slices of the source
  CHECK(more[1].cells.at(1, 2, 3) == s.samples.at(1, 320 + 2 * 64 + 3));
}

TEST_CASE("segment rejects bad geometry") {
  const MultiChannelSeries s = ramp_series(1, 64, 64.0);
  CHECK_THROWS_AS(segment(s, 10.0, 3.0, 5.0), std::invalid_argument);  // 10/3 not integer
  CHECK_THROWS_AS(segment(s, 0.0, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(segment(s, 10.0, 1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(segment(s, 10.0, 0.001, 1.0), std::invalid_argument);  // segment < one sample
}

TEST_CASE("resample at the source rate is a bitwise copy") {
  const MultiChannelSeries s = ramp_series(2, 100, 64.0);
  const MultiChannelSeries r = resample(s, 64.0);
  CHECK(bitwise_equal(r.samples, s.samples));
  CHECK(r.sample_rate_hz == 64.0);
}

TEST_CASE("resample interpolates a ramp exactly") {
  const MultiChannelSeries s = ramp_series(1, 65, 64.0);
  const MultiChannelSeries r = resample(s, 128.0);
  REQUIRE(r.length() == 130);
  for (std::size_t i = 0; i + 2 < r.length(); ++i)
    CHECK(r.samples.at(0, i) == Catch::Approx(0.5 * i).margin(1e-12));
}

TEST_CASE("synthetic generator is seed deterministic") {
  SynthConfig cfg;
  cfg.channels = 3;
  cfg.duration_s = 30.0;
  const SynthResult a = synth_generate(cfg, 11);
  const SynthResult b = synth_generate(cfg, 11);
  const SynthResult c = synth_generate(cfg, 12);
  CHECK(bitwise_equal(a.series.samples, b.series.samples));
  CHECK_FALSE(bitwise_equal(a.series.samples, c.series.samples));
  CHECK(a.series.length() == 30 * 64);
  CHECK(a.series.channels() == 3);
}

TEST_CASE("synthetic bursts are counted, separated, in range, and labeled") {
  SynthConfig cfg;
  cfg.channels = 2;
  cfg.duration_s = 1800.0;
  cfg.burst_rate_per_hour = 12.0;
  cfg.burst_duration_s = 10.0;
  const SynthResult r = synth_generate(cfg, 5);
  CHECK(r.burst_intervals.size() == 6);  // 12/h over half an hour
  for (std::size_t i = 0; i < r.burst_intervals.size(); ++i) {
    const auto& [s0, s1] = r.burst_intervals[i];
    CHECK(s0 >= 0.0);
    CHECK(s1 <= cfg.duration_s);
    CHECK(s1 - s0 == Catch::Approx(10.0));
    if (i > 0) CHECK(s0 >= r.burst_intervals[i - 1].second + 2.0);
  }
  // labels mark exactly the covered seconds
  const auto labels = r.series.second_labels;
  REQUIRE(labels.size() == 1800);
  const auto expect = intervals_to_seconds(r.burst_intervals, cfg.duration_s);
  CHECK(labels == expect);
}

TEST_CASE("series csv round trip is bitwise") {
  SynthConfig cfg;
  cfg.channels = 2;
  cfg.duration_s = 5.0;
  const MultiChannelSeries s = synth_generate(cfg, 3).series;
  const std::string path = temp_path("series.csv");
  save_series_csv(s, path);
  const MultiChannelSeries r = load_series_csv(path);
  CHECK(bitwise_equal(r.samples, s.samples));
  CHECK(r.sample_rate_hz == s.sample_rate_hz);
  CHECK(r.channel_ids == s.channel_ids);
  std::remove(path.c_str());
}

TEST_CASE("malformed csv reports the line") {
  const std::string path = temp_path("bad.csv");
  {
    std::ofstream f(path);
    f << "# sample_rate_hz=64 channels=a;b\n1.0,2.0\nnope,3.0\n";
  }
  try {
    load_series_csv(path);
    FAIL("expected parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("interval and label sidecars round trip") {
  const std::vector<std::pair<double, double>> iv{{1.5, 4.0}, {10.0, 12.25}};
  const std::string path = temp_path("iv.csv");
  save_intervals(iv, path);
  const auto back = load_intervals(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].first == 1.5);
  CHECK(back[1].second == 12.25);
  std::remove(path.c_str());

  const std::vector<std::uint8_t> labels{0, 1, 1, 0, 1};
  const std::string lpath = temp_path("labels.csv");
  save_second_labels(labels, lpath);
  CHECK(load_second_labels(lpath) == labels);
  std::remove(lpath.c_str());
}

TEST_CASE("intervals_to_seconds covers partially overlapped seconds") {
  const auto labels = intervals_to_seconds({{1.5, 3.2}}, 6.0);
  const std::vector<std::uint8_t> expect{0, 1, 1, 1, 0, 0};
  CHECK(labels == expect);
}

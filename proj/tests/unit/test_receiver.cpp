#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "airqkd/polarization.hpp"
#include "airqkd/receiver.hpp"

using namespace airqkd;
using namespace airqkd::polarization;
using namespace airqkd::receiver;

TEST_CASE("channel probabilities follow the Born rule with contrast leak") {
  AnalyzerConfig a;
  a.contrast = {532.0, 532.0, 532.0, 532.0};

  auto ph = channel_probabilities(kH, a);
  CHECK(ph[0] + ph[1] + ph[2] + ph[3] == doctest::Approx(1.0).epsilon(1e-12));
  // Conditioned on the H/V basis, H wins with 532/533.
  CHECK(ph[0] / (ph[0] + ph[1]) == doctest::Approx(532.0 / 533.0).epsilon(1e-9));

  // Conjugate basis splits evenly.
  auto pd = channel_probabilities(kD, a);
  CHECK(pd[0] == doctest::Approx(pd[1]).epsilon(1e-9));

  // Depolarized light is flat across channels at ideal contrast.
  AnalyzerConfig ideal;
  ideal.contrast = {1e12, 1e12, 1e12, 1e12};
  auto pm = channel_probabilities(Stokes{0, 0, 0}, ideal);
  for (double p : pm) CHECK(p == doctest::Approx(0.25).epsilon(1e-9));

  // Intrinsic error e and contrast C combine to e + (1-e)/(1+C) within the
  // e/(1+C) cross term.
  double e = 0.03, C = 800.0;
  AnalyzerConfig ac;
  ac.contrast = {C, C, C, C};
  Stokes tilted{1.0 - 2.0 * e, 0.0, 0.0};
  auto pt = channel_probabilities(tilted, ac);
  double qber = pt[1] / (pt[0] + pt[1]);
  CHECK(qber == doctest::Approx(e + (1.0 - e) / (1.0 + C)).epsilon(2e-3));
}

TEST_CASE("sampled measurements match their analytic distribution") {
  AnalyzerConfig a;
  a.contrast = {532.0, 900.0, 1500.0, 2577.0};
  a.basis_split = 0.5;
  std::mt19937_64 rng(101);
  Stokes s{0.6, -0.5, 0.4};  // arbitrary partially polarized state
  auto p = channel_probabilities(s, a);
  const int n = 200000;
  std::array<int, 4> counts{};
  for (int i = 0; i < n; ++i) ++counts[static_cast<int>(measure_polarization(s, a, rng))];
  for (int ch = 0; ch < 4; ++ch) {
    double expect = p[ch];
    double sigma = std::sqrt(expect * (1.0 - expect) / n);
    CHECK(std::abs(counts[ch] / static_cast<double>(n) - expect) < 5.0 * sigma + 1e-9);
  }
}

TEST_CASE("dark counts alone appear at the configured Poisson rate") {
  AnalyzerConfig a;
  DetectorConfig d;
  std::mt19937_64 rng(7);
  auto events = detect_stream({}, a, d, 0.0, 1.0, 0.0, rng);
  // Mean 285 with sigma ~17; a 5-sigma window is [200, 370].
  CHECK(events.size() > 200);
  CHECK(events.size() < 370);
  for (std::size_t i = 1; i < events.size(); ++i) CHECK(events[i].tag >= events[i - 1].tag);

  // Background splits across all four channels.
  std::array<int, 4> per{};
  for (const auto& e : events) ++per[static_cast<int>(e.channel)];
  for (int c : per) CHECK(c > 20);
}

TEST_CASE("dead time drops close pairs on the same detector") {
  AnalyzerConfig a;
  a.contrast = {1e9, 1e9, 1e9, 1e9};
  DetectorConfig d;
  d.efficiency = 1.0;
  d.dark_rate_per_detector_hz = 0.0;
  d.timing_jitter_sigma_s = 0.0;
  std::mt19937_64 rng(3);
  // Two H photons 0.4 us apart, then one 1.5 us later.
  std::vector<Arrival> arrivals{{1e-3, kH}, {1e-3 + 0.4e-6, kH}, {1e-3 + 1.9e-6, kH}};
  auto events = detect_stream(arrivals, a, d, 0.0, 1.0, 0.0, rng);
  REQUIRE(events.size() == 2);
  CHECK(events[0].channel == Channel::H);
  double t0 = events[0].tag * d.tag_resolution_s;
  double t1 = events[1].tag * d.tag_resolution_s;
  CHECK(t1 - t0 >= d.dead_time_s);
}

TEST_CASE("tags quantize to the 78 ps grid and round-trip") {
  DetectorConfig d;
  CHECK(d.tag_resolution_s == doctest::Approx(78.125e-12));
  AnalyzerConfig a;
  DetectorConfig clean = d;
  clean.efficiency = 1.0;
  clean.dark_rate_per_detector_hz = 0.0;
  clean.timing_jitter_sigma_s = 0.0;
  std::mt19937_64 rng(5);
  std::vector<Arrival> arrivals{{12345.0 * 78.125e-12, kH}, {0.5, kD}};
  auto events = detect_stream(arrivals, a, clean, 0.0, 1.0, 0.0, rng);
  REQUIRE(events.size() == 2);
  CHECK(events[0].tag == 12345);
  // Round trip tag -> time -> tag.
  for (const auto& e : events) {
    double t = e.tag * clean.tag_resolution_s;
    CHECK(static_cast<std::uint64_t>(std::llround(t / clean.tag_resolution_s)) == e.tag);
  }
}

TEST_CASE("detect stream is deterministic per seed and window-bounded") {
  AnalyzerConfig a;
  DetectorConfig d;
  std::vector<Arrival> arrivals;
  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < 5000; ++i) arrivals.push_back({u(gen), kD});
  std::sort(arrivals.begin(), arrivals.end(),
            [](const Arrival& x, const Arrival& y) { return x.t_s < y.t_s; });

  std::mt19937_64 r1(77), r2(77);
  auto e1 = detect_stream(arrivals, a, d, 0.5, 1.5, 100.0, r1);
  auto e2 = detect_stream(arrivals, a, d, 0.5, 1.5, 100.0, r2);
  REQUIRE(e1.size() == e2.size());
  for (std::size_t i = 0; i < e1.size(); ++i) {
    CHECK(e1[i].tag == e2[i].tag);
    CHECK(e1[i].channel == e2[i].channel);
  }
  for (const auto& e : e1) {
    double t = e.tag * d.tag_resolution_s;
    CHECK(t >= 0.5 - 1e-8);
    CHECK(t <= 1.5 + 1e-8);
  }
}

TEST_CASE("time-tag files round-trip through binary and sidecar") {
  std::vector<DetectionEvent> events{
      {100, Channel::H}, {2000, Channel::A}, {2000, Channel::D}, {1u << 30, Channel::V}};
  auto dir = std::filesystem::temp_directory_path() / "airqkd_test_tags";
  std::filesystem::create_directories(dir);
  std::string prefix = (dir / "tags").string();
  write_time_tags(prefix, events, 78.125e-12, 0.0);
  TimeTagFile back = read_time_tags(prefix);
  CHECK(back.tag_resolution_s == doctest::Approx(78.125e-12));
  REQUIRE(back.events.size() == events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    CHECK(back.events[i].tag == events[i].tag);
    CHECK(back.events[i].channel == events[i].channel);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("receiver config validation") {
  AnalyzerConfig a;
  a.contrast[2] = 0.5;
  CHECK_THROWS_AS(a.validate(), std::invalid_argument);
  DetectorConfig d;
  d.efficiency = 0.0;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  d = DetectorConfig{};
  d.tag_resolution_s = 0.0;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
}

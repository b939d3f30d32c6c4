#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "airqkd/constants.hpp"
#include "airqkd/distill.hpp"
#include "airqkd/kinematics.hpp"
#include "airqkd/rng.hpp"
#include "airqkd/transmitter.hpp"

using namespace airqkd;
using distill::correlate;
using distill::CorrelationConfig;

namespace {

struct SyntheticStream {
  std::vector<receiver::DetectionEvent> detections;
  std::vector<std::int64_t> true_slot;  // absolute emitted slot per detection
};

// Thin the 400 MHz slot grid down to a detection stream: each non-vacuum slot
// fires with probability proportional to its mean photon number, the tag is
// slot start + time of flight + clock offset/drift + Gaussian jitter.
SyntheticStream make_stream(const std::vector<transmitter::PulseSlot>& table,
                            const CorrelationConfig& cfg, double duration_s,
                            double p_signal_slot, double offset_s, double drift,
                            double jitter_s,
                            const std::vector<std::pair<double, double>>& tof,
                            double background_hz, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> exp_gap(1.0);
  std::normal_distribution<double> jit(0.0, jitter_s);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  auto tof_at = [&](double t) {
    if (t <= tof.front().first) return tof.front().second;
    if (t >= tof.back().first) return tof.back().second;
    std::size_t i = 1;
    while (tof[i].first < t) ++i;
    double f = (t - tof[i - 1].first) / (tof[i].first - tof[i - 1].first);
    return tof[i - 1].second + f * (tof[i].second - tof[i - 1].second);
  };

  const double slot = 1.0 / cfg.clock_hz;
  const auto n_slots = static_cast<std::int64_t>(duration_s / slot);
  SyntheticStream out;

  // geometric skip over slots, then accept by class weight
  std::geometric_distribution<std::int64_t> skip(p_signal_slot > 0 ? p_signal_slot : 0.5);
  std::int64_t k = p_signal_slot > 0 ? skip(rng) : n_slots;
  while (k < n_slots) {
    const auto& ps = table[static_cast<std::size_t>(k) % table.size()];
    double w = ps.intensity == transmitter::Intensity::signal ? 1.0
               : ps.intensity == transmitter::Intensity::decoy ? 0.2
                                                               : 0.0;
    if (uni(rng) < w) {
      double te = static_cast<double>(k) * slot;
      double td = te + tof_at(te) + offset_s + drift * te + jit(rng);
      if (td > 0) {
        out.detections.push_back(
            {static_cast<std::uint64_t>(td / cfg.tag_resolution_s),
             static_cast<receiver::Channel>(rng() % 4)});
        out.true_slot.push_back(k);
      }
    }
    k += 1 + skip(rng);
  }

  auto n_bg = static_cast<std::size_t>(background_hz * duration_s);
  for (std::size_t i = 0; i < n_bg; ++i) {
    double td = uni(rng) * duration_s;
    out.detections.push_back({static_cast<std::uint64_t>(td / cfg.tag_resolution_s),
                              static_cast<receiver::Channel>(rng() % 4)});
    out.true_slot.push_back(-1);
  }
  std::vector<std::size_t> order(out.detections.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return out.detections[a].tag < out.detections[b].tag;
  });
  SyntheticStream sorted;
  for (std::size_t i : order) {
    sorted.detections.push_back(out.detections[i]);
    sorted.true_slot.push_back(out.true_slot[i]);
  }
  return sorted;
}

}  // namespace

TEST_CASE("correlation recovers a constant clock offset within one tag") {
  transmitter::SourceConfig scfg;
  auto table = transmitter::generate_sequence(scfg, 42, 0);
  CorrelationConfig cfg;

  const double tof0 = 5000.0 / kSpeedOfLight;
  std::vector<std::pair<double, double>> tof{{0.0, tof0}, {100.0, tof0}};
  const double offset = 30.95e-9;  // 12 whole slots + 0.45 ns
  auto stream = make_stream(table, cfg, 3.0, 3e-4, offset, 0.0, 0.4e-9, tof, 0.0, 7);
  REQUIRE(stream.detections.size() > 50000);

  auto res = correlate(stream.detections, tof, table, cfg);
  REQUIRE(res.ok);
  CHECK(res.peak_to_floor > 20.0);
  double slot = 1.0 / cfg.clock_hz;
  double phase_err = std::remainder(res.offset_s - offset, slot);
  CHECK(std::abs(phase_err) < cfg.tag_resolution_s);
  CHECK(std::abs(res.drift_s_per_s) < 2e-11);
  CHECK(res.residual_width_s < 1.0e-9);

  // every accepted event must resolve to its true table row
  std::size_t assigned = 0, correct = 0;
  auto L = static_cast<std::int64_t>(table.size());
  for (std::size_t i = 0; i < stream.detections.size(); ++i) {
    if (res.slot_index[i] < 0) continue;
    ++assigned;
    if (((res.slot_index[i] % L) + L) % L == stream.true_slot[i] % L) ++correct;
  }
  CHECK(assigned > stream.detections.size() * 9 / 10);
  // far-tail jitter can land an event inside the neighbouring slot's
  // accept window, so demand near-perfect rather than exact agreement
  CHECK(static_cast<double>(correct) >= 0.999 * static_cast<double>(assigned));
}

TEST_CASE("correlation tracks a linear clock drift") {
  transmitter::SourceConfig scfg;
  auto table = transmitter::generate_sequence(scfg, 42, 0);
  CorrelationConfig cfg;
  const double tof0 = 5000.0 / kSpeedOfLight;
  std::vector<std::pair<double, double>> tof{{0.0, tof0}, {200.0, tof0}};
  const double offset = 0.6e-9, drift = 3.0e-12;
  auto stream = make_stream(table, cfg, 60.0, 2e-5, offset, drift, 0.4e-9, tof, 0.0, 11);

  auto res = correlate(stream.detections, tof, table, cfg);
  REQUIRE(res.ok);
  CHECK(res.drift_s_per_s == doctest::Approx(drift).epsilon(0.10));
  double slot = 1.0 / cfg.clock_hz;
  CHECK(std::abs(std::remainder(res.offset_s - offset, slot)) < 5 * cfg.tag_resolution_s);

  auto L = static_cast<std::int64_t>(table.size());
  std::size_t assigned = 0, correct = 0;
  for (std::size_t i = 0; i < stream.detections.size(); ++i) {
    if (res.slot_index[i] < 0) continue;
    ++assigned;
    if (((res.slot_index[i] % L) + L) % L == stream.true_slot[i] % L) ++correct;
  }
  CHECK(assigned > stream.detections.size() * 9 / 10);
  // far-tail jitter can land an event inside the neighbouring slot's
  // accept window, so demand near-perfect rather than exact agreement
  CHECK(static_cast<double>(correct) >= 0.999 * static_cast<double>(assigned));
}

TEST_CASE("correlation locks through a moving-pass time-of-flight curve") {
  transmitter::SourceConfig scfg;
  auto table = transmitter::generate_sequence(scfg, 42, 0);
  CorrelationConfig cfg;

  kinematics::PassConfig pass;
  pass.kind = kinematics::PassKind::line;
  pass.nominal_distance_m = 7000.0;
  pass.speed_kmh = 200.0;
  pass.duration_s = 25.0;
  auto traj = kinematics::generate_trajectory(pass);
  std::vector<std::pair<double, double>> tof;
  for (const auto& s : traj) tof.push_back({s.t_s, s.tof_s});

  // 40 dB: per-slot signal click probability 1e-4, plus 285 Hz background
  auto stream = make_stream(table, cfg, 25.0, 1e-4, 0.8e-9, 0.0, 0.5e-9, tof, 285.0, 13);
  auto res = correlate(stream.detections, tof, table, cfg);
  REQUIRE(res.ok);
  CHECK(res.residual_width_s < 2.5e-9);

  auto L = static_cast<std::int64_t>(table.size());
  std::size_t sig_assigned = 0, sig_correct = 0;
  for (std::size_t i = 0; i < stream.detections.size(); ++i) {
    if (stream.true_slot[i] < 0 || res.slot_index[i] < 0) continue;
    ++sig_assigned;
    if (((res.slot_index[i] % L) + L) % L == stream.true_slot[i] % L) ++sig_correct;
  }
  CHECK(sig_assigned > 0);
  CHECK(static_cast<double>(sig_correct) / static_cast<double>(sig_assigned) > 0.99);
}

TEST_CASE("correlation on pure background fails but still assigns by geometry") {
  transmitter::SourceConfig scfg;
  auto table = transmitter::generate_sequence(scfg, 42, 0);
  CorrelationConfig cfg;
  std::vector<std::pair<double, double>> tof{{0.0, 1.667e-5}, {10.0, 1.667e-5}};
  auto stream = make_stream(table, cfg, 10.0, 0.0, 0.0, 0.0, 0.4e-9, tof, 800.0, 17);

  auto res = correlate(stream.detections, tof, table, cfg);
  CHECK_FALSE(res.ok);
  CHECK(res.peak_to_floor < 5.0);
  CHECK(res.offset_s == 0.0);
  // geometry-only assignment: nothing is rejected, QBER stays measurable
  for (auto s : res.slot_index) CHECK(s >= 0);
}

TEST_CASE("correlation needs a minimum event count") {
  transmitter::SourceConfig scfg;
  auto table = transmitter::generate_sequence(scfg, 42, 0);
  CorrelationConfig cfg;
  std::vector<std::pair<double, double>> tof{{0.0, 0.0}, {1.0, 0.0}};
  std::vector<receiver::DetectionEvent> few;
  for (int i = 0; i < 40; ++i)
    few.push_back({static_cast<std::uint64_t>(i) * 32000, receiver::Channel::H});
  auto res = correlate(few, tof, table, cfg);
  CHECK_FALSE(res.ok);
  CHECK(res.slot_index.size() == few.size());

  CHECK(correlate({}, tof, table, cfg).slot_index.empty());
  CHECK_THROWS(correlate(few, {}, table, cfg));
  CHECK_THROWS(correlate(few, tof, {}, cfg));
}

TEST_CASE("correlation respects the pattern alignment switch") {
  transmitter::SourceConfig scfg;
  auto table = transmitter::generate_sequence(scfg, 42, 0);
  CorrelationConfig cfg;
  cfg.pattern_alignment = false;
  const double tof0 = 5000.0 / kSpeedOfLight;
  std::vector<std::pair<double, double>> tof{{0.0, tof0}, {100.0, tof0}};
  auto stream = make_stream(table, cfg, 2.0, 3e-4, 0.45e-9, 0.0, 0.4e-9, tof, 0.0, 7);
  auto res = correlate(stream.detections, tof, table, cfg);
  REQUIRE(res.ok);
  CHECK(res.pattern_shift == 0);  // alignment skipped entirely
}

TEST_CASE("correlation is deterministic") {
  transmitter::SourceConfig scfg;
  auto table = transmitter::generate_sequence(scfg, 42, 0);
  CorrelationConfig cfg;
  const double tof0 = 1e-5;
  std::vector<std::pair<double, double>> tof{{0.0, tof0}, {100.0, tof0}};
  auto stream = make_stream(table, cfg, 2.0, 2e-4, 0.3e-9, 0.0, 0.4e-9, tof, 100.0, 23);
  auto a = correlate(stream.detections, tof, table, cfg);
  auto b = correlate(stream.detections, tof, table, cfg);
  CHECK(a.offset_s == b.offset_s);
  CHECK(a.drift_s_per_s == b.drift_s_per_s);
  CHECK(a.slot_index == b.slot_index);
}

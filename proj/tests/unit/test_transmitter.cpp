#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <stdexcept>

#include "airqkd/constants.hpp"
#include "airqkd/polarization.hpp"
#include "airqkd/rng.hpp"
#include "airqkd/transmitter.hpp"

using namespace airqkd;
using namespace airqkd::polarization;
using namespace airqkd::transmitter;

namespace {

struct Quat {
  double w, x, y, z;
};

Quat quat_from_rotation(const Rotation& r) {
  // Shepperd's method.
  double tr = r.m[0][0] + r.m[1][1] + r.m[2][2];
  Quat q;
  if (tr > 0.0) {
    double s = std::sqrt(tr + 1.0) * 2.0;
    q.w = 0.25 * s;
    q.x = (r.m[2][1] - r.m[1][2]) / s;
    q.y = (r.m[0][2] - r.m[2][0]) / s;
    q.z = (r.m[1][0] - r.m[0][1]) / s;
  } else if (r.m[0][0] > r.m[1][1] && r.m[0][0] > r.m[2][2]) {
    double s = std::sqrt(1.0 + r.m[0][0] - r.m[1][1] - r.m[2][2]) * 2.0;
    q.w = (r.m[2][1] - r.m[1][2]) / s;
    q.x = 0.25 * s;
    q.y = (r.m[0][1] + r.m[1][0]) / s;
    q.z = (r.m[0][2] + r.m[2][0]) / s;
  } else if (r.m[1][1] > r.m[2][2]) {
    double s = std::sqrt(1.0 + r.m[1][1] - r.m[0][0] - r.m[2][2]) * 2.0;
    q.w = (r.m[0][2] - r.m[2][0]) / s;
    q.x = (r.m[0][1] + r.m[1][0]) / s;
    q.y = 0.25 * s;
    q.z = (r.m[1][2] + r.m[2][1]) / s;
  } else {
    double s = std::sqrt(1.0 + r.m[2][2] - r.m[0][0] - r.m[1][1]) * 2.0;
    q.w = (r.m[1][0] - r.m[0][1]) / s;
    q.x = (r.m[0][2] + r.m[2][0]) / s;
    q.y = (r.m[1][2] + r.m[2][1]) / s;
    q.z = 0.25 * s;
  }
  return q;
}

// Closed-form decomposition of an arbitrary Stokes rotation into the
// quarter-half-quarter triplet, independent of the production optimizer.
// With the plate convention used here (rotation by -delta about the axis at
// twice the plate angle), the triplet quaternion product works out to
//   w = -[cos(f2-f3) + cos(f2-f1)]/2     z = [sin(f2-f3) + sin(f1-f2)]/2
//   x = [cos(f1-f2+f3) - cos f2]/2       y = [sin(f1-f2+f3) - sin f2]/2
// with f_i = 2 * plate angle, which inverts in closed form.
WaveplateTriplet decompose_triplet(const Rotation& target) {
  Quat q = quat_from_rotation(target);
  double qa = std::atan2(q.z, -q.w);                 // (a-b)/2
  double cp = std::sqrt(q.w * q.w + q.z * q.z);      // cos p, p = (a+b)/2
  double sp = std::sqrt(q.x * q.x + q.y * q.y);      // sin p (>= 0 branch)
  double p = std::atan2(sp, cp);
  double f2 = 0.0;
  if (sp > 1e-12) f2 = p + std::atan2(q.x / sp, -q.y / sp);
  double a = p + qa, b = p - qa;
  double f1 = f2 - b, f3 = f2 - a;
  return {rad2deg(f1) / 2.0, rad2deg(f2) / 2.0, rad2deg(f3) / 2.0};
}

Rotation random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, kPi);
  Vec3 axis{g(rng), g(rng), g(rng)};
  return Rotation::axis_angle(axis, u(rng));
}

}  // namespace

TEST_CASE("waveplates realize the textbook identities") {
  Stokes d = apply_waveplate(kH, 180.0, 22.5);
  CHECK(d.s1 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(d.s2 == doctest::Approx(1.0).epsilon(1e-12));

  Stokes r = apply_waveplate(kH, 90.0, 45.0);
  CHECK(r.s3 == doctest::Approx(1.0).epsilon(1e-12));

  // A plate aligned with the state leaves it alone.
  Stokes h = apply_waveplate(kH, 90.0, 0.0);
  CHECK(h.s1 == doctest::Approx(1.0).epsilon(1e-12));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 180.0);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    Vec3 v{g(rng), g(rng), g(rng)};
    double n = v.norm();
    Stokes s{v.x / n, v.y / n, v.z / n};
    Stokes t = apply_waveplate(s, u(rng), u(rng));
    CHECK(t.norm() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("pulse sequence is deterministic with the right mixture") {
  SourceConfig cfg;
  auto a = generate_sequence(cfg, 17);
  auto b = generate_sequence(cfg, 17);
  REQUIRE(a.size() == 1000);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].intensity == b[i].intensity);
    CHECK(a[i].basis == b[i].basis);
    CHECK(a[i].bit == b[i].bit);
  }

  int ns = 0, nd = 0, nv = 0, nhv = 0;
  for (const auto& s : a) {
    ns += s.intensity == Intensity::signal;
    nd += s.intensity == Intensity::decoy;
    nv += s.intensity == Intensity::vacuum;
    nhv += s.basis == Basis::HV;
  }
  CHECK(std::abs(ns / 1000.0 - 0.80) < 0.03);
  CHECK(std::abs(nd / 1000.0 - 0.14) < 0.03);
  CHECK(std::abs(nv / 1000.0 - 0.06) < 0.03);
  CHECK(std::abs(nhv / 1000.0 - 0.50) < 0.05);

  // Emitted states match their basis/bit labels.
  for (const auto& s : a) {
    const Stokes& expect = kBB84[(s.basis == Basis::HV ? 0 : 2) + s.bit];
    CHECK(s.state.dot(expect) == doctest::Approx(1.0));
  }

  auto c = generate_sequence(cfg, 18);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].bit != c[i].bit || a[i].intensity != c[i].intensity) differs = true;
  CHECK(differs);

  // True-random mode changes the table per epoch; the default does not.
  cfg.true_random_mode = true;
  auto e0 = generate_sequence(cfg, 17, 0);
  auto e1 = generate_sequence(cfg, 17, 1);
  bool epoch_differs = false;
  for (std::size_t i = 0; i < e0.size(); ++i)
    if (e0[i].bit != e1[i].bit || e0[i].intensity != e1[i].intensity) epoch_differs = true;
  CHECK(epoch_differs);
}

TEST_CASE("source config validation") {
  SourceConfig cfg;
  cfg.p_signal = 0.9;  // sums to 1.1
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SourceConfig{};
  cfg.nu = 0.6;  // above mu
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("fiber drift starts at identity and wanders smoothly") {
  FiberDrift drift(5, 300.0, 0.5);
  Rotation r0 = drift.at(0.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(r0.m[i][j] == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));

  // Pairwise Bloch angles are preserved at any time (isometry).
  Rotation r = drift.at(137.5);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double before = kBB84[i].dot(kBB84[j]);
      double after = r.apply(kBB84[i]).dot(r.apply(kBB84[j]));
      CHECK(after == doctest::Approx(before).epsilon(1e-9));
    }

  // The walk moves.
  Rotation r2 = drift.at(200.0);
  double moved = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    moved += 1.0 - r2.apply(kBB84[i]).dot(r.apply(kBB84[i]));
  CHECK(moved > 1e-6);

  // Infinite correlation time pins the rotation at its initial value.
  FiberDrift frozen(5, 1e12, 0.5);
  Rotation rf = frozen.at(500.0);
  for (int i = 0; i < 3; ++i) CHECK(rf.m[i][i] == doctest::Approx(1.0).epsilon(1e-9));

  // Determinism.
  FiberDrift again(5, 300.0, 0.5);
  Rotation ra = again.at(137.5);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(ra.m[i][j] == r.m[i][j]);

  // Short-step continuity.
  Rotation ra2 = again.at(137.52);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(ra2.apply(kBB84[i]).dot(ra.apply(kBB84[i])) > 0.9999);
}

TEST_CASE("tomography reconstructs states from projector counts") {
  ProjectorCounts perfect_h{{1000.0, 0.0, 500.0, 500.0, 500.0, 500.0}};
  Stokes h = tomography_reconstruct(perfect_h);
  CHECK(h.s1 == doctest::Approx(1.0));
  CHECK(h.s2 == doctest::Approx(0.0));
  CHECK(h.s3 == doctest::Approx(0.0));

  ProjectorCounts depol{{100, 100, 100, 100, 100, 100}};
  Stokes mixed = tomography_reconstruct(depol);
  CHECK(mixed.norm() == doctest::Approx(0.0));

  ProjectorCounts bad{{10, 10, 0, 0, 5, 5}};
  CHECK_THROWS_AS(tomography_reconstruct(bad), std::invalid_argument);

  // Poisson statistics at N = 1e5 per basis keep the error below 0.02.
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    Vec3 v{g(rng), g(rng), g(rng)};
    double n = v.norm();
    Stokes s{v.x / n, v.y / n, v.z / n};
    const double N = 1e5;
    auto draw = [&](double p) {
      std::poisson_distribution<long> poisson(N * p);
      return static_cast<double>(poisson(rng));
    };
    ProjectorCounts c{{draw((1 + s.s1) / 2), draw((1 - s.s1) / 2), draw((1 + s.s2) / 2),
                       draw((1 - s.s2) / 2), draw((1 + s.s3) / 2), draw((1 - s.s3) / 2)}};
    Stokes rec = tomography_reconstruct(c);
    double ds = std::sqrt((rec.s1 - s.s1) * (rec.s1 - s.s1) +
                          (rec.s2 - s.s2) * (rec.s2 - s.s2) +
                          (rec.s3 - s.s3) * (rec.s3 - s.s3));
    CHECK(ds < 0.02);
  }
}

TEST_CASE("triplet decomposition oracle validates the plate convention") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 200; ++i) {
    Rotation target = random_rotation(rng);
    WaveplateTriplet w = decompose_triplet(target);
    // Apply the three plates in optical order to each basis vector and
    // compare against the target rotation directly.
    for (const Stokes& s : kBB84) {
      Stokes got = apply_waveplate(
          apply_waveplate(apply_waveplate(s, 90.0, w.qwp1_deg), 180.0, w.hwp_deg), 90.0,
          w.qwp2_deg);
      Stokes want = target.apply(s);
      CHECK(got.dot(want) == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("optimizer compensates random fiber rotations to high fidelity") {
  std::mt19937_64 rng(29);
  const auto targets = kBB84;
  for (int i = 0; i < 40; ++i) {
    Rotation drift = random_rotation(rng);
    std::array<Stokes, 4> rec;
    for (std::size_t k = 0; k < 4; ++k) rec[k] = drift.apply(targets[k]);
    CompensationResult res = optimize_triplet(rec, targets);
    // The analytic decomposition proves fidelity 1 is reachable.
    WaveplateTriplet oracle = decompose_triplet(drift.transposed());
    double oracle_f = 0.0;
    for (std::size_t k = 0; k < 4; ++k)
      oracle_f += fidelity(oracle.apply(rec[k]), targets[k]);
    oracle_f /= 4.0;
    CHECK(oracle_f == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(res.mean_fidelity >= 0.9999);
    CHECK(res.converged);
  }
}

TEST_CASE("optimizer handles identity and never loses to it") {
  CompensationResult res = optimize_triplet(kBB84, kBB84);
  CHECK(res.mean_fidelity == doctest::Approx(1.0).epsilon(1e-9));

  // Garbage inputs: the result can only improve on doing nothing.
  std::array<Stokes, 4> junk{Stokes{0.3, 0.1, -0.2}, Stokes{-0.5, 0.2, 0.0},
                             Stokes{0.0, -0.4, 0.4}, Stokes{0.2, 0.2, 0.2}};
  double identity_f = 0.0;
  for (std::size_t k = 0; k < 4; ++k) identity_f += fidelity(junk[k], kBB84[k]);
  identity_f /= 4.0;
  CompensationResult res2 = optimize_triplet(junk, kBB84);
  CHECK(res2.mean_fidelity >= identity_f);
}

TEST_CASE("depolarization caps fidelity and sets the predicted error rate") {
  std::mt19937_64 rng(31);
  Rotation drift = random_rotation(rng);
  std::array<Stokes, 4> rec;
  for (std::size_t k = 0; k < 4; ++k) rec[k] = depolarize(drift.apply(kBB84[k]), 0.02);
  CompensationResult res = optimize_triplet(rec, kBB84);
  CHECK(res.mean_fidelity == doctest::Approx(0.99).epsilon(1e-3));

  std::array<Stokes, 4> comp;
  for (std::size_t k = 0; k < 4; ++k) comp[k] = res.triplet.apply(rec[k]);
  double qber = predicted_source_qber(comp, kBB84);
  CHECK(qber == doctest::Approx(0.01).epsilon(0.1));

  // Exact by construction: depolarized targets project with error eps/2.
  std::array<Stokes, 4> direct;
  for (std::size_t k = 0; k < 4; ++k) direct[k] = depolarize(kBB84[k], 0.06);
  CHECK(predicted_source_qber(direct, kBB84) == doctest::Approx(0.03).epsilon(1e-9));
  CHECK(predicted_source_qber(kBB84, kBB84) == doctest::Approx(0.0));
}

TEST_CASE("source log round-trips through its binary and sidecar") {
  SourceLog log;
  log.config = SourceConfig{};
  log.seed = 4242;
  log.table = generate_sequence(log.config, log.seed);
  log.epoch_slots = {0, 400000000, 800000000, 1200000000};
  auto dir = std::filesystem::temp_directory_path() / "airqkd_test_srclog";
  std::filesystem::create_directories(dir);
  std::string prefix = (dir / "source").string();
  write_source_log(prefix, log);
  SourceLog back = read_source_log(prefix);
  CHECK(back.seed == log.seed);
  CHECK(back.config.mu == doctest::Approx(log.config.mu));
  CHECK(back.config.sequence_length == log.config.sequence_length);
  REQUIRE(back.table.size() == log.table.size());
  for (std::size_t i = 0; i < log.table.size(); ++i) {
    CHECK(back.table[i].intensity == log.table[i].intensity);
    CHECK(back.table[i].basis == log.table[i].basis);
    CHECK(back.table[i].bit == log.table[i].bit);
  }
  REQUIRE(back.epoch_slots.size() == 4);
  CHECK(back.epoch_slots[3] == 1200000000ULL);
  std::filesystem::remove_all(dir);
}

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "airqkd/channel.hpp"
#include "airqkd/constants.hpp"

using namespace airqkd;
using namespace airqkd::channel;

namespace {

// Exact antiderivative oracle for the turbulence profile integral:
// each term integrates in closed form (exponentials and an incomplete-gamma
// sum), independent of the quadrature used by the implementation.
double power_exp_integral(double a, double b, double scale, int n) {
  double fact = 1.0;
  for (int k = 2; k <= n; ++k) fact *= k;
  auto antider = [&](double x) {
    double sum = 0.0, fk = fact, xp = 1.0;
    for (int k = 0; k <= n; ++k) {
      sum += fk * xp;
      xp *= x;
      fk /= (k + 1.0);
    }
    return std::exp(-x) * sum;
  };
  double s = scale;
  double spow = std::pow(s, n + 1);
  return spow * (antider(a / s) - antider(b / s));
}

double hv_integral_exact(double a, double b, const LinkBudgetParams& p) {
  double w = p.wind_speed_mps / 27.0;
  double t1 = 0.00594 * w * w * 1e-50 * power_exp_integral(a, b, 1000.0, 10);
  double t2 = 2.7e-16 * 1500.0 * (std::exp(-a / 1500.0) - std::exp(-b / 1500.0));
  double t3 = p.cn2_ground * 100.0 * (std::exp(-a / 100.0) - std::exp(-b / 100.0));
  return t1 + t2 + t3;
}

kinematics::TrajectorySample sample_at(double range_m, double elevation_deg,
                                       double altitude_m) {
  kinematics::TrajectorySample s;
  s.range_m = range_m;
  s.elevation_deg = elevation_deg;
  s.position.altitude_m = altitude_m;
  return s;
}

}  // namespace

TEST_CASE("turbulence profile matches hand-evaluated points") {
  LinkBudgetParams p;
  CHECK(hv_cn2_profile(0.0, p) == doctest::Approx(1.727e-14).epsilon(1e-12));
  CHECK(hv_cn2_profile(1000.0, p) == doctest::Approx(1.3939443416389668e-16).epsilon(1e-9));
  CHECK(hv_cn2_profile(80000.0, p) < 1e-25);
  CHECK_THROWS_AS(hv_cn2_profile(-1.0, p), std::invalid_argument);
}

TEST_CASE("coherence length matches the closed-form integral oracle") {
  LinkBudgetParams p;
  p.ground_altitude_m = 0.0;
  auto r0 = fried_parameter(90.0, 20000.0, p);
  REQUIRE(r0.has_value());
  double integral = hv_integral_exact(0.0, 20000.0, p);
  double k = 2.0 * kPi / p.wavelength_m;
  double expect = std::pow(0.423 * k * k * integral, -0.6);
  CHECK(*r0 == doctest::Approx(expect).epsilon(2e-4));
  CHECK(*r0 == doctest::Approx(0.08526591174915672).epsilon(1e-3));

  p.ground_altitude_m = 128.0;
  auto r0arc = fried_parameter(17.121562241362064, 1600.0, p);
  REQUIRE(r0arc.has_value());
  CHECK(*r0arc == doctest::Approx(0.0817740703547886).epsilon(1e-3));
}

TEST_CASE("coherence length scaling and degenerate cases") {
  LinkBudgetParams p;
  p.ground_altitude_m = 0.0;
  auto r0 = fried_parameter(45.0, 10000.0, p);
  REQUIRE(r0.has_value());
  p.wavelength_m /= 2.0;
  auto r0half = fried_parameter(45.0, 10000.0, p);
  REQUIRE(r0half.has_value());
  // Halving the wavelength shrinks r0 by 2^(6/5).
  CHECK(*r0 / *r0half == doctest::Approx(std::pow(2.0, 1.2)).epsilon(1e-9));
  CHECK_THROWS_AS(fried_parameter(0.0, 1000.0, p), std::invalid_argument);
}

TEST_CASE("no integration span means no turbulence") {
  LinkBudgetParams p;
  p.ground_altitude_m = 1600.0;
  CHECK_FALSE(fried_parameter(30.0, 1600.0, p).has_value());
}

TEST_CASE("spot radius combines divergence and turbulence spread") {
  LinkBudgetParams p;
  // Diffraction-limited half-angle 1.22*785nm/12cm = 7.98 urad.
  CHECK(p.divergence_half_angle_rad() == doctest::Approx(7.980833333e-6).epsilon(1e-9));
  CHECK(longterm_spot_radius(5000.0, p, std::nullopt) ==
        doctest::Approx(0.039904166666666664).epsilon(1e-9));
  // Strong turbulence dominates: 2.1*lambda*L/(pi*r0) with r0 = 2 cm.
  double w = longterm_spot_radius(5000.0, p, 0.02);
  CHECK(w > 0.13);
  CHECK(w == doctest::Approx(std::hypot(0.039904166666666664, 0.13118346184349472))
                 .epsilon(1e-9));
  // Spot shrinks to zero with range.
  CHECK(longterm_spot_radius(1e-6, p, std::nullopt) < 1e-10);
  // Divergence override replaces the diffraction default.
  p.beam_divergence_half_angle_rad = 20e-6;
  CHECK(longterm_spot_radius(5000.0, p, std::nullopt) == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("capture fraction closed form") {
  // w_lt = rx*sqrt(2), no jitter: capture = 1 - 1/e.
  CHECK(capture_fraction(0.05 * std::sqrt(2.0), 0.0, 1000.0, 0.05) ==
        doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
  // Huge aperture swallows the beam.
  CHECK(capture_fraction(0.01, 0.0, 1000.0, 10.0) == doctest::Approx(1.0));
}

TEST_CASE("capture fraction agrees with a Monte-Carlo photon oracle") {
  std::mt19937_64 rng(2026);
  std::uniform_real_distribution<double> ur(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  int accepted = 0;
  while (accepted < 10) {
    double rx = 0.02 + 0.28 * ur(rng);
    double w = rx * (0.2 + 5.8 * ur(rng));
    double range = 1000.0 + 9000.0 * ur(rng);
    double psig = 2e-5 * ur(rng);
    double cf = capture_fraction(w, psig, range, rx);
    if (cf < 0.05) continue;
    ++accepted;
    double sj = psig * range;
    const int n = 2000000;
    int hits = 0;
    for (int i = 0; i < n; ++i) {
      double cx = sj * g(rng), cy = sj * g(rng);
      double px = cx + 0.5 * w * g(rng), py = cy + 0.5 * w * g(rng);
      if (px * px + py * py < rx * rx) ++hits;
    }
    double mc = static_cast<double>(hits) / n;
    CHECK(std::abs(mc - cf) / cf < 0.02);
  }
}

TEST_CASE("atmospheric transmittance follows the visibility relation") {
  LinkBudgetParams p;
  CHECK(atmospheric_transmittance(5000.0, 15.0, p) ==
        doctest::Approx(0.06453392849827073).epsilon(1e-9));
  // Clear air limit.
  p.visibility_m = 1e9;
  CHECK(atmospheric_transmittance(5000.0, 15.0, p) > 0.9999);
  // Monotone decreasing in path length.
  p.visibility_m = 5000.0;
  double prev = 1.0;
  for (double L = 500.0; L < 12000.0; L += 500.0) {
    double t = atmospheric_transmittance(L, 15.0, p);
    CHECK(t < prev);
    prev = t;
  }
  // Orbital geometry absorbs over the slab, not the full range.
  double t_sat = atmospheric_transmittance(600e3, 90.0, p);
  CHECK(t_sat == doctest::Approx(atmospheric_transmittance(20000.0, 15.0, p)).epsilon(1e-9));
}

TEST_CASE("total loss reproduces the 5 km arc budget") {
  LinkBudgetParams p;
  p.pointing_sigma_rad = deg2rad(0.00133);
  auto ls = total_loss(sample_at(5000.0, 17.121562241362064, 1600.0), p);
  // Frozen from the hand-evaluated budget: capture 10.72 dB, extinction
  // 11.90 dB, optics 2.24 dB, detector 3.67 dB.
  CHECK(ls.loss_db == doctest::Approx(28.5296).epsilon(2e-3));
  CHECK(ls.signal_detection_prob == doctest::Approx(std::pow(10.0, -ls.loss_db / 10.0))
                                        .epsilon(1e-12));
  CHECK(ls.background_rate_hz == doctest::Approx(285.0));
}

TEST_CASE("arc losses preserve the short-to-long ordering") {
  LinkBudgetParams p;
  p.pointing_sigma_rad = deg2rad(0.00133);
  double dh = 1472.0;
  auto loss_at = [&](double slant) {
    double el = rad2deg(std::asin(dh / slant));
    return total_loss(sample_at(slant, el, 1600.0), p).loss_db;
  };
  double l3 = loss_at(3000.0), l7 = loss_at(7000.0), l10 = loss_at(10000.0);
  CHECK(l3 < l7);
  CHECK(l7 < l10);
}

TEST_CASE("loss grows monotonically with range and 20 dB per decade far-field") {
  LinkBudgetParams p;
  p.pointing_sigma_rad = deg2rad(0.001);
  double prev = 0.0;
  for (double r = 2000.0; r <= 20000.0; r += 1000.0) {
    double el = rad2deg(std::asin(1472.0 / r));
    double l = total_loss(sample_at(r, el, 1600.0), p).loss_db;
    CHECK(l >= prev);
    prev = l;
  }

  LinkBudgetParams clean;
  clean.cn2_ground = 0.0;
  clean.wind_speed_mps = 0.0;
  clean.visibility_m = 1e9;
  clean.pointing_sigma_rad = 0.0;
  double l1 = total_loss(sample_at(100e3, 30.0, 1600.0), clean).loss_db;
  double l2 = total_loss(sample_at(1000e3, 30.0, 1600.0), clean).loss_db;
  CHECK(l2 - l1 == doctest::Approx(20.0).epsilon(0.01));
}

TEST_CASE("link series is deterministic and pinnable") {
  kinematics::PassConfig cfg;
  cfg.kind = kinematics::PassKind::arc;
  cfg.nominal_distance_m = 5000.0;
  cfg.speed_kmh = 255.0;
  cfg.duration_s = 60.0;
  auto traj = kinematics::generate_trajectory(cfg);
  LinkBudgetParams p;
  p.pointing_sigma_rad = deg2rad(0.00133);

  auto a = link_series(traj, p, 99);
  auto b = link_series(traj, p, 99);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].loss_db == b[i].loss_db);
  auto c = link_series(traj, p, 100);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].loss_db != c[i].loss_db) differs = true;
  CHECK(differs);

  double shift = pin_mean_loss(a, 34.5, 0.0, 60.0);
  double mean = 0.0;
  for (const auto& s : a) mean += s.loss_db;
  mean /= static_cast<double>(a.size());
  CHECK(mean == doctest::Approx(34.5).epsilon(1e-9));
  CHECK(std::isfinite(shift));
}

TEST_CASE("link CSV round-trips") {
  std::vector<LinkSample> s(3);
  s[0] = {0.0, 30.0, 285.0, 1e-3};
  s[1] = {1.0, 31.5, 285.0, std::pow(10.0, -3.15)};
  s[2] = {2.0, 29.25, 290.0, std::pow(10.0, -2.925)};
  std::ostringstream os;
  write_link_csv(os, s);
  std::istringstream is(os.str());
  auto back = read_link_csv(is);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].loss_db == doctest::Approx(s[i].loss_db).epsilon(1e-9));
    CHECK(back[i].background_rate_hz == doctest::Approx(s[i].background_rate_hz));
  }
}

TEST_CASE("link parameter validation") {
  LinkBudgetParams p;
  p.rx_optics_transmittance = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = LinkBudgetParams{};
  p.wavelength_m = -1.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = LinkBudgetParams{};
  p.detector_efficiency = 1.5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

#include "airqkd/channel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

#include "airqkd/constants.hpp"
#include "airqkd/rng.hpp"

namespace airqkd::channel {

namespace {

constexpr double kAtmosphereCap = 20000.0;  // aerosol slab thickness, m
constexpr double kTurbulenceTop = 30000.0;  // HV profile is negligible above

double db_from_fraction(double f) { return -10.0 * std::log10(f); }

}  // namespace

void LinkBudgetParams::validate() const {
  if (!(wavelength_m > 0.0)) throw std::invalid_argument("wavelength_m must be positive");
  if (!(tx_aperture_diameter_m > 0.0) || !(rx_aperture_diameter_m > 0.0))
    throw std::invalid_argument("aperture diameters must be positive");
  if (!(rx_optics_transmittance > 0.0) || rx_optics_transmittance > 1.0)
    throw std::invalid_argument("rx_optics_transmittance must lie in (0,1]");
  if (!(detector_efficiency > 0.0) || detector_efficiency > 1.0)
    throw std::invalid_argument("detector_efficiency must lie in (0,1]");
  if (!(visibility_m > 0.0)) throw std::invalid_argument("visibility_m must be positive");
  if (cn2_ground < 0.0 || wind_speed_mps < 0.0 || pointing_sigma_rad < 0.0 ||
      dark_rate_total_hz < 0.0 || stray_rate_hz < 0.0 || loss_jitter_sigma_db < 0.0)
    throw std::invalid_argument("negative link parameter");
}

double LinkBudgetParams::divergence_half_angle_rad() const {
  if (beam_divergence_half_angle_rad > 0.0) return beam_divergence_half_angle_rad;
  return 1.22 * wavelength_m / tx_aperture_diameter_m;
}

double hv_cn2_profile(double h_m, const LinkBudgetParams& p) {
  if (h_m < 0.0) throw std::invalid_argument("altitude must be non-negative");
  double w = p.wind_speed_mps / 27.0;
  double t1 = 0.00594 * w * w * std::pow(1e-5 * h_m, 10.0) * std::exp(-h_m / 1000.0);
  double t2 = 2.7e-16 * std::exp(-h_m / 1500.0);
  double t3 = p.cn2_ground * std::exp(-h_m / 100.0);
  return t1 + t2 + t3;
}

std::optional<double> fried_parameter(double elevation_deg, double platform_altitude_m,
                                      const LinkBudgetParams& p) {
  if (!(elevation_deg > 0.0)) throw std::invalid_argument("elevation must be positive");
  double h0 = p.ground_altitude_m;
  double h1 = std::min(platform_altitude_m, kTurbulenceTop);
  if (h1 <= h0) return std::nullopt;

  // Composite Simpson on a grid fine enough for the 100 m ground-layer scale.
  std::size_t n = static_cast<std::size_t>(std::ceil((h1 - h0) / 1.0));
  n = std::clamp<std::size_t>(n, 2000, 120000);
  if (n % 2) ++n;
  double dh = (h1 - h0) / static_cast<double>(n);
  double sum = hv_cn2_profile(h0, p) + hv_cn2_profile(h1, p);
  for (std::size_t i = 1; i < n; ++i)
    sum += hv_cn2_profile(h0 + dh * static_cast<double>(i), p) * (i % 2 ? 4.0 : 2.0);
  double integral = sum * dh / 3.0;
  if (integral <= 0.0) return std::nullopt;

  double k = 2.0 * kPi / p.wavelength_m;
  double sec_zenith = 1.0 / std::sin(deg2rad(elevation_deg));
  return std::pow(0.423 * k * k * sec_zenith * integral, -3.0 / 5.0);
}

double longterm_spot_radius(double range_m, const LinkBudgetParams& p,
                            std::optional<double> r0_m) {
  if (!(range_m > 0.0)) throw std::invalid_argument("range must be positive");
  double diff = p.divergence_half_angle_rad() * range_m;
  double w2 = diff * diff;
  if (r0_m && *r0_m > 0.0) {
    double turb = 2.1 * p.wavelength_m * range_m / (kPi * *r0_m);
    w2 += turb * turb;
  }
  return std::sqrt(w2);
}

double capture_fraction(double w_lt_m, double pointing_sigma_rad, double range_m,
                        double rx_radius_m) {
  if (!(w_lt_m > 0.0) || !(range_m > 0.0) || !(rx_radius_m > 0.0) ||
      pointing_sigma_rad < 0.0)
    throw std::invalid_argument("capture_fraction arguments must be positive");
  double sigma_j = pointing_sigma_rad * range_m;
  double weff2 = w_lt_m * w_lt_m + 4.0 * sigma_j * sigma_j;
  return 1.0 - std::exp(-2.0 * rx_radius_m * rx_radius_m / weff2);
}

double atmospheric_transmittance(double range_m, double elevation_deg,
                                 const LinkBudgetParams& p) {
  if (!(range_m > 0.0)) throw std::invalid_argument("range must be positive");
  double v_km = p.visibility_m / 1000.0;
  double q = 0.585 * std::cbrt(v_km);
  double alpha = (3.912 / p.visibility_m) * std::pow(p.wavelength_m / 550e-9, -q);
  double path = range_m;
  double sin_el = std::sin(deg2rad(std::max(elevation_deg, 0.5)));
  path = std::min(path, kAtmosphereCap / sin_el);
  return std::exp(-alpha * path);
}

LinkSample total_loss(const kinematics::TrajectorySample& s, const LinkBudgetParams& p) {
  p.validate();
  std::optional<double> r0 =
      fried_parameter(std::max(s.elevation_deg, 0.1), s.position.altitude_m, p);
  double w_lt = longterm_spot_radius(s.range_m, p, r0);
  double cap = capture_fraction(w_lt, p.pointing_sigma_rad, s.range_m,
                                0.5 * p.rx_aperture_diameter_m);
  double atm = atmospheric_transmittance(s.range_m, s.elevation_deg, p);
  double eta = cap * atm * p.rx_optics_transmittance * p.detector_efficiency;
  LinkSample out;
  out.t_s = s.t_s;
  out.loss_db = db_from_fraction(eta);
  out.background_rate_hz = p.dark_rate_total_hz + p.stray_rate_hz;
  out.signal_detection_prob = std::pow(10.0, -out.loss_db / 10.0);
  return out;
}

std::vector<LinkSample> link_series(const std::vector<kinematics::TrajectorySample>& traj,
                                    const LinkBudgetParams& p, std::uint64_t seed) {
  std::mt19937_64 rng = make_rng(seed, 0x11f0);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<LinkSample> out;
  out.reserve(traj.size());
  for (const auto& s : traj) {
    LinkSample ls = total_loss(s, p);
    if (p.loss_jitter_sigma_db > 0.0) {
      ls.loss_db = std::max(0.0, ls.loss_db + p.loss_jitter_sigma_db * g(rng));
      ls.signal_detection_prob = std::pow(10.0, -ls.loss_db / 10.0);
    }
    out.push_back(ls);
  }
  return out;
}

double pin_mean_loss(std::vector<LinkSample>& series, double target_db, double t0_s,
                     double t1_s) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : series)
    if (s.t_s >= t0_s && s.t_s <= t1_s) sum += s.loss_db, ++n;
  if (n == 0) throw std::invalid_argument("pin window contains no samples");
  double shift = target_db - sum / static_cast<double>(n);
  for (auto& s : series) {
    s.loss_db = std::max(0.0, s.loss_db + shift);
    s.signal_detection_prob = std::pow(10.0, -s.loss_db / 10.0);
  }
  return shift;
}

void write_link_csv(std::ostream& os, const std::vector<LinkSample>& series) {
  os << "t,loss_db,background_hz,eta\n";
  char line[160];
  for (const auto& s : series) {
    std::snprintf(line, sizeof(line), "%.3f,%.6f,%.3f,%.9e\n", s.t_s, s.loss_db,
                  s.background_rate_hz, s.signal_detection_prob);
    os << line;
  }
}

std::vector<LinkSample> read_link_csv(std::istream& is) {
  std::vector<LinkSample> out;
  std::string line;
  if (!std::getline(is, line) || line.rfind("t,loss_db", 0) != 0)
    throw std::runtime_error("bad link CSV header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    LinkSample s;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &s.t_s, &s.loss_db,
                    &s.background_rate_hz, &s.signal_detection_prob) != 4)
      throw std::runtime_error("bad link CSV row: " + line);
    out.push_back(s);
  }
  return out;
}

}  // namespace airqkd::channel

#include "airqkd/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "airqkd/constants.hpp"
#include "airqkd/rng.hpp"
#include "airqkd/vec.hpp"

namespace airqkd::kinematics {

namespace {

// East-north-up components of the platform relative to the station.
struct EnuSample {
  double t = 0.0;
  Vec3 enu;
};

Vec3 station_ecef(const GeoPoint& g) {
  double lat = deg2rad(g.latitude_deg);
  double lon = deg2rad(g.longitude_deg);
  double r = kEarthRadius + g.altitude_m;
  return {r * std::cos(lat) * std::cos(lon), r * std::cos(lat) * std::sin(lon),
          r * std::sin(lat)};
}

GeoPoint geo_from_enu(const GeoPoint& station, const Vec3& enu) {
  double lat = deg2rad(station.latitude_deg);
  double lon = deg2rad(station.longitude_deg);
  Vec3 up{std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
  Vec3 east{-std::sin(lon), std::cos(lon), 0.0};
  Vec3 north{-std::sin(lat) * std::cos(lon), -std::sin(lat) * std::sin(lon), std::cos(lat)};
  Vec3 p = station_ecef(station) + east * enu.x + north * enu.y + up * enu.z;
  double r = p.norm();
  GeoPoint g;
  g.latitude_deg = rad2deg(std::asin(p.z / r));
  g.longitude_deg = rad2deg(std::atan2(p.y, p.x));
  g.altitude_m = r - kEarthRadius;
  return g;
}

std::vector<EnuSample> aircraft_samples(const PassConfig& cfg) {
  double dh = cfg.platform_altitude_m - cfg.station.altitude_m;
  double ground = std::sqrt(cfg.nominal_distance_m * cfg.nominal_distance_m - dh * dh);
  double v = cfg.speed_kmh / 3.6;
  std::size_t n = static_cast<std::size_t>(std::floor(cfg.duration_s / cfg.sample_interval_s + 1e-9)) + 1;
  std::vector<EnuSample> out(n);
  if (cfg.kind == PassKind::arc) {
    double omega = v / ground;  // rad/s around the circular ground track
    double theta0 = deg2rad(cfg.start_bearing_deg);
    for (std::size_t i = 0; i < n; ++i) {
      double t = static_cast<double>(i) * cfg.sample_interval_s;
      double th = theta0 + omega * t;
      out[i] = {t, {ground * std::sin(th), ground * std::cos(th), dh}};
    }
  } else {
    double psi = deg2rad(cfg.start_bearing_deg);
    Vec3 along{std::sin(psi), std::cos(psi), 0.0};
    Vec3 offset{ground * std::sin(psi + kPi / 2.0), ground * std::cos(psi + kPi / 2.0), 0.0};
    double tmid = cfg.duration_s / 2.0;
    for (std::size_t i = 0; i < n; ++i) {
      double t = static_cast<double>(i) * cfg.sample_interval_s;
      Vec3 p = offset + along * (v * (t - tmid));
      p.z = dh;
      out[i] = {t, p};
    }
  }
  return out;
}

std::vector<EnuSample> satellite_samples(const PassConfig& cfg) {
  double rs = kEarthRadius + cfg.station.altitude_m;
  double ro = kEarthRadius + cfg.orbit_altitude_m;
  double v = std::sqrt(kEarthMu / ro);
  double omega = v / ro;  // orbital angular rate, rad/s

  // Cross-track offset angle beta giving the requested peak elevation.
  auto peak_elevation = [&](double beta) {
    return std::atan2(ro * std::cos(beta) - rs, ro * std::sin(beta));
  };
  double beta_lo = 0.0, beta_hi = std::acos(rs / ro);
  double want = deg2rad(cfg.max_elevation_deg);
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (beta_lo + beta_hi);
    if (peak_elevation(mid) > want)
      beta_lo = mid;
    else
      beta_hi = mid;
  }
  double beta = 0.5 * (beta_lo + beta_hi);
  if (cfg.max_elevation_deg >= 90.0 - 1e-9) beta = 0.0;

  // Above-horizon half-angle along the orbit.
  double c = (rs / ro) / std::cos(beta);
  if (c >= 1.0) throw std::invalid_argument("satellite pass never rises above the horizon");
  double theta_h = std::acos(c);
  double span = std::min(cfg.duration_s, 2.0 * theta_h / omega);

  std::size_t n = static_cast<std::size_t>(std::floor(span / cfg.sample_interval_s + 1e-9)) + 1;
  std::vector<EnuSample> out(n);
  double cb = std::cos(beta), sb = std::sin(beta);
  for (std::size_t i = 0; i < n; ++i) {
    double t = static_cast<double>(i) * cfg.sample_interval_s;
    double th = omega * (t - span / 2.0);
    // Station sits on the x axis; the orbit plane is offset by beta toward z
    // (local north). x maps to up, y to east, z to north.
    Vec3 p{ro * std::cos(th) * cb, ro * std::sin(th), ro * std::cos(th) * sb};
    out[i] = {t, {p.y, p.z, p.x - rs}};
  }
  return out;
}

}  // namespace

void PassConfig::validate() const {
  if (!(duration_s > 0.0)) throw std::invalid_argument("duration_s must be positive");
  if (!(sample_interval_s > 0.0)) throw std::invalid_argument("sample_interval_s must be positive");
  if (gps_noise_sigma_m < 0.0) throw std::invalid_argument("gps_noise_sigma_m must be non-negative");
  if (kind == PassKind::satellite) {
    if (!(orbit_altitude_m > 0.0)) throw std::invalid_argument("orbit_altitude_m must be positive");
    if (!(max_elevation_deg > 0.0) || max_elevation_deg > 90.0)
      throw std::invalid_argument("max_elevation_deg must lie in (0, 90]");
  } else {
    if (!(nominal_distance_m > 0.0)) throw std::invalid_argument("nominal_distance_m must be positive");
    if (!(speed_kmh > 0.0)) throw std::invalid_argument("speed_kmh must be positive");
    double dh = platform_altitude_m - station.altitude_m;
    if (dh < 0.0) throw std::invalid_argument("platform must be above the station");
    if (nominal_distance_m <= dh)
      throw std::invalid_argument("slant range must exceed the altitude difference");
  }
}

double time_of_flight(double range_m) {
  if (range_m < 0.0) throw std::invalid_argument("range must be non-negative");
  return range_m / kSpeedOfLight;
}

AngularRates angular_rates(double t0_s, double az0_deg, double el0_deg,
                           double t1_s, double az1_deg, double el1_deg) {
  double dt = t1_s - t0_s;
  if (!(dt > 0.0)) throw std::invalid_argument("sightings must be time-ordered");
  AngularRates r;
  r.az_rate_dps = wrap180(az1_deg - az0_deg) / dt;
  r.el_rate_dps = (el1_deg - el0_deg) / dt;
  double elm = deg2rad(0.5 * (el0_deg + el1_deg));
  double azc = r.az_rate_dps * std::cos(elm);
  r.angular_speed_dps = std::sqrt(azc * azc + r.el_rate_dps * r.el_rate_dps);
  return r;
}

std::vector<TrajectorySample> generate_trajectory(const PassConfig& cfg) {
  cfg.validate();
  std::vector<EnuSample> enu =
      cfg.kind == PassKind::satellite ? satellite_samples(cfg) : aircraft_samples(cfg);

  if (cfg.gps_noise_sigma_m > 0.0) {
    std::mt19937_64 rng(cfg.gps_noise_seed);
    std::normal_distribution<double> g(0.0, cfg.gps_noise_sigma_m);
    for (auto& s : enu) {
      s.enu.x += g(rng);
      s.enu.y += g(rng);
      s.enu.z += g(rng);
    }
  }

  std::size_t n = enu.size();
  std::vector<TrajectorySample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& p = enu[i].enu;
    TrajectorySample& s = out[i];
    s.t_s = enu[i].t;
    s.position = geo_from_enu(cfg.station, p);
    s.range_m = p.norm();
    s.azimuth_deg = wrap360(rad2deg(std::atan2(p.x, p.y)));
    s.elevation_deg = rad2deg(std::atan2(p.z, std::hypot(p.x, p.y)));
    s.tof_s = time_of_flight(s.range_m);
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j0 = i > 0 ? i - 1 : i;
    std::size_t j1 = i + 1 < n ? i + 1 : i;
    if (j0 == j1) continue;
    double dt = out[j1].t_s - out[j0].t_s;
    out[i].az_rate_dps = wrap180(out[j1].azimuth_deg - out[j0].azimuth_deg) / dt;
    out[i].el_rate_dps = (out[j1].elevation_deg - out[j0].elevation_deg) / dt;
    out[i].angular_speed_dps = rad2deg(angle_between(enu[j0].enu, enu[j1].enu)) / dt;
  }
  return out;
}

void write_trajectory_csv(std::ostream& os, const std::vector<TrajectorySample>& samples) {
  os << "t,lat,lon,alt,range_m,az_deg,el_deg,az_rate,el_rate,ang_speed,tof_s\n";
  char line[360];
  for (const auto& s : samples) {
    std::snprintf(line, sizeof(line),
                  "%.3f,%.9f,%.9f,%.3f,%.4f,%.6f,%.6f,%.7f,%.7f,%.7f,%.12e\n",
                  s.t_s, s.position.latitude_deg, s.position.longitude_deg,
                  s.position.altitude_m, s.range_m, s.azimuth_deg, s.elevation_deg,
                  s.az_rate_dps, s.el_rate_dps, s.angular_speed_dps, s.tof_s);
    os << line;
  }
}

std::vector<TrajectorySample> read_trajectory_csv(std::istream& is) {
  std::vector<TrajectorySample> out;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty trajectory CSV");
  if (line.rfind("t,lat,lon", 0) != 0) throw std::runtime_error("bad trajectory CSV header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    TrajectorySample s;
    int got = std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf",
                          &s.t_s, &s.position.latitude_deg, &s.position.longitude_deg,
                          &s.position.altitude_m, &s.range_m, &s.azimuth_deg,
                          &s.elevation_deg, &s.az_rate_dps, &s.el_rate_dps,
                          &s.angular_speed_dps, &s.tof_s);
    if (got != 11) throw std::runtime_error("bad trajectory CSV row: " + line);
    out.push_back(s);
  }
  return out;
}

}  // namespace airqkd::kinematics

#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace airqkd::kinematics {

// Position on the spherical Earth model used throughout.
struct GeoPoint {
  double latitude_deg = 0.0;
  double longitude_deg = 0.0;
  double altitude_m = 0.0;  // above the reference sphere
};

enum class PassKind { arc, line, satellite };

struct PassConfig {
  PassKind kind = PassKind::arc;
  GeoPoint station{44.9458, -75.9406, 128.0};

  // Aircraft passes. nominal_distance_m is the slant range from the station:
  // held constant over an arc, the closest-approach value for a line.
  double nominal_distance_m = 7000.0;
  double speed_kmh = 200.0;
  double platform_altitude_m = 1600.0;
  double start_bearing_deg = 0.0;  // arc: initial azimuth of the aircraft; line: track heading

  // Satellite passes: circular orbit over the spherical Earth, pass geometry
  // set by the peak elevation seen from the station.
  double orbit_altitude_m = 600000.0;
  double max_elevation_deg = 90.0;

  double duration_s = 300.0;
  double sample_interval_s = 1.0;

  // Per-sample position noise (GPS-like), disabled at 0.
  double gps_noise_sigma_m = 0.0;
  std::uint64_t gps_noise_seed = 1;

  void validate() const;  // throws std::invalid_argument on bad fields
};

struct TrajectorySample {
  double t_s = 0.0;
  GeoPoint position;
  double range_m = 0.0;
  double azimuth_deg = 0.0;  // [0, 360), clockwise from north
  double elevation_deg = 0.0;
  double az_rate_dps = 0.0;
  double el_rate_dps = 0.0;
  double angular_speed_dps = 0.0;  // line-of-sight sweep rate
  double tof_s = 0.0;
};

// One-way light travel time for a slant range.
double time_of_flight(double range_m);

struct AngularRates {
  double az_rate_dps = 0.0;
  double el_rate_dps = 0.0;
  double angular_speed_dps = 0.0;
};

// Finite-difference rates between two sightings. Azimuth differences wrap to
// [-180, 180); the combined speed adds az_rate*cos(el_mid) and el_rate in
// quadrature.
AngularRates angular_rates(double t0_s, double az0_deg, double el0_deg,
                           double t1_s, double az1_deg, double el1_deg);

// Sampled pass geometry. Sample angular_speed_dps is computed from successive
// line-of-sight directions, which stays finite through zenith where the
// az/el quadrature form degenerates; away from zenith the two agree.
// A satellite pass is truncated to its above-horizon span and centered on the
// peak-elevation point.
std::vector<TrajectorySample> generate_trajectory(const PassConfig& cfg);

// CSV: t,lat,lon,alt,range_m,az_deg,el_deg,az_rate,el_rate,ang_speed,tof_s
void write_trajectory_csv(std::ostream& os, const std::vector<TrajectorySample>& samples);
std::vector<TrajectorySample> read_trajectory_csv(std::istream& is);

}  // namespace airqkd::kinematics

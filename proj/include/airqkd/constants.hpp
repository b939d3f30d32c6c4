#pragma once

#include <cmath>

namespace airqkd {

inline constexpr double kSpeedOfLight = 299792458.0;    // m/s
inline constexpr double kEarthRadius = 6371000.0;       // m, spherical model
inline constexpr double kEarthMu = 3.986004418e14;      // m^3/s^2
inline constexpr double kPi = 3.14159265358979323846;

constexpr double deg2rad(double d) { return d * (kPi / 180.0); }
constexpr double rad2deg(double r) { return r * (180.0 / kPi); }

// Wrap an angle to [0, 360).
inline double wrap360(double deg) {
  double d = std::fmod(deg, 360.0);
  if (d < 0.0) d += 360.0;
  return d;
}

// Wrap an angle difference to [-180, 180).
inline double wrap180(double deg) {
  double d = std::fmod(deg + 180.0, 360.0);
  if (d < 0.0) d += 360.0;
  return d - 180.0;
}

}  // namespace airqkd

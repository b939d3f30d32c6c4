#pragma once

#include <array>

#include "airqkd/vec.hpp"

namespace airqkd::polarization {

// Normalized Stokes vector on the Poincare sphere; pure states have |s| = 1.
struct Stokes {
  double s1 = 0.0;
  double s2 = 0.0;
  double s3 = 0.0;

  double dot(const Stokes& o) const { return s1 * o.s1 + s2 * o.s2 + s3 * o.s3; }
  double norm() const { return std::sqrt(dot(*this)); }
};

inline constexpr Stokes kH{1.0, 0.0, 0.0};
inline constexpr Stokes kV{-1.0, 0.0, 0.0};
inline constexpr Stokes kD{0.0, 1.0, 0.0};
inline constexpr Stokes kA{0.0, -1.0, 0.0};
inline constexpr Stokes kR{0.0, 0.0, 1.0};
inline constexpr Stokes kL{0.0, 0.0, -1.0};

// The four BB84 states in fixed order H, V, D, A.
inline constexpr std::array<Stokes, 4> kBB84{kH, kV, kD, kA};

// Proper rotation acting on Stokes space.
struct Rotation {
  double m[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

  static Rotation identity() { return {}; }
  static Rotation axis_angle(const Vec3& axis, double angle_rad);
  // Rotation-vector form: axis*angle packed in one vector.
  static Rotation from_rotvec(const Vec3& rv);

  Stokes apply(const Stokes& s) const;
  Rotation after(const Rotation& inner) const;  // this * inner
  Rotation transposed() const;
};

// Linear retarder with fast axis at angle_deg (physical plate angle) and the
// given retardance: rotates Stokes vectors about (cos 2a, sin 2a, 0).
// Handedness convention: a quarter-wave plate at 45 degrees maps H to R.
Stokes apply_waveplate(const Stokes& s, double retardance_deg, double angle_deg);
Rotation waveplate_rotation(double retardance_deg, double angle_deg);

// Bloch-sphere fidelity between a (possibly mixed) state and a pure target.
inline double fidelity(const Stokes& r, const Stokes& target) {
  return 0.5 * (1.0 + r.dot(target));
}

// Isotropic depolarization: shrink toward the fully mixed state.
inline Stokes depolarize(const Stokes& s, double epsilon) {
  double k = 1.0 - epsilon;
  return {s.s1 * k, s.s2 * k, s.s3 * k};
}

}  // namespace airqkd::polarization

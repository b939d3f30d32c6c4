#include "airqkd/polarization.hpp"

#include <cmath>

#include "airqkd/constants.hpp"

namespace airqkd::polarization {

Rotation Rotation::axis_angle(const Vec3& axis, double angle_rad) {
  Vec3 n = axis.normalized();
  double c = std::cos(angle_rad), s = std::sin(angle_rad), t = 1.0 - c;
  Rotation r;
  r.m[0][0] = t * n.x * n.x + c;
  r.m[0][1] = t * n.x * n.y - s * n.z;
  r.m[0][2] = t * n.x * n.z + s * n.y;
  r.m[1][0] = t * n.x * n.y + s * n.z;
  r.m[1][1] = t * n.y * n.y + c;
  r.m[1][2] = t * n.y * n.z - s * n.x;
  r.m[2][0] = t * n.x * n.z - s * n.y;
  r.m[2][1] = t * n.y * n.z + s * n.x;
  r.m[2][2] = t * n.z * n.z + c;
  return r;
}

Rotation Rotation::from_rotvec(const Vec3& rv) {
  double a = rv.norm();
  if (a < 1e-15) return identity();
  return axis_angle(rv, a);
}

Stokes Rotation::apply(const Stokes& s) const {
  return {m[0][0] * s.s1 + m[0][1] * s.s2 + m[0][2] * s.s3,
          m[1][0] * s.s1 + m[1][1] * s.s2 + m[1][2] * s.s3,
          m[2][0] * s.s1 + m[2][1] * s.s2 + m[2][2] * s.s3};
}

Rotation Rotation::after(const Rotation& inner) const {
  Rotation r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double v = 0.0;
      for (int k = 0; k < 3; ++k) v += m[i][k] * inner.m[k][j];
      r.m[i][j] = v;
    }
  return r;
}

Rotation Rotation::transposed() const {
  Rotation r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.m[i][j] = m[j][i];
  return r;
}

Rotation waveplate_rotation(double retardance_deg, double angle_deg) {
  double a2 = deg2rad(2.0 * angle_deg);
  // Negative sense fixes the handedness so a QWP at 45 degrees sends H to R.
  return Rotation::axis_angle({std::cos(a2), std::sin(a2), 0.0}, -deg2rad(retardance_deg));
}

Stokes apply_waveplate(const Stokes& s, double retardance_deg, double angle_deg) {
  return waveplate_rotation(retardance_deg, angle_deg).apply(s);
}

}  // namespace airqkd::polarization

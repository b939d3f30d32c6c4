#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "airqkd/kinematics.hpp"

namespace airqkd::channel {

struct LinkBudgetParams {
  double wavelength_m = 785e-9;
  double tx_aperture_diameter_m = 0.12;
  double rx_aperture_diameter_m = 0.10;
  // 0 selects the diffraction-limited default 1.22*lambda/D_tx; override to
  // model intentional defocus.
  double beam_divergence_half_angle_rad = 0.0;
  double rx_optics_transmittance = 0.597;
  // Loss-model value. The detector simulation applies its own efficiency; the
  // event sampler divides this one back out so it is not counted twice.
  double detector_efficiency = 0.43;
  double cn2_ground = 1.7e-14;   // m^(-2/3) at sea level
  double wind_speed_mps = 21.0;  // rms upper-atmosphere wind
  double visibility_m = 5000.0;
  double ground_altitude_m = 128.0;
  double pointing_sigma_rad = 0.0;  // per-axis tracking error seen by the beam
  double dark_rate_total_hz = 285.0;  // all four detectors summed
  double stray_rate_hz = 0.0;
  double loss_jitter_sigma_db = 1.0;  // per-second fading applied by link_series

  void validate() const;  // throws std::invalid_argument
  double divergence_half_angle_rad() const;
};

struct LinkSample {
  double t_s = 0.0;
  double loss_db = 0.0;  // source output to detection
  double background_rate_hz = 0.0;
  double signal_detection_prob = 0.0;  // always 10^(-loss_db/10)
};

// Turbulence structure constant profile (Hufnagel-Valley) at altitude h.
double hv_cn2_profile(double h_m, const LinkBudgetParams& p);

// Transverse coherence length over the slant path from the ground station to
// the platform altitude. Absent when the integrated turbulence vanishes.
std::optional<double> fried_parameter(double elevation_deg, double platform_altitude_m,
                                      const LinkBudgetParams& p);

// 1/e^2 beam radius after propagating range_m: divergence and turbulence
// spread added in quadrature. The turbulence term drops out when r0 is absent.
double longterm_spot_radius(double range_m, const LinkBudgetParams& p,
                            std::optional<double> r0_m);

// Fraction of the jitter-convolved Gaussian beam collected by the aperture.
double capture_fraction(double w_lt_m, double pointing_sigma_rad, double range_m,
                        double rx_radius_m);

// Beer-Lambert extinction with the Kruse visibility relation. The absorbing
// path is the full slant range for low-altitude platforms and is capped at a
// 20 km slab for orbital geometries.
double atmospheric_transmittance(double range_m, double elevation_deg,
                                 const LinkBudgetParams& p);

// Full per-sample budget: capture * atmosphere * receiver optics * detector.
LinkSample total_loss(const kinematics::TrajectorySample& s, const LinkBudgetParams& p);

// Per-sample budgets plus seeded per-second fading (sigma in dB).
std::vector<LinkSample> link_series(const std::vector<kinematics::TrajectorySample>& traj,
                                    const LinkBudgetParams& p, std::uint64_t seed);

// Shift every sample by a constant so the mean loss over [t0, t1] hits
// target_db; returns the shift applied.
double pin_mean_loss(std::vector<LinkSample>& series, double target_db, double t0_s,
                     double t1_s);

// CSV: t,loss_db,background_hz,eta
void write_link_csv(std::ostream& os, const std::vector<LinkSample>& series);
std::vector<LinkSample> read_link_csv(std::istream& is);

}  // namespace airqkd::channel

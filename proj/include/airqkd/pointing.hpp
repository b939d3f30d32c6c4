#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "airqkd/kinematics.hpp"
#include "airqkd/vec.hpp"

namespace airqkd::pointing {

// Two-site acquisition and tracking: a ground transmitter and a moving
// receiver find each other via beacons, lock coarse gimbal loops driven by
// 50 fps camera feedback, and close a 1 kHz quad-cell fine loop at the
// receiver. All angles are degrees; deviations live in a local
// (cross-azimuth, elevation) tangent plane around the true line of sight.

enum class PointingState { idle, searching, acquiring, tracking, coasting };

const char* to_string(PointingState s);

enum class PointingEvent {
  position_data_received,
  spot_found,
  spot_lost,
  lock_achieved,
  timeout,
};

// Defined edges only; any other (state, event) pair is a no-op.
PointingState state_transition(PointingState s, PointingEvent e);

struct ControllerGains {
  double k_v = 1.0;             // feed-forward on estimated spot velocity
  double k_p = 3.0;             // proportional, 1/s
  double k_i = 2.0;             // integral, 1/s^2
  double rate_limit_deg_s = 10.0;
  double integrator_clamp = 0.5;  // degree-seconds, per axis
  void validate() const;
};

struct CameraFrame {
  double t_s = 0.0;
  bool has_spot = false;
  Vec2 spot_deg{0.0, 0.0};  // offset from the calibrated reference
  double snr = 0.0;
};

struct BeaconGeometry {
  double beacon_half_angle_deg = 0.37;   // from the 0.74 deg full divergence
  double irl_half_angle_deg = 40.0;      // wide infrared acquisition lamp
  double inm_attitude_sigma_deg = 1.25;  // +-2.5 deg at 2 sigma
  double camera_fov_half_angle_deg = 2.0;
  void validate() const;
};

// True when the emitter's pointing error keeps the observer inside the beam
// cone and the source direction falls inside the observer's camera FOV.
// wide_infrared selects the broad acquisition lamp instead of the beacon.
bool beacon_visible(double emitter_pointing_error_deg, double observer_offset_deg,
                    const BeaconGeometry& g, bool wide_infrared = false);

// PI controller with velocity feed-forward. The spot velocity estimate
// subtracts the previously commanded motor motion so that self-induced
// apparent movement is not fed back.
struct CoarseController {
  ControllerGains gains;
  Vec2 integral{0.0, 0.0};
  Vec2 prev_spot{0.0, 0.0};
  Vec2 prev_cmd{0.0, 0.0};
  bool have_prev = false;

  Vec2 step(const CameraFrame& frame, double dt);  // rate command, deg/s
  void reset();
};

struct QuadReading {
  double right_top = 0.0;
  double left_top = 0.0;
  double left_bottom = 0.0;
  double right_bottom = 0.0;
  double sum() const { return right_top + left_top + left_bottom + right_bottom; }
};

// Gaussian spot split across the four quadrants, with additive electrical
// noise per quadrant. Zero optical power yields pure noise.
QuadReading quadcell_reading(const Vec2& spot_offset_deg, double total_power,
                             double noise_sigma, std::mt19937_64& rng,
                             double spot_sigma_deg = 0.1);

// Normalized position estimate ((right-left)/sum, (top-bottom)/sum),
// each component clamped to [-1, 1].
Vec2 quadcell_position(const QuadReading& r);

// Pure-integral fast-steering-mirror loop, nominally at 1 kHz.
struct FineLoop {
  double gain = 15.0;      // deg/s per unit of normalized quad-cell error
  double clamp_deg = 0.3;  // mirror throw
  Vec2 mirror_deg{0.0, 0.0};

  void step(const QuadReading& r, double dt);
};

struct DisturbanceModel {
  // Attitude jitter as a per-frame random-walk step; calibration knobs.
  double rx_walk_step_deg = 0.045;
  double tx_walk_step_deg = 0.001;
  double rx_camera_noise_deg = 0.01;
  double tx_camera_noise_deg = 0.005;
  double quad_noise_fraction = 0.02;      // of beacon power on the quad cell
  double tx_knowledge_sigma_deg = 0.08;   // GPS-derived aim at the aircraft
};

struct AcquisitionScenario {
  BeaconGeometry geometry;
  ControllerGains gains;
  DisturbanceModel disturbance;
  double frame_rate_hz = 50.0;
  double fine_rate_hz = 1000.0;
  double lock_threshold_deg = 0.15;
  int lock_frames = 10;
  double coast_timeout_s = 2.0;
  double spiral_speed_deg_s = 0.5;
  double spiral_pitch_deg = 0.35;
  double position_exchange_t_s = 0.0;
  // Optional beacon dropout injection at the receiver, for coasting tests.
  double dropout_start_s = -1.0;
  double dropout_duration_s = 0.0;
  std::uint64_t seed = 1;
  void validate() const;
};

struct TelemetryRow {
  double t_s = 0.0;
  int site = 0;  // 0 = tx (ground), 1 = rx (aircraft)
  PointingState state = PointingState::idle;
  double dev_x_deg = 0.0;
  double dev_y_deg = 0.0;
  double fine_dev_deg = 0.0;  // receiver rows only; 0 for the transmitter
  double cmd_az_deg_s = 0.0;
  double cmd_el_deg_s = 0.0;
};

struct AcquisitionResult {
  bool locked = false;          // both sites reached tracking
  double time_to_lock_s = -1.0; // from position exchange; -1 if never
  double rx_coarse_residual_mean_deg = 0.0;
  double tx_coarse_residual_mean_deg = 0.0;
  double fine_residual_mean_deg = 0.0;
  bool searching_during_dropout = false;
  std::vector<TelemetryRow> telemetry;
  // Per-frame receiver pointing-error magnitude, for the link budget.
  std::vector<double> rx_pointing_error_deg;
};

AcquisitionResult simulate_acquisition(const AcquisitionScenario& sc,
                                       const std::vector<kinematics::TrajectorySample>& traj);

void write_pointing_csv(const std::string& path, const std::vector<TelemetryRow>& rows);
std::vector<TelemetryRow> read_pointing_csv(const std::string& path);

}  // namespace airqkd::pointing

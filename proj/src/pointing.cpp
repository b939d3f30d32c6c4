#include "airqkd/pointing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "airqkd/constants.hpp"
#include "airqkd/rng.hpp"

namespace airqkd::pointing {

const char* to_string(PointingState s) {
  switch (s) {
    case PointingState::idle: return "idle";
    case PointingState::searching: return "searching";
    case PointingState::acquiring: return "acquiring";
    case PointingState::tracking: return "tracking";
    case PointingState::coasting: return "coasting";
  }
  return "?";
}

PointingState state_transition(PointingState s, PointingEvent e) {
  using S = PointingState;
  using E = PointingEvent;
  switch (s) {
    case S::idle:
      if (e == E::position_data_received) return S::searching;
      break;
    case S::searching:
      if (e == E::spot_found) return S::acquiring;
      break;
    case S::acquiring:
      if (e == E::lock_achieved) return S::tracking;
      break;
    case S::tracking:
      if (e == E::spot_lost) return S::coasting;
      break;
    case S::coasting:
      if (e == E::spot_found) return S::tracking;
      if (e == E::timeout) return S::searching;
      break;
  }
  return s;
}

void ControllerGains::validate() const {
  if (k_v < 0.0 || k_p < 0.0 || k_i < 0.0) throw std::invalid_argument("gains must be >= 0");
  if (rate_limit_deg_s <= 0.0) throw std::invalid_argument("rate_limit must be > 0");
  if (integrator_clamp < 0.0) throw std::invalid_argument("integrator_clamp must be >= 0");
}

void BeaconGeometry::validate() const {
  if (beacon_half_angle_deg <= 0.0 || irl_half_angle_deg <= 0.0 ||
      camera_fov_half_angle_deg <= 0.0)
    throw std::invalid_argument("beam cone and FOV half-angles must be > 0");
  if (irl_half_angle_deg <= beacon_half_angle_deg)
    throw std::invalid_argument("acquisition lamp must diverge wider than the beacon");
  if (inm_attitude_sigma_deg < 0.0) throw std::invalid_argument("attitude sigma must be >= 0");
}

void AcquisitionScenario::validate() const {
  geometry.validate();
  gains.validate();
  if (frame_rate_hz <= 0.0 || fine_rate_hz <= 0.0)
    throw std::invalid_argument("loop rates must be > 0");
  if (lock_threshold_deg <= 0.0 || lock_frames < 1)
    throw std::invalid_argument("lock criterion must be positive");
  if (coast_timeout_s <= 0.0) throw std::invalid_argument("coast timeout must be > 0");
  if (spiral_speed_deg_s <= 0.0 || spiral_pitch_deg <= 0.0)
    throw std::invalid_argument("spiral parameters must be > 0");
}

bool beacon_visible(double emitter_pointing_error_deg, double observer_offset_deg,
                    const BeaconGeometry& g, bool wide_infrared) {
  if (emitter_pointing_error_deg < 0.0 || observer_offset_deg < 0.0)
    throw std::invalid_argument("angles must be >= 0");
  double cone = wide_infrared ? g.irl_half_angle_deg : g.beacon_half_angle_deg;
  return emitter_pointing_error_deg < cone &&
         observer_offset_deg < g.camera_fov_half_angle_deg;
}

static Vec2 clamp_norm(const Vec2& v, double limit) {
  double n = v.norm();
  if (n <= limit || n == 0.0) return v;
  return v * (limit / n);
}

Vec2 CoarseController::step(const CameraFrame& frame, double dt) {
  Vec2 dev = frame.spot_deg;
  Vec2 vel{0.0, 0.0};
  if (have_prev) {
    // Apparent motion minus our own commanded motion gives the target rate.
    vel = (dev - prev_spot) * (1.0 / dt) + prev_cmd;
  }
  integral = integral + dev * dt;
  integral.x = std::clamp(integral.x, -gains.integrator_clamp, gains.integrator_clamp);
  integral.y = std::clamp(integral.y, -gains.integrator_clamp, gains.integrator_clamp);
  Vec2 cmd = vel * gains.k_v + dev * gains.k_p + integral * gains.k_i;
  cmd = clamp_norm(cmd, gains.rate_limit_deg_s);
  prev_spot = dev;
  prev_cmd = cmd;
  have_prev = true;
  return cmd;
}

void CoarseController::reset() {
  integral = {0.0, 0.0};
  prev_spot = {0.0, 0.0};
  prev_cmd = {0.0, 0.0};
  have_prev = false;
}

static double normal_cdf(double z) { return 0.5 * (1.0 + std::erf(z / std::sqrt(2.0))); }

QuadReading quadcell_reading(const Vec2& spot_offset_deg, double total_power,
                             double noise_sigma, std::mt19937_64& rng,
                             double spot_sigma_deg) {
  double fr = normal_cdf(spot_offset_deg.x / spot_sigma_deg);
  double ft = normal_cdf(spot_offset_deg.y / spot_sigma_deg);
  std::normal_distribution<double> noise(0.0, noise_sigma);
  QuadReading r;
  r.right_top = total_power * fr * ft + (noise_sigma > 0.0 ? noise(rng) : 0.0);
  r.left_top = total_power * (1.0 - fr) * ft + (noise_sigma > 0.0 ? noise(rng) : 0.0);
  r.left_bottom = total_power * (1.0 - fr) * (1.0 - ft) + (noise_sigma > 0.0 ? noise(rng) : 0.0);
  r.right_bottom = total_power * fr * (1.0 - ft) + (noise_sigma > 0.0 ? noise(rng) : 0.0);
  return r;
}

Vec2 quadcell_position(const QuadReading& r) {
  double dx = (r.right_top + r.right_bottom) - (r.left_top + r.left_bottom);
  double dy = (r.right_top + r.left_top) - (r.right_bottom + r.left_bottom);
  double denom = std::max(std::abs(r.sum()), 1e-15);
  return {std::clamp(dx / denom, -1.0, 1.0), std::clamp(dy / denom, -1.0, 1.0)};
}

void FineLoop::step(const QuadReading& r, double dt) {
  Vec2 err = quadcell_position(r);
  mirror_deg = mirror_deg + err * (gain * dt);
  mirror_deg.x = std::clamp(mirror_deg.x, -clamp_deg, clamp_deg);
  mirror_deg.y = std::clamp(mirror_deg.y, -clamp_deg, clamp_deg);
}

namespace {

struct SiteSim {
  PointingState state = PointingState::idle;
  CoarseController ctrl;
  Vec2 dev{0.0, 0.0};            // true target direction minus pointing
  Vec2 search_center{0.0, 0.0};  // predicted target in deviation space
  double spiral_phi = 0.0;
  double spiral_r0 = 0.0;
  double spiral_r_max = 0.0;
  int lock_count = 0;
  double coast_t = 0.0;
  Vec2 held_cmd{0.0, 0.0};
  double walk_step = 0.0;
  double cam_noise = 0.0;
};

Vec2 spiral_offset(const SiteSim& s, double pitch) {
  double r = s.spiral_r0 + pitch * s.spiral_phi / (2.0 * kPi);
  return {r * std::cos(s.spiral_phi), r * std::sin(s.spiral_phi)};
}

void begin_search(SiteSim& s, const Vec2& center) {
  s.state = PointingState::searching;
  s.search_center = center;
  s.spiral_phi = 0.0;
  s.lock_count = 0;
  s.ctrl.reset();
}

// Interpolate the line-of-sight angular rate, mapped to the local
// (cross-azimuth, elevation) plane shared by both sites.
Vec2 los_rate_at(const std::vector<kinematics::TrajectorySample>& traj, double t) {
  if (traj.empty()) return {0.0, 0.0};
  if (t <= traj.front().t_s) {
    const auto& a = traj.front();
    return {a.az_rate_dps * std::cos(deg2rad(a.elevation_deg)), a.el_rate_dps};
  }
  if (t >= traj.back().t_s) {
    const auto& b = traj.back();
    return {b.az_rate_dps * std::cos(deg2rad(b.elevation_deg)), b.el_rate_dps};
  }
  std::size_t hi = 1;
  while (hi < traj.size() && traj[hi].t_s < t) ++hi;
  const auto& a = traj[hi - 1];
  const auto& b = traj[hi];
  double f = (t - a.t_s) / std::max(b.t_s - a.t_s, 1e-12);
  double ax = a.az_rate_dps * std::cos(deg2rad(a.elevation_deg));
  double bx = b.az_rate_dps * std::cos(deg2rad(b.elevation_deg));
  double ay = a.el_rate_dps;
  double by = b.el_rate_dps;
  return {ax + f * (bx - ax), ay + f * (by - ay)};
}

}  // namespace

AcquisitionResult simulate_acquisition(const AcquisitionScenario& sc,
                                       const std::vector<kinematics::TrajectorySample>& traj) {
  sc.validate();
  if (traj.size() < 2) throw std::invalid_argument("trajectory needs at least two samples");

  auto rng = make_rng(sc.seed, 0x9017);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double dt = 1.0 / sc.frame_rate_hz;
  const int fine_substeps = std::max(1, static_cast<int>(std::lround(sc.fine_rate_hz / sc.frame_rate_hz)));
  const double fine_dt = dt / fine_substeps;

  SiteSim tx, rx;
  tx.walk_step = sc.disturbance.tx_walk_step_deg;
  tx.cam_noise = sc.disturbance.tx_camera_noise_deg;
  rx.walk_step = sc.disturbance.rx_walk_step_deg;
  rx.cam_noise = sc.disturbance.rx_camera_noise_deg;

  // Knowledge errors: the transmitter aims from exchanged GPS fixes; the
  // receiver aims from its inertial attitude solution.
  Vec2 tx_bias{gauss(rng) * sc.disturbance.tx_knowledge_sigma_deg,
               gauss(rng) * sc.disturbance.tx_knowledge_sigma_deg};
  Vec2 rx_bias{gauss(rng) * sc.geometry.inm_attitude_sigma_deg,
               gauss(rng) * sc.geometry.inm_attitude_sigma_deg};

  // Start the spiral just inside the camera FOV (the camera already covers
  // the center) and cap its radius near the knowledge uncertainty.
  tx.spiral_r0 = std::max(0.05, sc.geometry.camera_fov_half_angle_deg - sc.spiral_pitch_deg);
  rx.spiral_r0 = tx.spiral_r0;
  tx.spiral_r_max = std::max(3.0 * sc.disturbance.tx_knowledge_sigma_deg, tx.spiral_r0 + 0.5);
  rx.spiral_r_max = std::max(3.0 * sc.geometry.inm_attitude_sigma_deg, rx.spiral_r0 + 0.5);

  // Parked attitude before position data arrives.
  tx.dev = {15.0, -10.0};
  rx.dev = {-20.0, 12.0};

  AcquisitionResult res;
  const double t_begin = traj.front().t_s;
  const double t_end = traj.back().t_s;

  FineLoop fine;
  double rx_sum = 0.0, tx_sum = 0.0, fine_sum = 0.0;
  std::size_t rx_n = 0, tx_n = 0, fine_n = 0;

  for (double t = t_begin; t <= t_end + 1e-9; t += dt) {
    Vec2 los = los_rate_at(traj, t);
    bool dropout = sc.dropout_duration_s > 0.0 && t >= sc.dropout_start_s &&
                   t < sc.dropout_start_s + sc.dropout_duration_s;

    double tx_err = tx.dev.norm();
    double rx_err = rx.dev.norm();
    bool light_at_rx = !dropout && beacon_visible(tx_err, rx_err, sc.geometry, true);
    bool light_at_tx = beacon_visible(rx_err, tx_err, sc.geometry, false);
    double quad_power = (!dropout && tx_err < sc.geometry.beacon_half_angle_deg) ? 1.0 : 0.0;

    for (SiteSim* site : {&tx, &rx}) {
      bool is_rx = site == &rx;
      bool light = is_rx ? light_at_rx : light_at_tx;
      Vec2 walk{gauss(rng) * site->walk_step, gauss(rng) * site->walk_step};

      CameraFrame frame;
      frame.t_s = t;
      frame.has_spot = light && site->state != PointingState::idle;
      if (frame.has_spot) {
        frame.spot_deg = site->dev + Vec2{gauss(rng) * site->cam_noise, gauss(rng) * site->cam_noise};
        frame.snr = quad_power > 0.0 ? 100.0 : 10.0;
      }

      Vec2 cmd{0.0, 0.0};
      switch (site->state) {
        case PointingState::idle:
          if (t >= sc.position_exchange_t_s) {
            // Instant slew to the predicted direction; dev becomes the
            // knowledge error.
            site->dev = (is_rx ? rx_bias : tx_bias) * -1.0;
            begin_search(*site, site->dev);
          } else {
            site->dev = site->dev + los * dt;
          }
          break;
        case PointingState::searching:
          if (frame.has_spot) {
            site->state = state_transition(site->state, PointingEvent::spot_found);
            site->ctrl.reset();
            site->lock_count = 0;
            cmd = site->ctrl.step(frame, dt);
            site->dev = site->dev + (los - cmd) * dt;
          } else {
            double r = site->spiral_r0 + sc.spiral_pitch_deg * site->spiral_phi / (2.0 * kPi);
            if (r > site->spiral_r_max) site->spiral_phi = 0.0;
            site->spiral_phi += sc.spiral_speed_deg_s * dt / std::max(r, 0.05);
            Vec2 target = site->search_center + spiral_offset(*site, sc.spiral_pitch_deg);
            Vec2 step = clamp_norm(target - site->dev, sc.gains.rate_limit_deg_s * dt);
            site->dev = site->dev + step;
            cmd = step * (1.0 / dt) + los;  // GPS feed-forward holds the frame
          }
          break;
        case PointingState::acquiring:
          if (frame.has_spot) {
            cmd = site->ctrl.step(frame, dt);
            site->held_cmd = cmd;
            if (frame.spot_deg.norm() < sc.lock_threshold_deg) {
              if (++site->lock_count >= sc.lock_frames)
                site->state = state_transition(site->state, PointingEvent::lock_achieved);
            } else {
              site->lock_count = 0;
            }
          } else {
            cmd = site->held_cmd;
          }
          site->dev = site->dev + (los - cmd) * dt;
          break;
        case PointingState::tracking:
          if (frame.has_spot) {
            cmd = site->ctrl.step(frame, dt);
            site->held_cmd = cmd;
          } else {
            site->state = state_transition(site->state, PointingEvent::spot_lost);
            site->coast_t = 0.0;
            cmd = site->held_cmd;
          }
          site->dev = site->dev + (los - cmd) * dt;
          break;
        case PointingState::coasting:
          if (frame.has_spot) {
            site->state = state_transition(site->state, PointingEvent::spot_found);
            site->ctrl.have_prev = false;  // avoid a stale velocity estimate
            cmd = site->ctrl.step(frame, dt);
            site->held_cmd = cmd;
          } else {
            site->coast_t += dt;
            cmd = site->held_cmd;
            if (site->coast_t >= sc.coast_timeout_s) {
              site->state = state_transition(site->state, PointingEvent::timeout);
              begin_search(*site, site->dev);
            }
          }
          site->dev = site->dev + (los - cmd) * dt;
          break;
      }
      site->dev = site->dev + walk;

      TelemetryRow row;
      row.t_s = t;
      row.site = is_rx ? 1 : 0;
      row.state = site->state;
      row.dev_x_deg = site->dev.x;
      row.dev_y_deg = site->dev.y;
      row.cmd_az_deg_s = cmd.x;
      row.cmd_el_deg_s = cmd.y;
      res.telemetry.push_back(row);
    }

    // Receiver fine loop: the quad cell sees the beacon after the
    // fast-steering mirror's correction.
    double fine_dev = 0.0;
    for (int k = 0; k < fine_substeps; ++k) {
      Vec2 offset = rx.dev - fine.mirror_deg;
      QuadReading q = quadcell_reading(offset, quad_power,
                                       sc.disturbance.quad_noise_fraction, rng);
      fine.step(q, fine_dt);
    }
    fine_dev = (rx.dev - fine.mirror_deg).norm();
    res.telemetry[res.telemetry.size() - 1].fine_dev_deg = fine_dev;

    res.rx_pointing_error_deg.push_back(rx.dev.norm());

    if (dropout && rx.state == PointingState::searching) res.searching_during_dropout = true;

    if (!res.locked && tx.state == PointingState::tracking &&
        rx.state == PointingState::tracking) {
      res.locked = true;
      res.time_to_lock_s = t - sc.position_exchange_t_s;
    }
    if (rx.state == PointingState::tracking) {
      rx_sum += rx.dev.norm();
      ++rx_n;
      if (quad_power > 0.0) {
        fine_sum += fine_dev;
        ++fine_n;
      }
    }
    if (tx.state == PointingState::tracking) {
      tx_sum += tx.dev.norm();
      ++tx_n;
    }
  }

  if (rx_n) res.rx_coarse_residual_mean_deg = rx_sum / rx_n;
  if (tx_n) res.tx_coarse_residual_mean_deg = tx_sum / tx_n;
  if (fine_n) res.fine_residual_mean_deg = fine_sum / fine_n;
  return res;
}

void write_pointing_csv(const std::string& path, const std::vector<TelemetryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "t,site,state,dev_x_deg,dev_y_deg,fine_dev_deg,cmd_az,cmd_el\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.3f,%s,%s,%.6f,%.6f,%.6f,%.4f,%.4f\n", r.t_s,
                  r.site == 1 ? "rx" : "tx", to_string(r.state), r.dev_x_deg, r.dev_y_deg,
                  r.fine_dev_deg, r.cmd_az_deg_s, r.cmd_el_deg_s);
    out << buf;
  }
}

std::vector<TelemetryRow> read_pointing_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<TelemetryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    TelemetryRow r;
    std::getline(ss, cell, ',');
    r.t_s = std::stod(cell);
    std::getline(ss, cell, ',');
    r.site = cell == "rx" ? 1 : 0;
    std::getline(ss, cell, ',');
    for (PointingState s : {PointingState::idle, PointingState::searching,
                            PointingState::acquiring, PointingState::tracking,
                            PointingState::coasting})
      if (cell == to_string(s)) r.state = s;
    std::getline(ss, cell, ',');
    r.dev_x_deg = std::stod(cell);
    std::getline(ss, cell, ',');
    r.dev_y_deg = std::stod(cell);
    std::getline(ss, cell, ',');
    r.fine_dev_deg = std::stod(cell);
    std::getline(ss, cell, ',');
    r.cmd_az_deg_s = std::stod(cell);
    std::getline(ss, cell, ',');
    r.cmd_el_deg_s = std::stod(cell);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace airqkd::pointing

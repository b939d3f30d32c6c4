#include "airqkd/runner.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>

#include "airqkd/constants.hpp"
#include "airqkd/rng.hpp"

namespace airqkd::runner {

using nlohmann::json;

namespace {

template <typename T>
void get_to(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) it->get_to(out);
}

const char* kind_name(kinematics::PassKind k) {
  switch (k) {
    case kinematics::PassKind::arc: return "arc";
    case kinematics::PassKind::line: return "line";
    case kinematics::PassKind::satellite: return "satellite";
  }
  return "arc";
}

kinematics::PassKind kind_from(const std::string& s) {
  if (s == "arc") return kinematics::PassKind::arc;
  if (s == "line") return kinematics::PassKind::line;
  if (s == "satellite") return kinematics::PassKind::satellite;
  throw std::invalid_argument("unknown pass kind: " + s);
}

void parse_pass(const json& j, kinematics::PassConfig& p) {
  if (auto it = j.find("kind"); it != j.end()) p.kind = kind_from(it->get<std::string>());
  if (auto it = j.find("station"); it != j.end()) {
    get_to(*it, "latitude_deg", p.station.latitude_deg);
    get_to(*it, "longitude_deg", p.station.longitude_deg);
    get_to(*it, "altitude_m", p.station.altitude_m);
  }
  get_to(j, "nominal_distance_m", p.nominal_distance_m);
  get_to(j, "speed_kmh", p.speed_kmh);
  get_to(j, "platform_altitude_m", p.platform_altitude_m);
  get_to(j, "start_bearing_deg", p.start_bearing_deg);
  get_to(j, "orbit_altitude_m", p.orbit_altitude_m);
  get_to(j, "max_elevation_deg", p.max_elevation_deg);
  get_to(j, "duration_s", p.duration_s);
  get_to(j, "sample_interval_s", p.sample_interval_s);
  get_to(j, "gps_noise_sigma_m", p.gps_noise_sigma_m);
  get_to(j, "gps_noise_seed", p.gps_noise_seed);
}

json pass_json(const kinematics::PassConfig& p) {
  return {{"kind", kind_name(p.kind)},
          {"station",
           {{"latitude_deg", p.station.latitude_deg},
            {"longitude_deg", p.station.longitude_deg},
            {"altitude_m", p.station.altitude_m}}},
          {"nominal_distance_m", p.nominal_distance_m},
          {"speed_kmh", p.speed_kmh},
          {"platform_altitude_m", p.platform_altitude_m},
          {"start_bearing_deg", p.start_bearing_deg},
          {"orbit_altitude_m", p.orbit_altitude_m},
          {"max_elevation_deg", p.max_elevation_deg},
          {"duration_s", p.duration_s},
          {"sample_interval_s", p.sample_interval_s},
          {"gps_noise_sigma_m", p.gps_noise_sigma_m},
          {"gps_noise_seed", p.gps_noise_seed}};
}

void parse_link(const json& j, channel::LinkBudgetParams& p) {
  get_to(j, "wavelength_m", p.wavelength_m);
  get_to(j, "tx_aperture_diameter_m", p.tx_aperture_diameter_m);
  get_to(j, "rx_aperture_diameter_m", p.rx_aperture_diameter_m);
  get_to(j, "beam_divergence_half_angle_rad", p.beam_divergence_half_angle_rad);
  get_to(j, "rx_optics_transmittance", p.rx_optics_transmittance);
  get_to(j, "detector_efficiency", p.detector_efficiency);
  get_to(j, "cn2_ground", p.cn2_ground);
  get_to(j, "wind_speed_mps", p.wind_speed_mps);
  get_to(j, "visibility_m", p.visibility_m);
  get_to(j, "ground_altitude_m", p.ground_altitude_m);
  get_to(j, "pointing_sigma_rad", p.pointing_sigma_rad);
  get_to(j, "dark_rate_total_hz", p.dark_rate_total_hz);
  get_to(j, "stray_rate_hz", p.stray_rate_hz);
  get_to(j, "loss_jitter_sigma_db", p.loss_jitter_sigma_db);
}

json link_json(const channel::LinkBudgetParams& p) {
  return {{"wavelength_m", p.wavelength_m},
          {"tx_aperture_diameter_m", p.tx_aperture_diameter_m},
          {"rx_aperture_diameter_m", p.rx_aperture_diameter_m},
          {"beam_divergence_half_angle_rad", p.beam_divergence_half_angle_rad},
          {"rx_optics_transmittance", p.rx_optics_transmittance},
          {"detector_efficiency", p.detector_efficiency},
          {"cn2_ground", p.cn2_ground},
          {"wind_speed_mps", p.wind_speed_mps},
          {"visibility_m", p.visibility_m},
          {"ground_altitude_m", p.ground_altitude_m},
          {"pointing_sigma_rad", p.pointing_sigma_rad},
          {"dark_rate_total_hz", p.dark_rate_total_hz},
          {"stray_rate_hz", p.stray_rate_hz},
          {"loss_jitter_sigma_db", p.loss_jitter_sigma_db}};
}

void parse_source(const json& j, transmitter::SourceConfig& s) {
  get_to(j, "clock_rate_hz", s.clock_rate_hz);
  get_to(j, "mu", s.mu);
  get_to(j, "nu", s.nu);
  get_to(j, "p_signal", s.p_signal);
  get_to(j, "p_decoy", s.p_decoy);
  get_to(j, "p_vacuum", s.p_vacuum);
  get_to(j, "sequence_length", s.sequence_length);
  get_to(j, "true_random_mode", s.true_random_mode);
}

json source_json(const transmitter::SourceConfig& s) {
  return {{"clock_rate_hz", s.clock_rate_hz}, {"mu", s.mu},
          {"nu", s.nu},                       {"p_signal", s.p_signal},
          {"p_decoy", s.p_decoy},             {"p_vacuum", s.p_vacuum},
          {"sequence_length", s.sequence_length}, {"true_random_mode", s.true_random_mode}};
}

void parse_analyzer(const json& j, receiver::AnalyzerConfig& a) {
  get_to(j, "basis_split", a.basis_split);
  get_to(j, "contrast", a.contrast);
}

json analyzer_json(const receiver::AnalyzerConfig& a) {
  return {{"basis_split", a.basis_split}, {"contrast", a.contrast}};
}

void parse_detector(const json& j, receiver::DetectorConfig& d) {
  get_to(j, "efficiency", d.efficiency);
  get_to(j, "dark_rate_per_detector_hz", d.dark_rate_per_detector_hz);
  get_to(j, "dead_time_s", d.dead_time_s);
  get_to(j, "timing_jitter_sigma_s", d.timing_jitter_sigma_s);
  get_to(j, "tag_resolution_s", d.tag_resolution_s);
}

json detector_json(const receiver::DetectorConfig& d) {
  return {{"efficiency", d.efficiency},
          {"dark_rate_per_detector_hz", d.dark_rate_per_detector_hz},
          {"dead_time_s", d.dead_time_s},
          {"timing_jitter_sigma_s", d.timing_jitter_sigma_s},
          {"tag_resolution_s", d.tag_resolution_s}};
}

void parse_pointing(const json& j, pointing::AcquisitionScenario& sc, bool& enabled) {
  get_to(j, "enabled", enabled);
  if (auto it = j.find("geometry"); it != j.end()) {
    get_to(*it, "beacon_half_angle_deg", sc.geometry.beacon_half_angle_deg);
    get_to(*it, "irl_half_angle_deg", sc.geometry.irl_half_angle_deg);
    get_to(*it, "inm_attitude_sigma_deg", sc.geometry.inm_attitude_sigma_deg);
    get_to(*it, "camera_fov_half_angle_deg", sc.geometry.camera_fov_half_angle_deg);
  }
  if (auto it = j.find("gains"); it != j.end()) {
    get_to(*it, "k_v", sc.gains.k_v);
    get_to(*it, "k_p", sc.gains.k_p);
    get_to(*it, "k_i", sc.gains.k_i);
    get_to(*it, "rate_limit_deg_s", sc.gains.rate_limit_deg_s);
    get_to(*it, "integrator_clamp", sc.gains.integrator_clamp);
  }
  if (auto it = j.find("disturbance"); it != j.end()) {
    get_to(*it, "rx_walk_step_deg", sc.disturbance.rx_walk_step_deg);
    get_to(*it, "tx_walk_step_deg", sc.disturbance.tx_walk_step_deg);
    get_to(*it, "rx_camera_noise_deg", sc.disturbance.rx_camera_noise_deg);
    get_to(*it, "tx_camera_noise_deg", sc.disturbance.tx_camera_noise_deg);
    get_to(*it, "quad_noise_fraction", sc.disturbance.quad_noise_fraction);
    get_to(*it, "tx_knowledge_sigma_deg", sc.disturbance.tx_knowledge_sigma_deg);
  }
  get_to(j, "frame_rate_hz", sc.frame_rate_hz);
  get_to(j, "fine_rate_hz", sc.fine_rate_hz);
  get_to(j, "lock_threshold_deg", sc.lock_threshold_deg);
  get_to(j, "lock_frames", sc.lock_frames);
  get_to(j, "coast_timeout_s", sc.coast_timeout_s);
  get_to(j, "spiral_speed_deg_s", sc.spiral_speed_deg_s);
  get_to(j, "spiral_pitch_deg", sc.spiral_pitch_deg);
  get_to(j, "position_exchange_t_s", sc.position_exchange_t_s);
  get_to(j, "dropout_start_s", sc.dropout_start_s);
  get_to(j, "dropout_duration_s", sc.dropout_duration_s);
}

json pointing_json(const pointing::AcquisitionScenario& sc, bool enabled) {
  return {{"enabled", enabled},
          {"geometry",
           {{"beacon_half_angle_deg", sc.geometry.beacon_half_angle_deg},
            {"irl_half_angle_deg", sc.geometry.irl_half_angle_deg},
            {"inm_attitude_sigma_deg", sc.geometry.inm_attitude_sigma_deg},
            {"camera_fov_half_angle_deg", sc.geometry.camera_fov_half_angle_deg}}},
          {"gains",
           {{"k_v", sc.gains.k_v},
            {"k_p", sc.gains.k_p},
            {"k_i", sc.gains.k_i},
            {"rate_limit_deg_s", sc.gains.rate_limit_deg_s},
            {"integrator_clamp", sc.gains.integrator_clamp}}},
          {"disturbance",
           {{"rx_walk_step_deg", sc.disturbance.rx_walk_step_deg},
            {"tx_walk_step_deg", sc.disturbance.tx_walk_step_deg},
            {"rx_camera_noise_deg", sc.disturbance.rx_camera_noise_deg},
            {"tx_camera_noise_deg", sc.disturbance.tx_camera_noise_deg},
            {"quad_noise_fraction", sc.disturbance.quad_noise_fraction},
            {"tx_knowledge_sigma_deg", sc.disturbance.tx_knowledge_sigma_deg}}},
          {"frame_rate_hz", sc.frame_rate_hz},
          {"fine_rate_hz", sc.fine_rate_hz},
          {"lock_threshold_deg", sc.lock_threshold_deg},
          {"lock_frames", sc.lock_frames},
          {"coast_timeout_s", sc.coast_timeout_s},
          {"spiral_speed_deg_s", sc.spiral_speed_deg_s},
          {"spiral_pitch_deg", sc.spiral_pitch_deg},
          {"position_exchange_t_s", sc.position_exchange_t_s},
          {"dropout_start_s", sc.dropout_start_s},
          {"dropout_duration_s", sc.dropout_duration_s}};
}

void parse_distill(const json& j, distill::DistillConfig& d) {
  get_to(j, "snr_threshold", d.snr_threshold);
  get_to(j, "n_sigma", d.n_sigma);
  get_to(j, "f_target", d.f_target);
  get_to(j, "block_len", d.block_len);
  get_to(j, "t_ver", d.t_ver);
  get_to(j, "t_pa", d.t_pa);
  if (auto it = j.find("correlation"); it != j.end()) {
    get_to(*it, "peak_threshold", d.correlation.peak_threshold);
    get_to(*it, "phase_bins", d.correlation.phase_bins);
    get_to(*it, "accept_window_s", d.correlation.accept_window_s);
    get_to(*it, "frame_s", d.correlation.frame_s);
    get_to(*it, "min_events", d.correlation.min_events);
    get_to(*it, "pattern_alignment", d.correlation.pattern_alignment);
  }
}

json distill_json(const distill::DistillConfig& d) {
  return {{"snr_threshold", d.snr_threshold},
          {"n_sigma", d.n_sigma},
          {"f_target", d.f_target},
          {"block_len", d.block_len},
          {"t_ver", d.t_ver},
          {"t_pa", d.t_pa},
          {"correlation",
           {{"peak_threshold", d.correlation.peak_threshold},
            {"phase_bins", d.correlation.phase_bins},
            {"accept_window_s", d.correlation.accept_window_s},
            {"frame_s", d.correlation.frame_s},
            {"min_events", d.correlation.min_events},
            {"pattern_alignment", d.correlation.pattern_alignment}}}};
}

Vec3 station_frame_position(const kinematics::GeoPoint& g) {
  double r = kEarthRadius + g.altitude_m;
  double lat = deg2rad(g.latitude_deg), lon = deg2rad(g.longitude_deg);
  return {r * std::cos(lat) * std::cos(lon), r * std::cos(lat) * std::sin(lon),
          r * std::sin(lat)};
}

std::string fmt(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

std::string fmt_or(double v, int prec, double scale = 1.0) {
  if (v < 0.0) return "n/a";
  return fmt(v * scale, prec);
}

}  // namespace

Seeds Seeds::resolved() const {
  Seeds s = *this;
  auto fill = [&](std::uint64_t& v, std::uint64_t stream) {
    if (v == 0) v = derive_seed(master, stream);
  };
  fill(s.gps, 0xa001);
  fill(s.fading, 0xa002);
  fill(s.source, 0xa003);
  fill(s.pointing, 0xa004);
  fill(s.events, 0xa005);
  fill(s.detector, 0xa006);
  fill(s.distill, 0xa007);
  fill(s.fiber, 0xa008);
  fill(s.tomography, 0xa009);
  return s;
}

void RunConfig::validate() const {
  if (schema_version != 1) throw std::invalid_argument("unsupported schema_version");
  if (name.empty()) throw std::invalid_argument("pass name must not be empty");
  pass.validate();
  link.validate();
  if (pointing_enabled) pointing.validate();
  if (source.true_random_mode)
    throw std::invalid_argument(
        "the pass runner requires the repeating slot table; per-second "
        "re-randomization is not supported here");
  EventSimConfig probe;
  probe.source = source;
  probe.analyzer = analyzer;
  probe.detector = detector;
  probe.budget_detector_efficiency = link.detector_efficiency;
  probe.polarization = polarization;
  probe.clock = clock;
  probe.validate();
  if (gps_bias.sigma_m < 0.0) throw std::invalid_argument("gps bias sigma must be >= 0");
  if (!(gps_bias.tau_s > 0.0)) throw std::invalid_argument("gps bias tau must be positive");
  if (distill.block_len < 2) throw std::invalid_argument("block length too small");
  if (!(snr_auto_background_factor > 0.0))
    throw std::invalid_argument("snr auto factor must be positive");
  if (pin_mean_loss_db < 0.0) throw std::invalid_argument("pinned loss must be >= 0 dB");
  if (quantum_window.stop_s > quantum_window.start_s &&
      quantum_window.start_s >= pass.duration_s)
    throw std::invalid_argument("quantum window starts after the pass ends");
}

RunConfig config_from_json(const std::string& text) {
  json j = json::parse(text);
  RunConfig c;
  get_to(j, "schema_version", c.schema_version);
  get_to(j, "name", c.name);
  get_to(j, "out_dir", c.out_dir);
  if (auto it = j.find("pass"); it != j.end()) parse_pass(*it, c.pass);
  if (auto it = j.find("link"); it != j.end()) parse_link(*it, c.link);
  if (auto it = j.find("source"); it != j.end()) parse_source(*it, c.source);
  if (auto it = j.find("analyzer"); it != j.end()) parse_analyzer(*it, c.analyzer);
  if (auto it = j.find("detector"); it != j.end()) parse_detector(*it, c.detector);
  if (auto it = j.find("pointing"); it != j.end())
    parse_pointing(*it, c.pointing, c.pointing_enabled);
  if (auto it = j.find("polarization"); it != j.end()) {
    get_to(*it, "fiber_correlation_time_s", c.polarization.fiber_correlation_time_s);
    get_to(*it, "fiber_amplitude_rad", c.polarization.fiber_amplitude_rad);
    get_to(*it, "depolarization", c.polarization.depolarization);
    get_to(*it, "tomography_photons_per_axis", c.polarization.tomography_photons_per_axis);
    get_to(*it, "compensation_interval_s", c.polarization.compensation_interval_s);
  }
  if (auto it = j.find("clock"); it != j.end()) {
    get_to(*it, "offset_s", c.clock.offset_s);
    get_to(*it, "drift_s_per_s", c.clock.drift_s_per_s);
  }
  if (auto it = j.find("gps_bias"); it != j.end()) {
    get_to(*it, "sigma_m", c.gps_bias.sigma_m);
    get_to(*it, "tau_s", c.gps_bias.tau_s);
  }
  if (auto it = j.find("quantum_window"); it != j.end()) {
    get_to(*it, "start_s", c.quantum_window.start_s);
    get_to(*it, "stop_s", c.quantum_window.stop_s);
  }
  if (auto it = j.find("distill"); it != j.end()) parse_distill(*it, c.distill);
  get_to(j, "snr_threshold_auto", c.snr_threshold_auto);
  get_to(j, "snr_auto_background_factor", c.snr_auto_background_factor);
  get_to(j, "pin_mean_loss_db", c.pin_mean_loss_db);
  get_to(j, "force_link_off", c.force_link_off);
  if (auto it = j.find("seeds"); it != j.end()) {
    get_to(*it, "master", c.seeds.master);
    get_to(*it, "gps", c.seeds.gps);
    get_to(*it, "fading", c.seeds.fading);
    get_to(*it, "source", c.seeds.source);
    get_to(*it, "pointing", c.seeds.pointing);
    get_to(*it, "events", c.seeds.events);
    get_to(*it, "detector", c.seeds.detector);
    get_to(*it, "distill", c.seeds.distill);
    get_to(*it, "fiber", c.seeds.fiber);
    get_to(*it, "tomography", c.seeds.tomography);
  }
  return c;
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["name"] = c.name;
  j["out_dir"] = c.out_dir;
  j["pass"] = pass_json(c.pass);
  j["link"] = link_json(c.link);
  j["source"] = source_json(c.source);
  j["analyzer"] = analyzer_json(c.analyzer);
  j["detector"] = detector_json(c.detector);
  j["pointing"] = pointing_json(c.pointing, c.pointing_enabled);
  j["polarization"] = {
      {"fiber_correlation_time_s", c.polarization.fiber_correlation_time_s},
      {"fiber_amplitude_rad", c.polarization.fiber_amplitude_rad},
      {"depolarization", c.polarization.depolarization},
      {"tomography_photons_per_axis", c.polarization.tomography_photons_per_axis},
      {"compensation_interval_s", c.polarization.compensation_interval_s}};
  j["clock"] = {{"offset_s", c.clock.offset_s}, {"drift_s_per_s", c.clock.drift_s_per_s}};
  j["gps_bias"] = {{"sigma_m", c.gps_bias.sigma_m}, {"tau_s", c.gps_bias.tau_s}};
  j["quantum_window"] = {{"start_s", c.quantum_window.start_s},
                         {"stop_s", c.quantum_window.stop_s}};
  j["distill"] = distill_json(c.distill);
  j["snr_threshold_auto"] = c.snr_threshold_auto;
  j["snr_auto_background_factor"] = c.snr_auto_background_factor;
  j["pin_mean_loss_db"] = c.pin_mean_loss_db;
  j["force_link_off"] = c.force_link_off;
  j["seeds"] = {{"master", c.seeds.master},   {"gps", c.seeds.gps},
                {"fading", c.seeds.fading},   {"source", c.seeds.source},
                {"pointing", c.seeds.pointing}, {"events", c.seeds.events},
                {"detector", c.seeds.detector}, {"distill", c.seeds.distill},
                {"fiber", c.seeds.fiber},     {"tomography", c.seeds.tomography}};
  return j.dump(2);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string summary_to_json(const PassSummary& s) {
  json j;
  j["pass_id"] = s.pass_id;
  j["status"] = s.status;
  j["classical_link_s"] = s.classical_link_s;
  j["quantum_link_s"] = s.quantum_link_s;
  j["mean_speed_kmh"] = s.mean_speed_kmh;
  j["max_angular_speed_dps"] = s.max_angular_speed_dps;
  j["tx_pointing_error_deg"] = s.tx_pointing_error_deg;
  j["rx_pointing_error_deg"] = s.rx_pointing_error_deg;
  j["rx_fine_error_deg"] = s.rx_fine_error_deg;
  j["source_qber_pct"] = s.source_qber_pct;
  j["signal_qber_pct"] = s.signal_qber_pct;
  j["decoy_qber_pct"] = s.decoy_qber_pct;
  j["theoretical_loss_db"] = s.theoretical_loss_db;
  j["measured_loss_db"] = s.measured_loss_db;
  j["link_series_loss_db"] = s.link_series_loss_db;
  j["ec_efficiency"] = s.ec_efficiency;
  j["snr_threshold"] = s.snr_threshold;
  j["sifted_bits"] = s.sifted_bits;
  j["secure_bits"] = s.secure_bits;
  j["secure_bits_asymptotic"] = s.secure_bits_asymptotic;
  j["has_secure_key"] = s.has_secure_key;
  return j.dump(2);
}

PassSummary summary_from_json(const std::string& text) {
  json j = json::parse(text);
  PassSummary s;
  get_to(j, "pass_id", s.pass_id);
  get_to(j, "status", s.status);
  get_to(j, "classical_link_s", s.classical_link_s);
  get_to(j, "quantum_link_s", s.quantum_link_s);
  get_to(j, "mean_speed_kmh", s.mean_speed_kmh);
  get_to(j, "max_angular_speed_dps", s.max_angular_speed_dps);
  get_to(j, "tx_pointing_error_deg", s.tx_pointing_error_deg);
  get_to(j, "rx_pointing_error_deg", s.rx_pointing_error_deg);
  get_to(j, "rx_fine_error_deg", s.rx_fine_error_deg);
  get_to(j, "source_qber_pct", s.source_qber_pct);
  get_to(j, "signal_qber_pct", s.signal_qber_pct);
  get_to(j, "decoy_qber_pct", s.decoy_qber_pct);
  get_to(j, "theoretical_loss_db", s.theoretical_loss_db);
  get_to(j, "measured_loss_db", s.measured_loss_db);
  get_to(j, "link_series_loss_db", s.link_series_loss_db);
  get_to(j, "ec_efficiency", s.ec_efficiency);
  get_to(j, "snr_threshold", s.snr_threshold);
  get_to(j, "sifted_bits", s.sifted_bits);
  get_to(j, "secure_bits", s.secure_bits);
  get_to(j, "secure_bits_asymptotic", s.secure_bits_asymptotic);
  get_to(j, "has_secure_key", s.has_secure_key);
  return s;
}

RunResult run_pass(const RunConfig& cfg_in, SlotSampling sampling) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  cfg.seeds = cfg.seeds.resolved();
  const Seeds& seeds = cfg.seeds;

  RunResult rr;
  auto pass_cfg = cfg.pass;
  pass_cfg.gps_noise_sigma_m = 0.0;  // range knowledge error enters below
  rr.trajectory = kinematics::generate_trajectory(pass_cfg);
  const auto& traj = rr.trajectory;
  if (traj.size() < 2) throw std::runtime_error("trajectory has fewer than two samples");
  const double duration = traj.back().t_s;
  const int seconds = static_cast<int>(std::ceil(duration - 1e-9));

  double qw0 = std::max(0.0, cfg.quantum_window.start_s);
  double qw1 = cfg.quantum_window.stop_s > cfg.quantum_window.start_s
                   ? std::min(cfg.quantum_window.stop_s, duration)
                   : duration;

  // Acquisition, plus per-second contact (classical) and tracking masks.
  rr.classical_on_s.assign(static_cast<std::size_t>(seconds), 1);
  std::vector<char> track_ok(static_cast<std::size_t>(seconds), 1);
  double tx_sigma_axis_deg = -1.0;
  if (cfg.pointing_enabled) {
    auto sc = cfg.pointing;
    sc.seed = seeds.pointing;
    rr.acquisition = pointing::simulate_acquisition(sc, traj);
    struct Tally {
      int n = 0, contact = 0, track = 0;
    };
    std::vector<std::array<Tally, 2>> tally(static_cast<std::size_t>(seconds));
    double dev2 = 0.0;
    long long ndev = 0;
    for (const auto& row : rr.acquisition.telemetry) {
      int s = static_cast<int>(row.t_s);
      if (s < 0 || s >= seconds || row.site < 0 || row.site > 1) continue;
      auto& t = tally[static_cast<std::size_t>(s)][static_cast<std::size_t>(row.site)];
      ++t.n;
      bool contact = row.state == pointing::PointingState::acquiring ||
                     row.state == pointing::PointingState::tracking ||
                     row.state == pointing::PointingState::coasting;
      if (contact) ++t.contact;
      if (row.state == pointing::PointingState::tracking) {
        ++t.track;
        if (row.site == 0) {
          dev2 += row.dev_x_deg * row.dev_x_deg + row.dev_y_deg * row.dev_y_deg;
          ++ndev;
        }
      }
    }
    for (int s = 0; s < seconds; ++s) {
      const auto& a = tally[static_cast<std::size_t>(s)][0];
      const auto& b = tally[static_cast<std::size_t>(s)][1];
      rr.classical_on_s[static_cast<std::size_t>(s)] =
          a.n > 0 && b.n > 0 && 2 * a.contact >= a.n && 2 * b.contact >= b.n;
      track_ok[static_cast<std::size_t>(s)] =
          a.n > 0 && b.n > 0 && 2 * a.track >= a.n && 2 * b.track >= b.n;
    }
    if (ndev > 0) tx_sigma_axis_deg = std::sqrt(dev2 / (2.0 * static_cast<double>(ndev)));
  }
  rr.quantum_on_s.assign(static_cast<std::size_t>(seconds), 0);
  for (int s = 0; s < seconds; ++s) {
    bool in_window = (s + 0.5) >= qw0 && (s + 0.5) < qw1;
    rr.quantum_on_s[static_cast<std::size_t>(s)] =
        track_ok[static_cast<std::size_t>(s)] && in_window && !cfg.force_link_off;
  }

  // Link budget; tracking telemetry supplies the beam's pointing jitter when
  // the config leaves it unset.
  auto lp = cfg.link;
  if (lp.pointing_sigma_rad == 0.0 && tx_sigma_axis_deg > 0.0)
    lp.pointing_sigma_rad = deg2rad(tx_sigma_axis_deg);
  rr.link = channel::link_series(traj, lp, seeds.fading);

  auto mean_loss_over = [&](auto&& value, const std::vector<char>& mask) {
    double acc = 0.0;
    long long n = 0;
    for (std::size_t i = 0; i < traj.size(); ++i) {
      int s = static_cast<int>(traj[i].t_s);
      if (s < 0 || s >= seconds || !mask[static_cast<std::size_t>(s)]) continue;
      acc += value(i);
      ++n;
    }
    return n ? acc / static_cast<double>(n) : -1.0;
  };
  std::vector<char> window_mask(static_cast<std::size_t>(seconds), 0);
  for (int s = 0; s < seconds; ++s)
    window_mask[static_cast<std::size_t>(s)] = (s + 0.5) >= qw0 && (s + 0.5) < qw1;
  const auto& loss_mask =
      std::any_of(rr.quantum_on_s.begin(), rr.quantum_on_s.end(), [](char c) { return c; })
          ? rr.quantum_on_s
          : window_mask;
  double theoretical_db = mean_loss_over(
      [&](std::size_t i) { return channel::total_loss(traj[i], lp).loss_db; }, loss_mask);

  rr.loss_shift_db = 0.0;
  if (cfg.pin_mean_loss_db > 0.0)
    rr.loss_shift_db = channel::pin_mean_loss(rr.link, cfg.pin_mean_loss_db, qw0, qw1);
  double series_db =
      mean_loss_over([&](std::size_t i) { return rr.link[i].loss_db; }, loss_mask);

  // Event stream.
  auto table = transmitter::generate_sequence(cfg.source, seeds.source);
  EventSimConfig ecfg;
  ecfg.source = cfg.source;
  ecfg.analyzer = cfg.analyzer;
  ecfg.detector = cfg.detector;
  ecfg.budget_detector_efficiency = lp.detector_efficiency;
  ecfg.clock = cfg.clock;
  ecfg.polarization = cfg.polarization;
  ecfg.seed_events = seeds.events;
  ecfg.seed_detector = seeds.detector;
  ecfg.seed_fiber = seeds.fiber;
  ecfg.seed_tomography = seeds.tomography;

  std::vector<std::pair<double, double>> tof_true;
  tof_true.reserve(traj.size());
  for (const auto& s : traj) tof_true.emplace_back(s.t_s, s.tof_s);

  auto sim = simulate_detections(ecfg, table, rr.link, tof_true, duration, rr.quantum_on_s,
                                 sampling);
  rr.detections = static_cast<long long>(sim.detections.size());
  rr.arrivals = sim.arrivals;

  // The correlator never sees the true flight times: its copy carries a
  // slowly wandering range-knowledge bias, the way shared position fixes do.
  auto tof_known = tof_true;
  if (cfg.gps_bias.sigma_m > 0.0) {
    auto rng = make_rng(seeds.gps, 0x6b1a);
    std::normal_distribution<double> g(0.0, 1.0);
    const double sig = cfg.gps_bias.sigma_m / kSpeedOfLight;
    double b = sig * g(rng);
    for (std::size_t i = 0; i < tof_known.size(); ++i) {
      tof_known[i].second += b;
      if (i + 1 < tof_known.size()) {
        double dt = tof_known[i + 1].first - tof_known[i].first;
        double a = std::exp(-dt / cfg.gps_bias.tau_s);
        b = b * a + sig * std::sqrt(std::max(0.0, 1.0 - a * a)) * g(rng);
      }
    }
  }

  auto dcfg = cfg.distill;
  dcfg.seed = seeds.distill;
  dcfg.correlation.clock_hz = cfg.source.clock_rate_hz;
  dcfg.correlation.sequence_length = static_cast<int>(cfg.source.sequence_length);
  dcfg.correlation.tag_resolution_s = cfg.detector.tag_resolution_s;
  auto background_total_hz = [&](double t) {
    auto it = std::upper_bound(rr.link.begin(), rr.link.end(), t,
                               [](double v, const auto& s) { return v < s.t_s; });
    if (it != rr.link.begin()) --it;
    return std::max(it->background_rate_hz, 4.0 * cfg.detector.dark_rate_per_detector_hz);
  };
  if (cfg.snr_threshold_auto) {
    double acc = 0.0;
    long long n = 0;
    for (int s = 0; s < seconds; ++s) {
      acc += background_total_hz(s + 0.5);
      ++n;
    }
    if (n)
      dcfg.snr_threshold =
          std::max(1000.0, cfg.snr_auto_background_factor * acc / static_cast<double>(n));
  }

  rr.report = distill::distill_pass(cfg.source, table, sim.detections, tof_known, duration,
                                    dcfg);

  // Loss recovered from counts: background-subtracted detections per photon
  // emitted while the quantum link was up.
  double mean_photons_slot = 0.0;
  for (const auto& s : table) mean_photons_slot += cfg.source.mean_photons(s.intensity);
  mean_photons_slot /= static_cast<double>(table.size());
  double photons_on = 0.0, bg_on = 0.0, det_on = 0.0;
  for (int s = 0; s < seconds; ++s) {
    if (!rr.quantum_on_s[static_cast<std::size_t>(s)]) continue;
    double w = std::min(static_cast<double>(s + 1), duration) - s;
    photons_on += w * cfg.source.clock_rate_hz * mean_photons_slot;
    bg_on += w * background_total_hz(s + 0.5);
  }
  for (const auto& d : sim.detections) {
    int s = static_cast<int>(d.tag * cfg.detector.tag_resolution_s);
    if (s >= 0 && s < seconds && rr.quantum_on_s[static_cast<std::size_t>(s)]) det_on += 1.0;
  }
  double measured_db = -1.0;
  if (photons_on > 0.0 && det_on - bg_on > 0.0)
    measured_db = -10.0 * std::log10((det_on - bg_on) / photons_on);

  // Summary.
  auto& sm = rr.summary;
  sm.pass_id = cfg.name;
  sm.status = rr.report.status;
  for (int s = 0; s < seconds; ++s) {
    double w = std::min(static_cast<double>(s + 1), duration) - s;
    if (rr.classical_on_s[static_cast<std::size_t>(s)]) sm.classical_link_s += w;
    if (rr.quantum_on_s[static_cast<std::size_t>(s)]) sm.quantum_link_s += w;
  }
  double path_m = 0.0;
  for (std::size_t i = 1; i < traj.size(); ++i)
    path_m += (station_frame_position(traj[i].position) -
               station_frame_position(traj[i - 1].position))
                  .norm();
  double span = traj.back().t_s - traj.front().t_s;
  sm.mean_speed_kmh = span > 0.0 ? path_m / span * 3.6 : 0.0;
  for (const auto& s : traj)
    sm.max_angular_speed_dps = std::max(sm.max_angular_speed_dps, s.angular_speed_dps);
  if (cfg.pointing_enabled) {
    sm.tx_pointing_error_deg = rr.acquisition.tx_coarse_residual_mean_deg;
    sm.rx_pointing_error_deg = rr.acquisition.rx_coarse_residual_mean_deg;
    sm.rx_fine_error_deg = rr.acquisition.fine_residual_mean_deg;
  }
  sm.source_qber_pct = sim.mean_source_qber >= 0.0 ? 100.0 * sim.mean_source_qber : -1.0;
  double qs = rr.report.tallies.qber_signal();
  double qd = rr.report.tallies.qber_decoy();
  sm.signal_qber_pct = qs >= 0.0 ? 100.0 * qs : -1.0;
  sm.decoy_qber_pct = qd >= 0.0 ? 100.0 * qd : -1.0;
  sm.theoretical_loss_db = theoretical_db;
  sm.measured_loss_db = measured_db;
  sm.link_series_loss_db = series_db;
  sm.ec_efficiency = rr.report.ec_efficiency_mean;
  sm.snr_threshold = dcfg.snr_threshold;
  sm.sifted_bits = rr.report.tallies.sift_signal;
  sm.has_secure_key = rr.report.secure.has_key;
  sm.secure_bits = rr.report.secure.has_key ? rr.report.secure.bits : 0;
  auto asym = distill::secure_length(rr.report.estimates_asymptotic,
                                     static_cast<double>(rr.report.reconciled_bits),
                                     static_cast<double>(rr.report.leak_ec), dcfg.t_ver,
                                     dcfg.t_pa);
  sm.secure_bits_asymptotic = asym.has_key ? asym.bits : 0;

  if (!cfg.out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    auto put = [&](const std::string& name, const std::string& text) {
      std::ofstream f(cfg.out_dir + "/" + name);
      if (!f) throw std::runtime_error("cannot write " + cfg.out_dir + "/" + name);
      f << text;
    };
    put("config.json", config_to_json(cfg));
    put("summary.json", summary_to_json(sm));
    {
      std::ofstream f(cfg.out_dir + "/trajectory.csv");
      kinematics::write_trajectory_csv(f, traj);
    }
    {
      std::ofstream f(cfg.out_dir + "/link.csv");
      channel::write_link_csv(f, rr.link);
    }
    if (cfg.pointing_enabled)
      pointing::write_pointing_csv(cfg.out_dir + "/pointing.csv",
                                   rr.acquisition.telemetry);
    receiver::write_time_tags(cfg.out_dir + "/tags", sim.detections,
                              cfg.detector.tag_resolution_s, 0.0);
    transmitter::SourceLog slog;
    slog.config = cfg.source;
    slog.seed = seeds.source;
    slog.table = table;
    for (int s = 0; s < seconds; ++s)
      slog.epoch_slots.push_back(static_cast<std::uint64_t>(
          std::llround(s * cfg.source.clock_rate_hz)));
    transmitter::write_source_log(cfg.out_dir + "/source", slog);
    distill::write_distill_report(cfg.out_dir + "/distill", rr.report);
  }
  return rr;
}

namespace {

struct MetricRow {
  std::string label;
  std::string (*render)(const PassSummary&);
};

const MetricRow kRows[] = {
    {"classical link [s]", [](const PassSummary& s) { return fmt(s.classical_link_s, 0); }},
    {"quantum link [s]", [](const PassSummary& s) { return fmt(s.quantum_link_s, 0); }},
    {"mean speed [km/h]", [](const PassSummary& s) { return fmt(s.mean_speed_kmh, 0); }},
    {"max angular speed [deg/s]",
     [](const PassSummary& s) { return fmt(s.max_angular_speed_dps, 2); }},
    {"tx pointing error [1e-3 deg]",
     [](const PassSummary& s) { return fmt_or(s.tx_pointing_error_deg, 2, 1e3); }},
    {"rx pointing error [1e-3 deg]",
     [](const PassSummary& s) { return fmt_or(s.rx_pointing_error_deg, 1, 1e3); }},
    {"rx fine error [1e-3 deg]",
     [](const PassSummary& s) { return fmt_or(s.rx_fine_error_deg, 2, 1e3); }},
    {"source qber [%]", [](const PassSummary& s) { return fmt_or(s.source_qber_pct, 2); }},
    {"signal qber [%]", [](const PassSummary& s) { return fmt_or(s.signal_qber_pct, 2); }},
    {"decoy qber [%]", [](const PassSummary& s) { return fmt_or(s.decoy_qber_pct, 2); }},
    {"theoretical loss [dB]",
     [](const PassSummary& s) { return fmt_or(s.theoretical_loss_db, 1); }},
    {"measured loss [dB]",
     [](const PassSummary& s) { return fmt_or(s.measured_loss_db, 1); }},
    {"ec efficiency", [](const PassSummary& s) { return fmt_or(s.ec_efficiency, 2); }},
    {"snr threshold", [](const PassSummary& s) { return fmt(s.snr_threshold, 0); }},
    {"sifted bits", [](const PassSummary& s) { return std::to_string(s.sifted_bits); }},
    {"secure bits",
     [](const PassSummary& s) {
       return s.has_secure_key ? std::to_string(s.secure_bits) : std::string("none");
     }},
    {"secure bits (asymptotic)",
     [](const PassSummary& s) { return std::to_string(s.secure_bits_asymptotic); }},
    {"status", [](const PassSummary& s) { return s.status; }},
};

std::vector<std::vector<std::string>> summary_cells(const std::vector<PassSummary>& rows) {
  if (rows.empty()) throw std::invalid_argument("no pass summaries to render");
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> head{"metric"};
  for (const auto& r : rows) head.push_back(r.pass_id);
  cells.push_back(std::move(head));
  for (const auto& m : kRows) {
    std::vector<std::string> line{m.label};
    for (const auto& r : rows) line.push_back(m.render(r));
    cells.push_back(std::move(line));
  }
  return cells;
}

}  // namespace

std::string summarize_text(const std::vector<PassSummary>& rows) {
  auto cells = summary_cells(rows);
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c)
      width[c] = std::max(width[c], line[c].size());
  std::string out;
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      std::size_t pad = width[c] - line[c].size();
      if (c == 0) {
        out += line[c];
        out.append(pad, ' ');
      } else {
        out += "  ";
        out.append(pad, ' ');
        out += line[c];
      }
    }
    out += '\n';
  }
  return out;
}

std::string summarize_csv(const std::vector<PassSummary>& rows) {
  auto cells = summary_cells(rows);
  std::string out;
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c) out += ',';
      out += line[c];
    }
    out += '\n';
  }
  return out;
}

std::vector<MetricComparison> compare_to_reference(const PassSummary& s,
                                                   const std::string& reference_json_text) {
  json all = json::parse(reference_json_text);
  auto entry = all.find(s.pass_id);
  if (entry == all.end())
    throw std::invalid_argument("no reference entry for pass id: " + s.pass_id);
  const json& r = *entry;

  std::vector<MetricComparison> out;
  auto ref_num = [&](const char* key) -> std::optional<double> {
    auto k = r.find(key);
    if (k == r.end() || k->is_null()) return std::nullopt;
    return k->get<double>();
  };
  auto band = [&](const std::string& metric, double sim, std::optional<double> lo,
                  std::optional<double> hi, const std::string& note) {
    MetricComparison c;
    c.metric = metric;
    c.simulated = sim;
    if (!lo || !hi) {
      c.note = "no reference value";
    } else {
      c.compared = true;
      c.within = sim >= *lo && sim <= *hi;
      c.note = note;
    }
    out.push_back(c);
  };
  auto rel = [&](const std::string& metric, double sim, const char* key, double frac) {
    auto v = ref_num(key);
    std::string note;
    std::optional<double> lo, hi;
    if (v) {
      lo = *v * (1.0 - frac);
      hi = *v * (1.0 + frac);
      note = "ref " + fmt(*v, 2) + " within " + fmt(frac * 100.0, 0) + "%";
    }
    band(metric, sim, lo, hi, note);
  };
  auto abs_tol = [&](const std::string& metric, double sim, const char* key, double tol) {
    auto v = ref_num(key);
    std::string note;
    std::optional<double> lo, hi;
    if (v) {
      lo = *v - tol;
      hi = *v + tol;
      note = "ref " + fmt(*v, 2) + " +- " + fmt(tol, 2);
    }
    band(metric, sim, lo, hi, note);
  };
  auto factor = [&](const std::string& metric, double sim, std::optional<double> v,
                    double fac) {
    std::string note;
    std::optional<double> lo, hi;
    if (v) {
      lo = *v / fac;
      hi = *v * fac;
      note = "ref " + fmt(*v, 0) + " within " + fmt(fac, 0) + "x";
    }
    band(metric, sim, lo, hi, note);
  };

  rel("classical link [s]", s.classical_link_s, "classical_link_s", 0.25);
  rel("quantum link [s]", s.quantum_link_s, "quantum_link_s", 0.20);
  rel("mean speed [km/h]", s.mean_speed_kmh, "mean_speed_kmh", 0.10);
  rel("max angular speed [deg/s]", s.max_angular_speed_dps, "max_angular_speed_dps", 0.10);
  factor("tx pointing error [deg]", s.tx_pointing_error_deg,
         ref_num("tx_pointing_error_deg"), 3.0);
  factor("rx pointing error [deg]", s.rx_pointing_error_deg,
         ref_num("rx_pointing_error_deg"), 3.0);
  factor("rx fine error [deg]", s.rx_fine_error_deg, ref_num("rx_fine_error_deg"), 3.0);
  abs_tol("source qber [%]", s.source_qber_pct, "source_qber_pct", 1.0);
  abs_tol("signal qber [%]", s.signal_qber_pct, "signal_qber_pct", 1.0);
  abs_tol("decoy qber [%]", s.decoy_qber_pct, "decoy_qber_pct", 3.0);
  {
    auto lo = ref_num("theoretical_loss_db");
    auto hi = ref_num("theoretical_loss_db_max");
    if (!hi) hi = lo;
    std::string note;
    if (lo) note = "ref " + fmt(*lo, 1) + (hi && *hi != *lo ? "-" + fmt(*hi, 1) : "") +
                   " +- 4 dB";
    band("theoretical loss [dB]", s.theoretical_loss_db,
         lo ? std::optional<double>(*lo - 4.0) : std::nullopt,
         hi ? std::optional<double>(*hi + 4.0) : std::nullopt, note);
  }
  abs_tol("measured loss [dB]", s.measured_loss_db, "measured_loss_db", 4.0);
  abs_tol("ec efficiency", s.ec_efficiency, "ec_efficiency", 0.30);
  {
    auto v = ref_num("snr_threshold");
    std::string note;
    if (v) note = "ref " + fmt(*v, 0) + " exact";
    band("snr threshold", s.snr_threshold, v, v, note);
  }
  factor("sifted bits", static_cast<double>(s.sifted_bits), ref_num("sifted_bits"), 2.0);
  {
    bool finite = true;
    if (auto k = r.find("secure_key_finite_size"); k != r.end() && k->is_boolean())
      finite = k->get<bool>();
    double sim = finite ? static_cast<double>(s.secure_bits)
                        : static_cast<double>(s.secure_bits_asymptotic);
    factor(finite ? "secure bits" : "secure bits (asymptotic)", sim,
           ref_num("secure_bits"), 3.0);
  }
  return out;
}

}  // namespace airqkd::runner

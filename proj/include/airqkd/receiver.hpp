#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "airqkd/polarization.hpp"

namespace airqkd::receiver {

enum class Channel : std::uint8_t { H = 0, V = 1, D = 2, A = 3 };

struct AnalyzerConfig {
  double basis_split = 0.5;  // fraction routed to the H/V arm
  // Port extinction: a photon destined for port X strays to the conjugate
  // port with probability 1/(1+contrast[X]).
  std::array<double, 4> contrast{1000.0, 1000.0, 1000.0, 1000.0};

  void validate() const;
};

struct DetectorConfig {
  double efficiency = 0.45;
  double dark_rate_per_detector_hz = 285.0 / 4.0;
  double dead_time_s = 1e-6;
  double timing_jitter_sigma_s = 0.5e-9;
  double tag_resolution_s = 78.125e-12;  // (400 MHz clock period) / 32

  void validate() const;
};

struct DetectionEvent {
  std::uint64_t tag = 0;  // units of tag_resolution
  Channel channel = Channel::H;
};

struct Arrival {
  double t_s = 0.0;
  polarization::Stokes state;
};

// Probability of each output channel for a (possibly mixed) input state:
// passive basis choice, Born projection, then the finite-contrast port leak.
// Always sums to 1.
std::array<double, 4> channel_probabilities(const polarization::Stokes& s,
                                            const AnalyzerConfig& a);

Channel measure_polarization(const polarization::Stokes& s, const AnalyzerConfig& a,
                             std::mt19937_64& rng);

// Detection chain over [window_start, window_end): efficiency thinning,
// channel assignment, timing jitter, per-detector dark counts and dead time,
// then tag quantization. extra_background_hz adds stray light on top of the
// detector dark rate, split equally across the four channels.
std::vector<DetectionEvent> detect_stream(const std::vector<Arrival>& arrivals,
                                          const AnalyzerConfig& analyzer,
                                          const DetectorConfig& detector,
                                          double window_start_s, double window_end_s,
                                          double extra_background_hz,
                                          std::mt19937_64& rng);

// Binary time-tag interchange: little-endian records {uint64 tag, uint8
// channel}, with a JSON sidecar naming the resolution and start epoch.
void write_time_tags(const std::string& path_prefix, const std::vector<DetectionEvent>& events,
                     double tag_resolution_s, double t0_s);
struct TimeTagFile {
  std::vector<DetectionEvent> events;
  double tag_resolution_s = 78.125e-12;
  double t0_s = 0.0;
};
TimeTagFile read_time_tags(const std::string& path_prefix);

}  // namespace airqkd::receiver

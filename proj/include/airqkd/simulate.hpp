#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "airqkd/channel.hpp"
#include "airqkd/receiver.hpp"
#include "airqkd/transmitter.hpp"

namespace airqkd::runner {

// Generates the receiver's detection stream for a pass without walking every
// clock slot. Detection counts per link segment are Poisson-sampled from the
// per-class click probabilities and placed uniformly over that class's slots,
// which is exact for Poissonian sources; SlotSampling::exhaustive draws every
// slot individually and exists to validate that shortcut on short windows.

enum class SlotSampling { sparse, exhaustive };

struct ClockModel {
  double offset_s = 0.0;        // receiver clock minus source clock at t = 0
  double drift_s_per_s = 0.0;
};

struct PolarizationModel {
  double fiber_correlation_time_s = 300.0;
  double fiber_amplitude_rad = 0.5;
  double depolarization = 0.0;          // isotropic; source QBER floor = eps/2
  int tomography_photons_per_axis = 600;
  double compensation_interval_s = 1.0; // waveplate re-optimization cadence
};

struct EventSimConfig {
  transmitter::SourceConfig source;
  receiver::AnalyzerConfig analyzer;
  receiver::DetectorConfig detector;
  // The link budget's detector term; divided back out of the arrival
  // probability because the detector simulation applies its own efficiency.
  double budget_detector_efficiency = 0.43;
  ClockModel clock;
  PolarizationModel polarization;
  std::uint64_t seed_events = 5;
  std::uint64_t seed_detector = 6;
  std::uint64_t seed_fiber = 8;
  std::uint64_t seed_tomography = 9;

  void validate() const;
};

// Transmit-side optical state for one second: the four BB84 states after
// fiber drift, waveplate compensation, and depolarization, plus the source
// QBER the compensation step predicts from its own tomography.
struct SecondOptics {
  std::array<polarization::Stokes, 4> states;  // order H, V, D, A
  double predicted_qber = -1.0;                // -1 when the second is idle
};

// Per-second plan over [0, seconds). Tomography with shot noise and triplet
// re-optimization run on active seconds at the compensation cadence; idle
// seconds carry drifted-but-uncompensated states and no prediction.
std::vector<SecondOptics> plan_optics(const EventSimConfig& cfg, int seconds,
                                      const std::vector<char>& active);

struct SimOutput {
  std::vector<receiver::DetectionEvent> detections;
  long long arrivals = 0;               // photons reaching the analyzer
  std::vector<double> arrivals_per_s;
  std::vector<double> predicted_source_qber_per_s;  // -1 on idle seconds
  double mean_source_qber = -1.0;       // over active seconds
};

// quantum_on_s gates source emission per second (background continues
// throughout). tof_series maps emission time to one-way flight time.
SimOutput simulate_detections(const EventSimConfig& cfg,
                              const std::vector<transmitter::PulseSlot>& table,
                              const std::vector<channel::LinkSample>& link,
                              const std::vector<std::pair<double, double>>& tof_series,
                              double duration_s, const std::vector<char>& quantum_on_s,
                              SlotSampling sampling);

}  // namespace airqkd::runner

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "airqkd/polarization.hpp"

namespace airqkd::transmitter {

enum class Intensity : std::uint8_t { signal = 0, decoy = 1, vacuum = 2 };
enum class Basis : std::uint8_t { HV = 0, DA = 1 };

struct SourceConfig {
  double clock_rate_hz = 4e8;
  double mu = 0.5;         // signal mean photon number
  double nu = 0.1;         // decoy mean photon number
  double p_signal = 0.80;
  double p_decoy = 0.14;
  double p_vacuum = 0.06;
  std::uint32_t sequence_length = 1000;
  // When set, the slot table is re-randomized every second instead of
  // repeating for the whole pass (the repeating table is convenient but
  // deliberately predictable; this flag removes the 2.5 us periodicity).
  bool true_random_mode = false;

  void validate() const;
  double mean_photons(Intensity i) const;
};

struct PulseSlot {
  std::uint32_t slot_index = 0;
  Intensity intensity = Intensity::signal;
  Basis basis = Basis::HV;
  std::uint8_t bit = 0;
  polarization::Stokes state;  // ideal emitted state before drift
};

// Slot table for one repetition period. epoch selects the per-second table in
// true-random mode and is ignored otherwise.
std::vector<PulseSlot> generate_sequence(const SourceConfig& cfg, std::uint64_t seed,
                                         std::uint64_t epoch = 0);

// Slowly varying random polarization rotation of the transmit fiber: each
// rotation-vector component follows an Ornstein-Uhlenbeck walk on a 1 s grid
// (identity at t = 0), interpolated smoothly in between.
class FiberDrift {
 public:
  FiberDrift(std::uint64_t seed, double correlation_time_s = 300.0,
             double amplitude_rad = 0.5);
  polarization::Rotation at(double t_s) const;

 private:
  double tau_;
  double sigma_;
  std::uint64_t seed_;
  mutable std::vector<Vec3> knots_;  // rotation vectors at 1 s spacing
  mutable std::uint64_t rng_state_ = 0;
  void extend(std::size_t upto) const;
};

// Detection totals behind the six analyzer projectors, order H,V,D,A,R,L.
struct ProjectorCounts {
  std::array<double, 6> n{};
};

// Count-asymmetry Stokes reconstruction, clipped to the unit ball.
polarization::Stokes tomography_reconstruct(const ProjectorCounts& c);
std::array<polarization::Stokes, 4> tomography(const std::array<ProjectorCounts, 4>& per_state);

// Compensator: quarter-, half-, quarter-wave plates in that optical order.
struct WaveplateTriplet {
  double qwp1_deg = 0.0;
  double hwp_deg = 0.0;
  double qwp2_deg = 0.0;

  polarization::Rotation rotation() const;
  polarization::Stokes apply(const polarization::Stokes& s) const;
};

struct CompensationResult {
  WaveplateTriplet triplet;
  double mean_fidelity = 0.0;
  bool converged = false;
};

// Plate angles maximizing the mean Bloch fidelity of the reconstructed states
// against their targets: 10-degree grid scan, then coordinate refinement down
// to 0.01 degrees from the best grid cells.
CompensationResult optimize_triplet(const std::array<polarization::Stokes, 4>& reconstructed,
                                    const std::array<polarization::Stokes, 4>& targets);

// Mean probability of projecting each compensated state onto the target's
// orthogonal complement.
double predicted_source_qber(const std::array<polarization::Stokes, 4>& compensated,
                             const std::array<polarization::Stokes, 4>& targets);

// Source log: binary slot table(s) plus per-second epoch markers, with a JSON
// sidecar carrying the configuration. Paths get ".bin" / ".json" suffixes.
struct SourceLog {
  SourceConfig config;
  std::uint64_t seed = 0;
  std::vector<PulseSlot> table;          // epoch 0 table
  std::vector<std::uint64_t> epoch_slots;  // first absolute slot of each second
};

void write_source_log(const std::string& path_prefix, const SourceLog& log);
SourceLog read_source_log(const std::string& path_prefix);

}  // namespace airqkd::transmitter

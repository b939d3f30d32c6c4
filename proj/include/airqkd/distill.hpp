#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "airqkd/receiver.hpp"
#include "airqkd/transmitter.hpp"

namespace airqkd::distill {

// Classical post-processing: event time-correlation against the source slot
// grid, basis sifting, frame-level SNR filtering, decoy-state parameter
// bounds, LDPC reconciliation, Toeplitz privacy amplification, and the
// finite-size secure key length.

double binary_entropy(double x);  // h2, bits; throws outside [0, 1]

// ---------------------------------------------------------------------------
// Decoy-state bounds

struct DecoyObservables {
  double Q_mu = 0.0;  // gain of signal pulses (detections per pulse)
  double Q_nu = 0.0;  // gain of decoy pulses
  double E_mu = 0.0;  // sifted error rate, signal
  double E_nu = 0.0;  // sifted error rate, decoy
  double Y0 = 0.0;    // vacuum yield
  double n_mu_pulses = 0.0;
  double n_nu_pulses = 0.0;
  double n_vac_pulses = 0.0;
};

struct DecoyEstimates {
  // Observables after their adversarial n-sigma shifts.
  double Q_mu = 0.0, Q_nu = 0.0, E_mu = 0.0, E_nu = 0.0, Y0 = 0.0;
  double Y1_L = 0.0;  // single-photon yield, lower bound
  double e1_U = 0.0;  // single-photon error rate, upper bound
  double mu = 0.0, nu = 0.0;
  double n_sigma = 0.0;
  bool valid = false;  // false: insufficient statistics (Y1_L <= 0)
};

// Worst-case-shift each observable by n_sigma binomial deviations, then
// apply the two-intensity decoy bounds with e0 = 1/2.
DecoyEstimates decoy_bounds(const DecoyObservables& obs, double mu, double nu,
                            double n_sigma);

// ---------------------------------------------------------------------------
// Secure key length

struct SecureKeyLength {
  long long bits = 0;  // floor of the key-rate expression; may be negative
  bool has_key = false;
};

// l = n_sift * (Y1_L mu e^-mu / Q_mu) * (1 - h2(e1_U)) - leak_ec - t_ver - t_pa.
// Finite-size behavior comes from the estimates passed in: ten-sigma-shifted
// estimates give the finite-size key, unshifted ones the asymptotic key.
SecureKeyLength secure_length(const DecoyEstimates& est, double n_sift_signal,
                              double leak_ec, double t_ver = 64.0, double t_pa = 128.0);

// ---------------------------------------------------------------------------
// Correlation of receiver time tags with the source slot grid

struct CorrelationConfig {
  double clock_hz = 4e8;
  int sequence_length = 1000;
  double tag_resolution_s = 78.125e-12;
  double peak_threshold = 5.0;      // histogram peak over far-bin floor
  int phase_bins = 32;
  double accept_window_s = 1.0e-9;  // half-width around the slot center
  double frame_s = 1.0;             // granularity of the drift fit
  std::size_t min_events = 100;
  bool pattern_alignment = true;    // cyclic intensity alignment (repeating table)
};

struct CorrelationResult {
  bool ok = false;                 // significant peak found
  double offset_s = 0.0;           // source-to-receiver clock offset at t = 0
  double drift_s_per_s = 0.0;
  double residual_width_s = 0.0;   // std of sub-slot residuals after the fit
  double ambiguity_period_s = 0.0; // sequence_length / clock
  double peak_to_floor = 0.0;
  int pattern_shift = 0;           // cyclic table alignment applied
  // Per detection: absolute slot index (mod sequence_length addresses the
  // table), or -1 when outside the acceptance window. On correlation failure
  // slots are still assigned GPS-only so downstream can measure ~50% QBER.
  std::vector<std::int64_t> slot_index;
};

CorrelationResult correlate(const std::vector<receiver::DetectionEvent>& detections,
                            const std::vector<std::pair<double, double>>& tof_series,
                            const std::vector<transmitter::PulseSlot>& table,
                            const CorrelationConfig& cfg);

// ---------------------------------------------------------------------------
// Frames and sifting

struct FrameData {
  int frame_index = 0;
  long long total_counts = 0;
  bool kept = false;
  double qber_signal = -1.0;  // -1: no sifted bits in the frame
  double qber_decoy = -1.0;
};

// kept <=> total_counts >= threshold.
void apply_snr_filter(std::vector<FrameData>& frames, double threshold);

struct SiftTallies {
  long long sift_signal = 0, err_signal = 0;
  long long sift_decoy = 0, err_decoy = 0;
  long long det_signal = 0, det_decoy = 0, det_vacuum = 0;  // any-basis gains
  std::vector<std::uint8_t> alice_bits, bob_bits;  // matched-basis signal bits
  double qber_signal() const { return sift_signal ? double(err_signal) / sift_signal : -1.0; }
  double qber_decoy() const { return sift_decoy ? double(err_decoy) / sift_decoy : -1.0; }
};

// Keep matched-basis events on kept frames; vacuum-slot detections feed Y0.
// Fills the per-frame QBER fields of frames in place.
SiftTallies sift(const std::vector<receiver::DetectionEvent>& detections,
                 const std::vector<std::int64_t>& slot_index,
                 const std::vector<transmitter::PulseSlot>& table,
                 std::vector<FrameData>& frames, double tag_resolution_s);

// ---------------------------------------------------------------------------
// Full pipeline

struct DistillConfig {
  double snr_threshold = 1000.0;
  double n_sigma = 10.0;
  double f_target = 1.25;
  int block_len = 4096;
  double t_ver = 64.0;
  double t_pa = 128.0;
  std::uint64_t seed = 1;
  CorrelationConfig correlation;
};

struct DistillReport {
  CorrelationResult correlation;  // slot_index cleared to keep the report light
  std::vector<FrameData> frames;
  int frames_total = 0, frames_kept = 0;
  SiftTallies tallies;
  DecoyEstimates estimates;          // n-sigma shifted
  DecoyEstimates estimates_asymptotic;  // zero-shift, for reference
  long long reconciled_bits = 0;
  std::size_t leak_ec = 0;
  int blocks_total = 0, blocks_verified = 0, blocks_discarded = 0;
  double ec_efficiency_mean = -1.0;  // mean f over verified blocks
  SecureKeyLength secure;
  std::vector<std::uint8_t> final_key;
  std::string status;  // "ok", "no-key", "insufficient-statistics", ...
};

DistillReport distill_pass(const transmitter::SourceConfig& source_cfg,
                           const std::vector<transmitter::PulseSlot>& table,
                           const std::vector<receiver::DetectionEvent>& detections,
                           const std::vector<std::pair<double, double>>& tof_series,
                           double duration_s, const DistillConfig& cfg);

// prefix.json (report), prefix_frames.csv, prefix_key.bin (packed LSB-first).
void write_distill_report(const std::string& prefix, const DistillReport& report);

}  // namespace airqkd::distill

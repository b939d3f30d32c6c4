#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "airqkd/channel.hpp"
#include "airqkd/distill.hpp"
#include "airqkd/kinematics.hpp"
#include "airqkd/pointing.hpp"
#include "airqkd/receiver.hpp"
#include "airqkd/simulate.hpp"
#include "airqkd/transmitter.hpp"

namespace airqkd::runner {

// End-to-end pass execution: geometry, acquisition, link budget, event
// stream, and key distillation, driven by one JSON-serializable config.

struct GpsTofBias {
  // Range-knowledge error fed to the correlator: a slowly wandering bias
  // (position fixes share most of their error between updates), not white
  // per-sample noise.
  double sigma_m = 3.0;
  double tau_s = 3600.0;
};

struct QuantumWindow {
  double start_s = 0.0;
  double stop_s = 0.0;  // stop <= start selects the whole pass
};

struct Seeds {
  std::uint64_t master = 1;
  // Zero entries are derived from master; explicit values win.
  std::uint64_t gps = 0, fading = 0, source = 0, pointing = 0, events = 0,
                 detector = 0, distill = 0, fiber = 0, tomography = 0;

  Seeds resolved() const;
};

struct RunConfig {
  int schema_version = 1;
  std::string name = "pass";
  std::string out_dir;  // empty: keep everything in memory, write nothing

  kinematics::PassConfig pass;
  channel::LinkBudgetParams link;
  transmitter::SourceConfig source;
  receiver::AnalyzerConfig analyzer;
  receiver::DetectorConfig detector;
  pointing::AcquisitionScenario pointing;
  bool pointing_enabled = true;

  PolarizationModel polarization;
  ClockModel clock;
  GpsTofBias gps_bias;
  QuantumWindow quantum_window;
  distill::DistillConfig distill;
  // Replaces distill.snr_threshold with
  // max(1000, factor * expected background counts per frame).
  bool snr_threshold_auto = false;
  double snr_auto_background_factor = 5.0;

  double pin_mean_loss_db = 0.0;  // >0: shift the faded series to this mean
  bool force_link_off = false;    // detectors run, transmitter never fires

  Seeds seeds;

  void validate() const;
};

RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::string& path);

struct PassSummary {
  std::string pass_id;
  std::string status;
  double classical_link_s = 0.0;
  double quantum_link_s = 0.0;
  double mean_speed_kmh = 0.0;
  double max_angular_speed_dps = 0.0;
  // -1 marks "no data" throughout.
  double tx_pointing_error_deg = -1.0;
  double rx_pointing_error_deg = -1.0;
  double rx_fine_error_deg = -1.0;
  double source_qber_pct = -1.0;
  double signal_qber_pct = -1.0;
  double decoy_qber_pct = -1.0;
  double theoretical_loss_db = -1.0;  // unfaded budget over the quantum window
  double measured_loss_db = -1.0;     // from detection counts vs emitted photons
  double link_series_loss_db = -1.0;  // faded series mean over the same window
  double ec_efficiency = -1.0;
  double snr_threshold = 0.0;
  long long sifted_bits = 0;
  long long secure_bits = 0;             // finite-size
  long long secure_bits_asymptotic = 0;  // zero-shift estimates, same leak
  bool has_secure_key = false;
};

std::string summary_to_json(const PassSummary& s);
PassSummary summary_from_json(const std::string& text);

struct RunResult {
  PassSummary summary;
  distill::DistillReport report;
  pointing::AcquisitionResult acquisition;
  std::vector<kinematics::TrajectorySample> trajectory;
  std::vector<channel::LinkSample> link;
  std::vector<char> classical_on_s, quantum_on_s;
  double loss_shift_db = 0.0;  // pinning adjustment applied to the series
  long long detections = 0;
  long long arrivals = 0;
};

RunResult run_pass(const RunConfig& cfg, SlotSampling sampling = SlotSampling::sparse);

// Fixed-order metric table, one column per pass. Throws on empty input.
std::string summarize_text(const std::vector<PassSummary>& rows);
std::string summarize_csv(const std::vector<PassSummary>& rows);

struct MetricComparison {
  std::string metric;
  double simulated = 0.0;
  bool compared = false;  // a reference value exists for this metric
  bool within = false;
  std::string note;
};

// Compare one summary against the named entry of a reference table (JSON
// object keyed by pass id). Unknown pass ids throw.
std::vector<MetricComparison> compare_to_reference(const PassSummary& s,
                                                   const std::string& reference_json_text);

}  // namespace airqkd::runner

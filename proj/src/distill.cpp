#include "airqkd/distill.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "airqkd/ldpc.hpp"
#include "airqkd/rng.hpp"
#include "airqkd/toeplitz.hpp"

namespace airqkd::distill {

double binary_entropy(double x) {
  if (x < 0.0 || x > 1.0) throw std::invalid_argument("entropy argument outside [0,1]");
  if (x == 0.0 || x == 1.0) return 0.0;
  return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Binomial worst-case shift of a measured fraction.
double shifted(double p, double n, double n_sigma, double direction) {
  p = clamp01(p);
  if (n <= 0.0) return p;
  double sigma = std::sqrt(p * (1.0 - p) / n);
  return clamp01(p + direction * n_sigma * sigma);
}

}  // namespace

DecoyEstimates decoy_bounds(const DecoyObservables& obs, double mu, double nu,
                            double n_sigma) {
  if (!(0.0 < nu && nu < mu)) throw std::invalid_argument("decoy bounds need 0 < nu < mu");
  if (n_sigma < 0.0) throw std::invalid_argument("n_sigma must be >= 0");

  DecoyEstimates est;
  est.mu = mu;
  est.nu = nu;
  est.n_sigma = n_sigma;

  // Each observable moves n_sigma binomial deviations in the direction that
  // weakens the bound it feeds.
  est.Q_mu = shifted(obs.Q_mu, obs.n_mu_pulses, n_sigma, +1.0);
  est.Q_nu = shifted(obs.Q_nu, obs.n_nu_pulses, n_sigma, -1.0);
  est.E_mu = shifted(obs.E_mu, obs.n_mu_pulses, n_sigma, +1.0);
  double y0_up = shifted(obs.Y0, obs.n_vac_pulses, n_sigma, +1.0);
  double y0_down = shifted(obs.Y0, obs.n_vac_pulses, n_sigma, -1.0);
  est.Y0 = y0_up;

  double y1 = (mu / (mu * nu - nu * nu)) *
              (est.Q_nu * std::exp(nu) - est.Q_mu * std::exp(mu) * (nu * nu) / (mu * mu) -
               ((mu * mu - nu * nu) / (mu * mu)) * y0_up);
  est.Y1_L = y1;
  if (y1 <= 0.0) {
    est.valid = false;  // insufficient statistics: no single-photon floor
    est.Y1_L = 0.0;
    est.e1_U = 0.5;
    est.E_nu = clamp01(obs.E_nu);
    return est;
  }
  est.Y1_L = std::min(y1, 1.0);
  est.valid = true;

  // The error gain E_nu Q_nu is one binomially distributed observable
  // (errors per decoy pulse); shift it upward as a whole.
  double eq = clamp01(obs.E_nu) * clamp01(obs.Q_nu);
  double eq_up = shifted(eq, obs.n_nu_pulses, n_sigma, +1.0);
  est.E_nu = obs.Q_nu > 0.0 ? clamp01(eq_up / clamp01(obs.Q_nu)) : clamp01(obs.E_nu);
  const double e0 = 0.5;
  double e1 = (eq_up * std::exp(nu) - e0 * y0_down) / (est.Y1_L * nu);
  est.e1_U = std::clamp(e1, 0.0, 0.5);
  return est;
}

SecureKeyLength secure_length(const DecoyEstimates& est, double n_sift_signal,
                              double leak_ec, double t_ver, double t_pa) {
  SecureKeyLength out;
  if (!est.valid || est.Q_mu <= 0.0 || n_sift_signal <= 0.0) {
    out.bits = -static_cast<long long>(std::llround(leak_ec + t_ver + t_pa));
    out.has_key = false;
    return out;
  }
  double single_fraction =
      std::min(est.Y1_L * est.mu * std::exp(-est.mu) / est.Q_mu, 1.0);
  double raw = n_sift_signal * single_fraction * (1.0 - binary_entropy(est.e1_U)) -
               leak_ec - t_ver - t_pa;
  out.bits = static_cast<long long>(std::floor(raw));
  out.has_key = out.bits > 0;
  return out;
}

void apply_snr_filter(std::vector<FrameData>& frames, double threshold) {
  if (threshold < 0.0) throw std::invalid_argument("threshold must be >= 0");
  for (auto& f : frames) f.kept = static_cast<double>(f.total_counts) >= threshold;
}

SiftTallies sift(const std::vector<receiver::DetectionEvent>& detections,
                 const std::vector<std::int64_t>& slot_index,
                 const std::vector<transmitter::PulseSlot>& table,
                 std::vector<FrameData>& frames, double tag_resolution_s) {
  if (detections.size() != slot_index.size())
    throw std::invalid_argument("one slot index per detection required");
  if (table.empty()) throw std::invalid_argument("empty source table");

  const std::size_t period = table.size();
  SiftTallies out;
  struct FrameTally {
    long long ss = 0, es = 0, sd = 0, ed = 0;
  };
  std::vector<FrameTally> ft(frames.size());

  const auto p64 = static_cast<std::int64_t>(period);
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (slot_index[i] < 0) continue;
    double t = static_cast<double>(detections[i].tag) * tag_resolution_s;
    auto frame = static_cast<std::size_t>(t);
    if (frame >= frames.size()) continue;
    // Dropped frames still get a per-frame error rate; only kept frames
    // contribute to the key material and the decoy tallies.
    bool kept = frames[frame].kept;

    const auto& slot = table[static_cast<std::size_t>(((slot_index[i] % p64) + p64) % p64)];
    if (kept) {
      switch (slot.intensity) {
        case transmitter::Intensity::signal: ++out.det_signal; break;
        case transmitter::Intensity::decoy: ++out.det_decoy; break;
        case transmitter::Intensity::vacuum: ++out.det_vacuum; break;
      }
    }
    if (slot.intensity == transmitter::Intensity::vacuum) continue;

    auto ch = detections[i].channel;
    bool bob_basis_hv = ch == receiver::Channel::H || ch == receiver::Channel::V;
    bool alice_basis_hv = slot.basis == transmitter::Basis::HV;
    if (bob_basis_hv != alice_basis_hv) continue;
    std::uint8_t bob_bit = (ch == receiver::Channel::V || ch == receiver::Channel::A) ? 1 : 0;
    bool error = bob_bit != slot.bit;

    if (slot.intensity == transmitter::Intensity::signal) {
      ++ft[frame].ss;
      if (error) ++ft[frame].es;
      if (kept) {
        out.alice_bits.push_back(slot.bit);
        out.bob_bits.push_back(bob_bit);
        ++out.sift_signal;
        if (error) ++out.err_signal;
      }
    } else {
      ++ft[frame].sd;
      if (error) ++ft[frame].ed;
      if (kept) {
        ++out.sift_decoy;
        if (error) ++out.err_decoy;
      }
    }
  }

  for (std::size_t f = 0; f < frames.size(); ++f) {
    frames[f].qber_signal = ft[f].ss ? static_cast<double>(ft[f].es) / ft[f].ss : -1.0;
    frames[f].qber_decoy = ft[f].sd ? static_cast<double>(ft[f].ed) / ft[f].sd : -1.0;
  }
  return out;
}

DistillReport distill_pass(const transmitter::SourceConfig& source_cfg,
                           const std::vector<transmitter::PulseSlot>& table,
                           const std::vector<receiver::DetectionEvent>& detections,
                           const std::vector<std::pair<double, double>>& tof_series,
                           double duration_s, const DistillConfig& cfg) {
  DistillReport rep;

  rep.correlation = correlate(detections, tof_series, table, cfg.correlation);

  int n_frames = static_cast<int>(std::ceil(duration_s));
  rep.frames.assign(static_cast<std::size_t>(std::max(n_frames, 1)), FrameData{});
  for (std::size_t f = 0; f < rep.frames.size(); ++f)
    rep.frames[f].frame_index = static_cast<int>(f);
  for (const auto& d : detections) {
    auto f = static_cast<std::size_t>(static_cast<double>(d.tag) *
                                      cfg.correlation.tag_resolution_s);
    if (f < rep.frames.size()) ++rep.frames[f].total_counts;
  }
  apply_snr_filter(rep.frames, cfg.snr_threshold);
  rep.frames_total = static_cast<int>(rep.frames.size());
  for (const auto& f : rep.frames) rep.frames_kept += f.kept ? 1 : 0;

  rep.tallies = sift(detections, rep.correlation.slot_index, table, rep.frames,
                     cfg.correlation.tag_resolution_s);

  // Class pulse counts over kept frames; the table's composition is exact.
  double slots_kept = rep.frames_kept * source_cfg.clock_rate_hz;
  double n_sig = 0.0, n_dec = 0.0, n_vac = 0.0;
  for (const auto& s : table) {
    if (s.intensity == transmitter::Intensity::signal) n_sig += 1.0;
    else if (s.intensity == transmitter::Intensity::decoy) n_dec += 1.0;
    else n_vac += 1.0;
  }
  double inv = 1.0 / static_cast<double>(table.size());
  DecoyObservables obs;
  obs.n_mu_pulses = slots_kept * n_sig * inv;
  obs.n_nu_pulses = slots_kept * n_dec * inv;
  obs.n_vac_pulses = slots_kept * n_vac * inv;
  obs.Q_mu = obs.n_mu_pulses > 0.0 ? rep.tallies.det_signal / obs.n_mu_pulses : 0.0;
  obs.Q_nu = obs.n_nu_pulses > 0.0 ? rep.tallies.det_decoy / obs.n_nu_pulses : 0.0;
  obs.Y0 = obs.n_vac_pulses > 0.0 ? rep.tallies.det_vacuum / obs.n_vac_pulses : 0.0;
  obs.E_mu = std::max(rep.tallies.qber_signal(), 0.0);
  obs.E_nu = std::max(rep.tallies.qber_decoy(), 0.0);

  rep.estimates = decoy_bounds(obs, source_cfg.mu, source_cfg.nu, cfg.n_sigma);
  rep.estimates_asymptotic = decoy_bounds(obs, source_cfg.mu, source_cfg.nu, 0.0);

  if (!rep.correlation.ok) {
    rep.status = "correlation-failed";
    return rep;
  }
  if (rep.tallies.sift_signal == 0) {
    rep.status = "no-sifted-bits";
    return rep;
  }

  // Reconciliation in fixed blocks; the sub-block remainder is dropped.
  ldpc::Reconciler rec(cfg.block_len, derive_seed(cfg.seed, 0x1d9c));
  double qber_est = std::max(rep.tallies.qber_signal(), 0.0);
  std::size_t n_blocks = rep.tallies.alice_bits.size() / static_cast<std::size_t>(cfg.block_len);
  std::vector<std::uint8_t> reconciled;
  reconciled.reserve(n_blocks * static_cast<std::size_t>(cfg.block_len));
  double f_sum = 0.0;
  int f_count = 0;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    std::size_t lo = b * static_cast<std::size_t>(cfg.block_len);
    std::vector<std::uint8_t> a(rep.tallies.alice_bits.begin() + lo,
                                rep.tallies.alice_bits.begin() + lo + cfg.block_len);
    std::vector<std::uint8_t> bb(rep.tallies.bob_bits.begin() + lo,
                                 rep.tallies.bob_bits.begin() + lo + cfg.block_len);
    auto r = rec.reconcile_block(a, bb, qber_est, derive_seed(cfg.seed, 0xb10c + b),
                                 cfg.f_target);
    ++rep.blocks_total;
    rep.leak_ec += r.leak_ec;
    if (r.verified) {
      ++rep.blocks_verified;
      reconciled.insert(reconciled.end(), r.key.begin(), r.key.end());
      long long errs = 0;
      for (int k = 0; k < cfg.block_len; ++k) errs += a[static_cast<std::size_t>(k)] != bb[static_cast<std::size_t>(k)];
      double q_true = static_cast<double>(errs) / cfg.block_len;
      if (q_true > 0.0) {
        f_sum += static_cast<double>(r.leak_ec) / (cfg.block_len * binary_entropy(q_true));
        ++f_count;
      }
    } else {
      ++rep.blocks_discarded;
    }
  }
  rep.reconciled_bits = static_cast<long long>(reconciled.size());
  if (f_count) rep.ec_efficiency_mean = f_sum / f_count;

  if (!rep.estimates.valid) {
    rep.status = "insufficient-statistics";
    return rep;
  }

  rep.secure = secure_length(rep.estimates, static_cast<double>(reconciled.size()),
                             static_cast<double>(rep.leak_ec), cfg.t_ver, cfg.t_pa);
  if (!rep.secure.has_key || reconciled.empty()) {
    rep.status = "no-key";
    return rep;
  }

  auto m = static_cast<std::size_t>(rep.secure.bits);
  auto rng = make_rng(cfg.seed, 0x70e9);
  std::vector<std::uint8_t> seed_bits(reconciled.size() + m - 1);
  for (auto& s : seed_bits) s = static_cast<std::uint8_t>(rng() & 1u);
  rep.final_key = toeplitz::privacy_amplify(reconciled, m, seed_bits);
  rep.status = "ok";
  return rep;
}

void write_distill_report(const std::string& prefix, const DistillReport& rep) {
  nlohmann::json j;
  j["format"] = "airqkd-distill-report/1";
  j["status"] = rep.status;
  j["correlation"] = {
      {"ok", rep.correlation.ok},
      {"offset_s", rep.correlation.offset_s},
      {"drift_s_per_s", rep.correlation.drift_s_per_s},
      {"residual_width_s", rep.correlation.residual_width_s},
      {"ambiguity_period_s", rep.correlation.ambiguity_period_s},
      {"peak_to_floor", rep.correlation.peak_to_floor},
      {"pattern_shift", rep.correlation.pattern_shift},
  };
  j["frames_total"] = rep.frames_total;
  j["frames_kept"] = rep.frames_kept;
  j["sifted"] = {{"signal_bits", rep.tallies.sift_signal},
                 {"signal_errors", rep.tallies.err_signal},
                 {"decoy_bits", rep.tallies.sift_decoy},
                 {"decoy_errors", rep.tallies.err_decoy},
                 {"qber_signal", rep.tallies.qber_signal()},
                 {"qber_decoy", rep.tallies.qber_decoy()}};
  auto dump_est = [](const DecoyEstimates& e) {
    return nlohmann::json{{"Q_mu", e.Q_mu}, {"Q_nu", e.Q_nu}, {"E_mu", e.E_mu},
                          {"E_nu", e.E_nu}, {"Y0", e.Y0},     {"Y1_L", e.Y1_L},
                          {"e1_U", e.e1_U}, {"n_sigma", e.n_sigma}, {"valid", e.valid}};
  };
  j["decoy"] = dump_est(rep.estimates);
  j["decoy_asymptotic"] = dump_est(rep.estimates_asymptotic);
  j["error_correction"] = {{"leak_ec_bits", rep.leak_ec},
                           {"blocks_total", rep.blocks_total},
                           {"blocks_verified", rep.blocks_verified},
                           {"blocks_discarded", rep.blocks_discarded},
                           {"efficiency_mean", rep.ec_efficiency_mean},
                           {"reconciled_bits", rep.reconciled_bits}};
  j["secure_key_bits"] = rep.secure.bits;
  j["has_key"] = rep.secure.has_key;
  std::ofstream jf(prefix + ".json");
  if (!jf) throw std::runtime_error("cannot open " + prefix + ".json");
  jf << j.dump(2) << "\n";

  std::ofstream cf(prefix + "_frames.csv");
  if (!cf) throw std::runtime_error("cannot open " + prefix + "_frames.csv");
  cf << "frame,counts,kept,qber_sig,qber_dec\n";
  for (const auto& f : rep.frames)
    cf << f.frame_index << "," << f.total_counts << "," << (f.kept ? 1 : 0) << ","
       << f.qber_signal << "," << f.qber_decoy << "\n";

  std::ofstream kf(prefix + "_key.bin", std::ios::binary);
  if (!kf) throw std::runtime_error("cannot open " + prefix + "_key.bin");
  std::uint8_t byte = 0;
  int fill = 0;
  for (std::uint8_t b : rep.final_key) {
    byte |= static_cast<std::uint8_t>((b & 1u) << fill);
    if (++fill == 8) {
      kf.put(static_cast<char>(byte));
      byte = 0;
      fill = 0;
    }
  }
  if (fill) kf.put(static_cast<char>(byte));
}

}  // namespace airqkd::distill

#include "airqkd/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "airqkd/rng.hpp"

namespace airqkd::runner {

void EventSimConfig::validate() const {
  source.validate();
  analyzer.validate();
  detector.validate();
  if (!(budget_detector_efficiency > 0.0) || budget_detector_efficiency > 1.0)
    throw std::invalid_argument("budget detector efficiency must be in (0, 1]");
  if (polarization.depolarization < 0.0 || polarization.depolarization > 1.0)
    throw std::invalid_argument("depolarization must be in [0, 1]");
  if (polarization.tomography_photons_per_axis < 1)
    throw std::invalid_argument("tomography needs at least one photon per axis");
  if (!(polarization.compensation_interval_s > 0.0))
    throw std::invalid_argument("compensation interval must be positive");
  if (!(polarization.fiber_correlation_time_s > 0.0))
    throw std::invalid_argument("fiber correlation time must be positive");
}

namespace {

constexpr std::array<int, 3> kAxisPlus{0, 2, 4};  // H, D, R rows of ProjectorCounts

transmitter::ProjectorCounts sample_projectors(const polarization::Stokes& s, int n_per_axis,
                                               std::mt19937_64& rng) {
  transmitter::ProjectorCounts c;
  const double comps[3] = {s.s1, s.s2, s.s3};
  for (int ax = 0; ax < 3; ++ax) {
    double p = std::clamp(0.5 * (1.0 + comps[ax]), 0.0, 1.0);
    std::binomial_distribution<int> bin(n_per_axis, p);
    int plus = bin(rng);
    c.n[static_cast<std::size_t>(kAxisPlus[static_cast<std::size_t>(ax)])] = plus;
    c.n[static_cast<std::size_t>(kAxisPlus[static_cast<std::size_t>(ax)]) + 1] =
        n_per_axis - plus;
  }
  return c;
}

struct TofInterp {
  const std::vector<std::pair<double, double>>& pts;
  double at(double t) const {
    if (pts.empty()) throw std::invalid_argument("time-of-flight series is empty");
    if (t <= pts.front().first) return pts.front().second;
    if (t >= pts.back().first) return pts.back().second;
    auto it = std::upper_bound(pts.begin(), pts.end(), t,
                               [](double v, const auto& p) { return v < p.first; });
    auto hi = it;
    auto lo = it - 1;
    double f = (t - lo->first) / (hi->first - lo->first);
    return lo->second + f * (hi->second - lo->second);
  }
};

int state_index(const transmitter::PulseSlot& s) {
  return (s.basis == transmitter::Basis::HV ? 0 : 2) + s.bit;
}

// Class-conditional slot count over the absolute slot range [lo, hi) for a
// table of length L whose class positions are the sorted list cls.
long long count_class_slots(long long lo, long long hi, long long L,
                            const std::vector<std::uint32_t>& cls) {
  if (hi <= lo || cls.empty()) return 0;
  auto in_period = [&](long long a, long long b) {  // positions in [a, b) of one period
    auto i0 = std::lower_bound(cls.begin(), cls.end(), static_cast<std::uint32_t>(a));
    auto i1 = std::lower_bound(cls.begin(), cls.end(), static_cast<std::uint32_t>(b));
    return static_cast<long long>(i1 - i0);
  };
  long long p0 = lo / L, r0 = lo % L;
  long long p1 = hi / L, r1 = hi % L;
  if (p0 == p1) return in_period(r0, r1);
  return in_period(r0, L) + in_period(0, r1) +
         (p1 - p0 - 1) * static_cast<long long>(cls.size());
}

}  // namespace

std::vector<SecondOptics> plan_optics(const EventSimConfig& cfg, int seconds,
                                      const std::vector<char>& active) {
  cfg.validate();
  if (seconds < 0) throw std::invalid_argument("seconds must be non-negative");
  if (static_cast<int>(active.size()) < seconds)
    throw std::invalid_argument("active mask shorter than the pass");

  transmitter::FiberDrift drift(cfg.seed_fiber, cfg.polarization.fiber_correlation_time_s,
                                cfg.polarization.fiber_amplitude_rad);
  const double eps = cfg.polarization.depolarization;
  std::vector<SecondOptics> plan(static_cast<std::size_t>(seconds));

  transmitter::WaveplateTriplet triplet;
  double last_opt_t = -1e18;
  for (int s = 0; s < seconds; ++s) {
    auto rot = drift.at(s + 0.5);
    std::array<polarization::Stokes, 4> drifted;
    for (int i = 0; i < 4; ++i)
      drifted[static_cast<std::size_t>(i)] = polarization::depolarize(
          rot.apply(polarization::kBB84[static_cast<std::size_t>(i)]), eps);

    auto& out = plan[static_cast<std::size_t>(s)];
    if (!active[static_cast<std::size_t>(s)]) {
      out.states = drifted;
      continue;
    }
    if (s - last_opt_t >= cfg.polarization.compensation_interval_s) {
      auto rng = make_rng(cfg.seed_tomography, static_cast<std::uint64_t>(s));
      std::array<transmitter::ProjectorCounts, 4> counts;
      for (int i = 0; i < 4; ++i)
        counts[static_cast<std::size_t>(i)] = sample_projectors(
            drifted[static_cast<std::size_t>(i)],
            cfg.polarization.tomography_photons_per_axis, rng);
      auto recon = transmitter::tomography(counts);
      triplet = transmitter::optimize_triplet(recon, polarization::kBB84).triplet;
      last_opt_t = s;
    }
    for (int i = 0; i < 4; ++i)
      out.states[static_cast<std::size_t>(i)] =
          triplet.apply(drifted[static_cast<std::size_t>(i)]);
    out.predicted_qber = transmitter::predicted_source_qber(out.states, polarization::kBB84);
  }
  return plan;
}

SimOutput simulate_detections(const EventSimConfig& cfg,
                              const std::vector<transmitter::PulseSlot>& table,
                              const std::vector<channel::LinkSample>& link,
                              const std::vector<std::pair<double, double>>& tof_series,
                              double duration_s, const std::vector<char>& quantum_on_s,
                              SlotSampling sampling) {
  cfg.validate();
  if (table.empty()) throw std::invalid_argument("slot table is empty");
  if (link.empty()) throw std::invalid_argument("link series is empty");
  if (!(duration_s > 0.0)) throw std::invalid_argument("duration must be positive");
  const int seconds = static_cast<int>(std::ceil(duration_s));
  if (static_cast<int>(quantum_on_s.size()) < seconds)
    throw std::invalid_argument("quantum-on mask shorter than the pass");

  const auto plan = plan_optics(cfg, seconds, quantum_on_s);
  const TofInterp tof{tof_series};
  const double slot_s = 1.0 / cfg.source.clock_rate_hz;
  const auto L = static_cast<long long>(table.size());

  std::array<std::vector<std::uint32_t>, 2> class_slots;  // signal, decoy
  for (std::uint32_t j = 0; j < table.size(); ++j) {
    if (table[j].intensity == transmitter::Intensity::signal)
      class_slots[0].push_back(j);
    else if (table[j].intensity == transmitter::Intensity::decoy)
      class_slots[1].push_back(j);
  }
  const double mu_of[2] = {cfg.source.mu, cfg.source.nu};

  SimOutput out;
  out.arrivals_per_s.assign(static_cast<std::size_t>(seconds), 0.0);
  out.predicted_source_qber_per_s.resize(static_cast<std::size_t>(seconds));
  for (int s = 0; s < seconds; ++s)
    out.predicted_source_qber_per_s[static_cast<std::size_t>(s)] =
        plan[static_cast<std::size_t>(s)].predicted_qber;

  // Link segments split at second boundaries, generated lazily so only the
  // arrival buckets for the second in flight stay in memory.
  struct Piece {
    double t0, t1;
    std::size_t link_idx;
    int second;
  };
  std::vector<Piece> pieces;
  for (std::size_t i = 0; i < link.size(); ++i) {
    double t0 = std::max(link[i].t_s, 0.0);
    double t1 = i + 1 < link.size() ? link[i + 1].t_s : duration_s;
    t1 = std::min(t1, duration_s);
    double lo = t0;
    while (lo < t1) {
      int sec = static_cast<int>(lo + 1e-9);
      double hi = std::min(t1, static_cast<double>(sec + 1));
      if (sec < seconds) pieces.push_back({lo, hi, i, sec});
      lo = hi;
    }
  }

  std::vector<std::vector<receiver::Arrival>> bucket(static_cast<std::size_t>(seconds));
  auto place_arrival = [&](long long k, int sec_hint) {
    double te = static_cast<double>(k) * slot_s;
    double ta = te + tof.at(te) + cfg.clock.offset_s + cfg.clock.drift_s_per_s * te;
    if (ta < 0.0 || ta >= duration_s) return;
    auto asec = static_cast<int>(ta);
    if (asec < sec_hint || asec >= seconds) return;  // buckets behind the cursor are closed
    const auto& ps = table[static_cast<std::size_t>(k % L)];
    bucket[static_cast<std::size_t>(asec)].push_back(
        {ta, plan[static_cast<std::size_t>(sec_hint)]
                 .states[static_cast<std::size_t>(state_index(ps))]});
    ++out.arrivals;
    out.arrivals_per_s[static_cast<std::size_t>(sec_hint)] += 1.0;
  };

  std::size_t cursor = 0;
  std::uint64_t piece_id = 0;
  std::vector<long long> draws;
  for (int sec = 0; sec < seconds; ++sec) {
    while (cursor < pieces.size() && pieces[cursor].second <= sec) {
      const auto& pc = pieces[cursor];
      ++cursor;
      auto rng = make_rng(cfg.seed_events, 0x5e600000ULL + piece_id++);
      if (!quantum_on_s[static_cast<std::size_t>(pc.second)]) continue;
      const auto& ls = link[pc.link_idx];
      double eta = std::min(1.0, ls.signal_detection_prob / cfg.budget_detector_efficiency);
      if (eta <= 0.0) continue;
      auto first = static_cast<long long>(std::ceil(pc.t0 / slot_s - 1e-9));
      auto last = static_cast<long long>(std::ceil(pc.t1 / slot_s - 1e-9));
      if (last <= first) continue;
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      if (sampling == SlotSampling::sparse) {
        for (int c = 0; c < 2; ++c) {
          if (mu_of[c] <= 0.0 || class_slots[static_cast<std::size_t>(c)].empty()) continue;
          long long n_cls =
              count_class_slots(first, last, L, class_slots[static_cast<std::size_t>(c)]);
          if (n_cls <= 0) continue;
          // Poisson draws at rate mu*eta per slot, placed uniformly and
          // deduplicated, hit each slot independently with probability
          // 1 - exp(-mu*eta): identical to the exhaustive per-slot draw.
          std::poisson_distribution<long long> pois(static_cast<double>(n_cls) * mu_of[c] *
                                                    eta);
          long long n = pois(rng);
          draws.clear();
          draws.reserve(static_cast<std::size_t>(n));
          auto want = static_cast<transmitter::Intensity>(c);
          for (long long d = 0; d < n; ++d) {
            long long k;
            do {
              k = first + static_cast<long long>(u01(rng) *
                                                 static_cast<double>(last - first));
              if (k >= last) k = last - 1;
            } while (table[static_cast<std::size_t>(k % L)].intensity != want);
            draws.push_back(k);
          }
          std::sort(draws.begin(), draws.end());
          draws.erase(std::unique(draws.begin(), draws.end()), draws.end());
          for (long long k : draws) place_arrival(k, pc.second);
        }
      } else {
        double p_cls[3] = {-std::expm1(-cfg.source.mu * eta),
                           -std::expm1(-cfg.source.nu * eta), 0.0};
        for (long long k = first; k < last; ++k) {
          double p = p_cls[static_cast<int>(table[static_cast<std::size_t>(k % L)].intensity)];
          if (p > 0.0 && u01(rng) < p) place_arrival(k, pc.second);
        }
      }
    }

    auto det_rng = make_rng(cfg.seed_detector, static_cast<std::uint64_t>(sec));
    double w_end = std::min(static_cast<double>(sec + 1), duration_s);
    double t_mid = sec + 0.5;
    auto lit = std::upper_bound(link.begin(), link.end(), t_mid,
                                [](double v, const auto& s) { return v < s.t_s; });
    if (lit != link.begin()) --lit;
    double stray = std::max(
        0.0, lit->background_rate_hz - 4.0 * cfg.detector.dark_rate_per_detector_hz);
    auto det = receiver::detect_stream(bucket[static_cast<std::size_t>(sec)], cfg.analyzer,
                                       cfg.detector, sec, w_end, stray, det_rng);
    out.detections.insert(out.detections.end(), det.begin(), det.end());
    bucket[static_cast<std::size_t>(sec)].clear();
    bucket[static_cast<std::size_t>(sec)].shrink_to_fit();
  }

  double qsum = 0.0;
  int qn = 0;
  for (int s = 0; s < seconds; ++s) {
    if (quantum_on_s[static_cast<std::size_t>(s)] &&
        plan[static_cast<std::size_t>(s)].predicted_qber >= 0.0) {
      qsum += plan[static_cast<std::size_t>(s)].predicted_qber;
      ++qn;
    }
  }
  if (qn) out.mean_source_qber = qsum / qn;
  return out;
}

}  // namespace airqkd::runner

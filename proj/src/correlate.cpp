#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "airqkd/constants.hpp"
#include "airqkd/distill.hpp"

namespace airqkd::distill {

namespace {

// Linear interpolation over the (t, tof) series, clamped at both ends.
class TofCurve {
 public:
  explicit TofCurve(const std::vector<std::pair<double, double>>& s) : s_(s) {
    if (s_.empty()) throw std::invalid_argument("time-of-flight series is empty");
  }
  double at(double t) const {
    if (t <= s_.front().first) return s_.front().second;
    if (t >= s_.back().first) return s_.back().second;
    auto it = std::upper_bound(s_.begin(), s_.end(), t,
                               [](double v, const auto& p) { return v < p.first; });
    const auto& b = *it;
    const auto& a = *(it - 1);
    double f = (t - a.first) / std::max(b.first - a.first, 1e-12);
    return a.second + f * (b.second - a.second);
  }

 private:
  const std::vector<std::pair<double, double>>& s_;
};

double wrap_pm(double x, double period) { return x - period * std::round(x / period); }

struct FramePhase {
  double t_mid = 0.0;
  double phase = 0.0;   // circular mean, wrapped to (-period/2, period/2]
  double resultant = 0.0;
  std::size_t count = 0;
};

}  // namespace

CorrelationResult correlate(const std::vector<receiver::DetectionEvent>& detections,
                            const std::vector<std::pair<double, double>>& tof_series,
                            const std::vector<transmitter::PulseSlot>& table,
                            const CorrelationConfig& cfg) {
  if (table.empty()) throw std::invalid_argument("empty source table");
  const double slot = 1.0 / cfg.clock_hz;
  const auto L = static_cast<std::int64_t>(table.size());

  CorrelationResult res;
  res.ambiguity_period_s = cfg.sequence_length * slot;
  res.slot_index.assign(detections.size(), -1);
  if (detections.empty()) return res;

  TofCurve tof(tof_series);
  auto emission_estimate = [&](std::size_t i) {
    double t_d = static_cast<double>(detections[i].tag) * cfg.tag_resolution_s;
    return std::pair<double, double>{t_d, t_d - tof.at(t_d)};
  };

  // Acquisition scans short consecutive windows: the shared range knowledge
  // and the receiver clock wander slowly, so a phase histogram taken over
  // the whole record smears while a couple of seconds stays sharp. The
  // first window with enough events and a clear peak anchors the offset;
  // this also rides over leading background-only stretches when the quantum
  // link comes up late in the record.
  const double acq_window_s = 2.0;
  std::vector<long long> bins(static_cast<std::size_t>(cfg.phase_bins), 0);

  auto fold = [&](std::size_t i) {
    auto [t_d, te] = emission_estimate(i);
    (void)t_d;
    double ph = te - slot * std::floor(te / slot);
    auto b = static_cast<std::size_t>(ph / slot * cfg.phase_bins);
    ++bins[std::min(b, bins.size() - 1)];
  };
  auto peak_to_floor = [&]() {
    std::size_t peak_bin = 0;
    for (std::size_t b = 1; b < bins.size(); ++b)
      if (bins[b] > bins[peak_bin]) peak_bin = b;
    double floor_sum = 0.0;
    int floor_n = 0;
    for (std::size_t b = 0; b < bins.size(); ++b) {
      auto d = static_cast<long long>(b > peak_bin ? b - peak_bin : peak_bin - b);
      d = std::min(d, static_cast<long long>(bins.size()) - d);
      if (d >= (3 * cfg.phase_bins) / 8) {
        floor_sum += static_cast<double>(bins[b]);
        ++floor_n;
      }
    }
    double floor_mean = floor_n ? floor_sum / floor_n : 0.0;
    return static_cast<double>(bins[peak_bin]) / std::max(floor_mean, 1e-9);
  };

  const std::size_t min_events = std::max<std::size_t>(cfg.min_events, 1);
  std::size_t acq_begin = 0, acq_end = 0;
  double best_p2f = -1.0;
  for (std::size_t i = 0; i < detections.size() && !res.ok;) {
    double w1 = static_cast<double>(detections[i].tag) * cfg.tag_resolution_s + acq_window_s;
    std::fill(bins.begin(), bins.end(), 0);
    std::size_t j = i;
    for (; j < detections.size(); ++j) {
      if (static_cast<double>(detections[j].tag) * cfg.tag_resolution_s >= w1) break;
      fold(j);
    }
    if (j - i >= min_events) {
      double p2f = peak_to_floor();
      best_p2f = std::max(best_p2f, p2f);
      if (p2f >= cfg.peak_threshold) {
        res.peak_to_floor = p2f;
        res.ok = true;
        acq_begin = i;
        acq_end = j;
      }
    }
    i = std::max(j, i + 1);
  }
  if (!res.ok) {
    if (best_p2f >= 0.0) {
      res.peak_to_floor = best_p2f;
    } else {
      // Too sparse for any single window: fold everything as a last resort.
      std::fill(bins.begin(), bins.end(), 0);
      for (std::size_t i = 0; i < detections.size(); ++i) fold(i);
      res.peak_to_floor = peak_to_floor();
      res.ok = detections.size() >= min_events && res.peak_to_floor >= cfg.peak_threshold;
      acq_end = detections.size();
    }
  }

  double offset = 0.0, drift = 0.0;
  // Offset curve through the unwrapped per-frame phases; assignment follows
  // it so slow wander (clock, range knowledge) beyond a straight line is
  // still tracked. Empty when fewer than two frames contribute.
  std::vector<double> curve_t, curve_u;
  if (res.ok) {
    // Anchor phase: circular mean over the acquisition window.
    double cs = 0.0, sn = 0.0;
    for (std::size_t i = acq_begin; i < acq_end; ++i) {
      auto [t_d, te] = emission_estimate(i);
      (void)t_d;
      double ang = 2.0 * kPi * (te / slot - std::floor(te / slot));
      cs += std::cos(ang);
      sn += std::sin(ang);
    }
    double delta0 = std::atan2(sn, cs) / (2.0 * kPi) * slot;

    // Per-frame circular means feed a linear offset-drift fit. Frames need
    // both enough events and real phase concentration to participate.
    std::vector<FramePhase> fp;
    {
      std::size_t i = 0;
      while (i < detections.size()) {
        double t0 = static_cast<double>(detections[i].tag) * cfg.tag_resolution_s;
        double frame_end = (std::floor(t0 / cfg.frame_s) + 1.0) * cfg.frame_s;
        double c = 0.0, s = 0.0;
        std::size_t n = 0;
        double tsum = 0.0;
        while (i < detections.size()) {
          auto [t_d, te] = emission_estimate(i);
          if (t_d >= frame_end) break;
          double ang = 2.0 * kPi * (te / slot - std::floor(te / slot));
          c += std::cos(ang);
          s += std::sin(ang);
          tsum += t_d;
          ++n;
          ++i;
        }
        if (n >= 50) {
          double r = std::hypot(c, s) / static_cast<double>(n);
          if (r > 0.2)
            fp.push_back({tsum / static_cast<double>(n),
                          std::atan2(s, c) / (2.0 * kPi) * slot, r, n});
        }
      }
    }

    if (fp.size() >= 2) {
      // Unwrap the per-frame phases, anchored at the global estimate.
      std::vector<double> u(fp.size());
      u[0] = delta0 + wrap_pm(fp[0].phase - delta0, slot);
      for (std::size_t k = 1; k < fp.size(); ++k)
        u[k] = u[k - 1] + wrap_pm(fp[k].phase - fp[k - 1].phase, slot);
      double sw = 0.0, st = 0.0, su = 0.0, stt = 0.0, stu = 0.0;
      for (std::size_t k = 0; k < fp.size(); ++k) {
        double w = static_cast<double>(fp[k].count);
        sw += w;
        st += w * fp[k].t_mid;
        su += w * u[k];
        stt += w * fp[k].t_mid * fp[k].t_mid;
        stu += w * fp[k].t_mid * u[k];
      }
      double denom = sw * stt - st * st;
      if (std::abs(denom) > 1e-12) {
        drift = (sw * stu - st * su) / denom;
        offset = (su - drift * st) / sw;
      } else {
        offset = su / sw;
      }
      curve_t.reserve(fp.size());
      curve_u.reserve(fp.size());
      for (std::size_t k = 0; k < fp.size(); ++k) {
        curve_t.push_back(fp[k].t_mid);
        curve_u.push_back(u[k]);
      }
    } else {
      offset = delta0;
    }
  }
  res.offset_s = offset;
  res.drift_s_per_s = drift;

  auto offset_at = [&](double t) {
    if (curve_t.size() < 2) return offset + drift * t;
    if (t <= curve_t.front()) return curve_u.front() + drift * (t - curve_t.front());
    if (t >= curve_t.back()) return curve_u.back() + drift * (t - curve_t.back());
    auto it = std::upper_bound(curve_t.begin(), curve_t.end(), t);
    auto j = static_cast<std::size_t>(it - curve_t.begin());
    double f = (t - curve_t[j - 1]) / (curve_t[j] - curve_t[j - 1]);
    return curve_u[j - 1] + f * (curve_u[j] - curve_u[j - 1]);
  };

  // Slot assignment and residual statistics.
  double rs = 0.0, rss = 0.0;
  std::size_t rn = 0;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    auto [t_d, te] = emission_estimate(i);
    double t_corr = te - offset_at(t_d);
    auto k = static_cast<std::int64_t>(std::llround(t_corr / slot));
    double resid = t_corr - static_cast<double>(k) * slot;
    if (res.ok && std::abs(resid) > cfg.accept_window_s) continue;
    res.slot_index[i] = k;
    rs += resid;
    rss += resid * resid;
    ++rn;
  }
  if (rn > 1) {
    double mean = rs / static_cast<double>(rn);
    res.residual_width_s = std::sqrt(std::max(rss / static_cast<double>(rn) - mean * mean, 0.0));
  }

  // Cyclic alignment of slot indices against the repeating intensity
  // pattern; the detection-rate contrast between the classes makes the true
  // shift the clear maximum. Weights only need the right ordering.
  if (res.ok && cfg.pattern_alignment) {
    std::vector<double> w(table.size());
    for (std::size_t j = 0; j < table.size(); ++j) {
      switch (table[j].intensity) {
        case transmitter::Intensity::signal: w[j] = 1.0; break;
        case transmitter::Intensity::decoy: w[j] = 0.2; break;
        case transmitter::Intensity::vacuum: w[j] = 0.0; break;
      }
    }
    std::vector<double> counts(table.size(), 0.0);
    for (std::size_t i = 0; i < detections.size(); ++i) {
      if (res.slot_index[i] < 0) continue;
      counts[static_cast<std::size_t>(((res.slot_index[i] % L) + L) % L)] += 1.0;
    }
    double best = -1.0;
    int best_shift = 0;
    for (std::int64_t shift = 0; shift < L; ++shift) {
      double score = 0.0;
      for (std::int64_t j = 0; j < L; ++j)
        score += counts[static_cast<std::size_t>(j)] *
                 w[static_cast<std::size_t>((j + shift) % L)];
      if (score > best) {
        best = score;
        best_shift = static_cast<int>(shift);
      }
    }
    res.pattern_shift = best_shift;
    if (best_shift)
      for (auto& k : res.slot_index)
        if (k >= 0) k += best_shift;
  }
  return res;
}

}  // namespace airqkd::distill

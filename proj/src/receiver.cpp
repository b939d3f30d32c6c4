#include "airqkd/receiver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace airqkd::receiver {

void AnalyzerConfig::validate() const {
  if (!(basis_split > 0.0) || !(basis_split < 1.0))
    throw std::invalid_argument("basis_split must lie in (0,1)");
  for (double c : contrast)
    if (!(c > 1.0)) throw std::invalid_argument("contrast must exceed 1");
}

void DetectorConfig::validate() const {
  if (!(efficiency > 0.0) || efficiency > 1.0)
    throw std::invalid_argument("efficiency must lie in (0,1]");
  if (dark_rate_per_detector_hz < 0.0) throw std::invalid_argument("negative dark rate");
  if (dead_time_s < 0.0) throw std::invalid_argument("negative dead time");
  if (timing_jitter_sigma_s < 0.0) throw std::invalid_argument("negative jitter");
  if (!(tag_resolution_s > 0.0)) throw std::invalid_argument("tag_resolution_s must be positive");
}

std::array<double, 4> channel_probabilities(const polarization::Stokes& s,
                                            const AnalyzerConfig& a) {
  double ph = 0.5 * (1.0 + s.s1);  // Born weight for H within the H/V basis
  double pd = 0.5 * (1.0 + s.s2);  // Born weight for D within the D/A basis
  std::array<double, 4> leak{};
  for (int i = 0; i < 4; ++i) leak[i] = 1.0 / (1.0 + a.contrast[i]);
  double bs = a.basis_split;
  std::array<double, 4> p{};
  p[0] = bs * (ph * (1.0 - leak[0]) + (1.0 - ph) * leak[1]);
  p[1] = bs * ((1.0 - ph) * (1.0 - leak[1]) + ph * leak[0]);
  p[2] = (1.0 - bs) * (pd * (1.0 - leak[2]) + (1.0 - pd) * leak[3]);
  p[3] = (1.0 - bs) * ((1.0 - pd) * (1.0 - leak[3]) + pd * leak[2]);
  return p;
}

Channel measure_polarization(const polarization::Stokes& s, const AnalyzerConfig& a,
                             std::mt19937_64& rng) {
  std::array<double, 4> p = channel_probabilities(s, a);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = u(rng);
  double acc = 0.0;
  for (int i = 0; i < 3; ++i) {
    acc += p[i];
    if (x < acc) return static_cast<Channel>(i);
  }
  return Channel::A;
}

std::vector<DetectionEvent> detect_stream(const std::vector<Arrival>& arrivals,
                                          const AnalyzerConfig& analyzer,
                                          const DetectorConfig& detector,
                                          double window_start_s, double window_end_s,
                                          double extra_background_hz,
                                          std::mt19937_64& rng) {
  analyzer.validate();
  detector.validate();
  if (!(window_end_s > window_start_s))
    throw std::invalid_argument("detection window must have positive width");

  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, detector.timing_jitter_sigma_s);

  std::array<std::vector<double>, 4> per_detector;
  for (const auto& a : arrivals) {
    if (a.t_s < window_start_s || a.t_s >= window_end_s) continue;
    if (u(rng) >= detector.efficiency) continue;
    Channel ch = measure_polarization(a.state, analyzer, rng);
    double t = a.t_s + (detector.timing_jitter_sigma_s > 0.0 ? jitter(rng) : 0.0);
    if (t < 0.0) t = 0.0;
    per_detector[static_cast<int>(ch)].push_back(t);
  }

  double width = window_end_s - window_start_s;
  double rate = detector.dark_rate_per_detector_hz + extra_background_hz / 4.0;
  for (int ch = 0; ch < 4; ++ch) {
    if (rate <= 0.0) break;
    std::poisson_distribution<long> pois(rate * width);
    long n = pois(rng);
    for (long i = 0; i < n; ++i)
      per_detector[ch].push_back(window_start_s + u(rng) * width);
  }

  std::vector<DetectionEvent> out;
  for (int ch = 0; ch < 4; ++ch) {
    auto& v = per_detector[ch];
    std::sort(v.begin(), v.end());
    double last = -1e18;
    for (double t : v) {
      if (t - last < detector.dead_time_s) continue;
      last = t;
      out.push_back({static_cast<std::uint64_t>(std::llround(t / detector.tag_resolution_s)),
                     static_cast<Channel>(ch)});
    }
  }
  std::sort(out.begin(), out.end(), [](const DetectionEvent& a, const DetectionEvent& b) {
    return a.tag != b.tag ? a.tag < b.tag : a.channel < b.channel;
  });
  return out;
}

void write_time_tags(const std::string& path_prefix, const std::vector<DetectionEvent>& events,
                     double tag_resolution_s, double t0_s) {
  std::ofstream bin(path_prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + path_prefix + ".bin");
  for (const auto& e : events) {
    bin.write(reinterpret_cast<const char*>(&e.tag), 8);
    std::uint8_t ch = static_cast<std::uint8_t>(e.channel);
    bin.write(reinterpret_cast<const char*>(&ch), 1);
  }
  nlohmann::ordered_json j;
  j["format"] = "airqkd-time-tags/1";
  j["tag_resolution_s"] = tag_resolution_s;
  j["t0_s"] = t0_s;
  j["count"] = events.size();
  j["channels"] = {{"H", 0}, {"V", 1}, {"D", 2}, {"A", 3}};
  std::ofstream side(path_prefix + ".json");
  side << j.dump(2) << "\n";
}

TimeTagFile read_time_tags(const std::string& path_prefix) {
  TimeTagFile out;
  std::ifstream side(path_prefix + ".json");
  if (!side) throw std::runtime_error("cannot read " + path_prefix + ".json");
  nlohmann::json j = nlohmann::json::parse(side);
  out.tag_resolution_s = j.at("tag_resolution_s").get<double>();
  out.t0_s = j.at("t0_s").get<double>();
  std::uint64_t count = j.at("count").get<std::uint64_t>();

  std::ifstream bin(path_prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read " + path_prefix + ".bin");
  out.events.reserve(count);
  while (true) {
    std::uint64_t tag = 0;
    std::uint8_t ch = 0;
    bin.read(reinterpret_cast<char*>(&tag), 8);
    if (bin.gcount() == 0) break;
    if (bin.gcount() != 8) throw std::runtime_error("truncated time-tag record");
    bin.read(reinterpret_cast<char*>(&ch), 1);
    if (bin.gcount() != 1) throw std::runtime_error("truncated time-tag record");
    if (ch > 3) throw std::runtime_error("bad channel in time-tag file");
    out.events.push_back({tag, static_cast<Channel>(ch)});
  }
  if (out.events.size() != count)
    throw std::runtime_error("time-tag count differs from sidecar");
  return out;
}

}  // namespace airqkd::receiver

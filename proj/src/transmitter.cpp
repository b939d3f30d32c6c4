#include "airqkd/transmitter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "airqkd/constants.hpp"
#include "airqkd/rng.hpp"

namespace airqkd::transmitter {

using polarization::Rotation;
using polarization::Stokes;

void SourceConfig::validate() const {
  if (!(clock_rate_hz > 0.0)) throw std::invalid_argument("clock_rate_hz must be positive");
  if (!(nu > 0.0) || !(mu > nu)) throw std::invalid_argument("need 0 < nu < mu");
  if (p_signal < 0.0 || p_decoy < 0.0 || p_vacuum < 0.0 ||
      std::abs(p_signal + p_decoy + p_vacuum - 1.0) > 1e-9)
    throw std::invalid_argument("intensity probabilities must sum to 1");
  if (sequence_length == 0) throw std::invalid_argument("sequence_length must be positive");
}

double SourceConfig::mean_photons(Intensity i) const {
  switch (i) {
    case Intensity::signal: return mu;
    case Intensity::decoy: return nu;
    default: return 0.0;
  }
}

std::vector<PulseSlot> generate_sequence(const SourceConfig& cfg, std::uint64_t seed,
                                         std::uint64_t epoch) {
  cfg.validate();
  std::uint64_t stream = cfg.true_random_mode ? 0x5e91 + epoch : 0x5e90;
  std::mt19937_64 rng = make_rng(seed, stream);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<PulseSlot> out(cfg.sequence_length);
  for (std::uint32_t i = 0; i < cfg.sequence_length; ++i) {
    PulseSlot& s = out[i];
    s.slot_index = i;
    double x = u(rng);
    s.intensity = x < cfg.p_signal              ? Intensity::signal
                  : x < cfg.p_signal + cfg.p_decoy ? Intensity::decoy
                                                   : Intensity::vacuum;
    s.basis = u(rng) < 0.5 ? Basis::HV : Basis::DA;
    s.bit = u(rng) < 0.5 ? 0 : 1;
    s.state = polarization::kBB84[(s.basis == Basis::HV ? 0 : 2) + s.bit];
  }
  return out;
}

FiberDrift::FiberDrift(std::uint64_t seed, double correlation_time_s, double amplitude_rad)
    : tau_(correlation_time_s), sigma_(amplitude_rad / std::sqrt(3.0)), seed_(seed) {
  if (!(tau_ > 0.0)) throw std::invalid_argument("correlation time must be positive");
  std::mt19937_64 rng = make_rng(seed_, 0xf1be);
  std::normal_distribution<double> g(0.0, 1.0);
  const std::size_t horizon = 16384;  // seconds; far beyond any pass
  knots_.resize(horizon + 1);
  knots_[0] = {0.0, 0.0, 0.0};
  double a = std::exp(-1.0 / tau_);
  double step = sigma_ * std::sqrt(std::max(0.0, 1.0 - a * a));
  for (std::size_t k = 1; k <= horizon; ++k) {
    knots_[k] = {a * knots_[k - 1].x + step * g(rng),
                 a * knots_[k - 1].y + step * g(rng),
                 a * knots_[k - 1].z + step * g(rng)};
  }
}

void FiberDrift::extend(std::size_t) const {}

Rotation FiberDrift::at(double t_s) const {
  if (t_s <= 0.0) return Rotation::identity();
  double tf = std::min(t_s, static_cast<double>(knots_.size() - 1) - 1e-9);
  std::size_t i = static_cast<std::size_t>(tf);
  double x = tf - static_cast<double>(i);
  double w = x * x * (3.0 - 2.0 * x);  // smooth blend between knots
  Vec3 rv = knots_[i] * (1.0 - w) + knots_[i + 1] * w;
  return Rotation::from_rotvec(rv);
}

Stokes tomography_reconstruct(const ProjectorCounts& c) {
  for (double v : c.n)
    if (v < 0.0) throw std::invalid_argument("negative projector count");
  double dh = c.n[0] + c.n[1];
  double dd = c.n[2] + c.n[3];
  double dc = c.n[4] + c.n[5];
  if (dh <= 0.0 || dd <= 0.0 || dc <= 0.0)
    throw std::invalid_argument("tomography basis with zero total counts");
  Stokes s{(c.n[0] - c.n[1]) / dh, (c.n[2] - c.n[3]) / dd, (c.n[4] - c.n[5]) / dc};
  double n = s.norm();
  if (n > 1.0) s = {s.s1 / n, s.s2 / n, s.s3 / n};
  return s;
}

std::array<Stokes, 4> tomography(const std::array<ProjectorCounts, 4>& per_state) {
  std::array<Stokes, 4> out;
  for (std::size_t i = 0; i < 4; ++i) out[i] = tomography_reconstruct(per_state[i]);
  return out;
}

Rotation WaveplateTriplet::rotation() const {
  using polarization::waveplate_rotation;
  return waveplate_rotation(90.0, qwp2_deg)
      .after(waveplate_rotation(180.0, hwp_deg))
      .after(waveplate_rotation(90.0, qwp1_deg));
}

Stokes WaveplateTriplet::apply(const Stokes& s) const { return rotation().apply(s); }

namespace {

double triplet_mean_fidelity(const std::array<Stokes, 4>& r, const std::array<Stokes, 4>& t,
                             double a, double b, double c) {
  WaveplateTriplet w{a, b, c};
  Rotation rot = w.rotation();
  double f = 0.0;
  for (std::size_t i = 0; i < 4; ++i) f += polarization::fidelity(rot.apply(r[i]), t[i]);
  return 0.25 * f;
}

double wrap_plate(double deg) {
  double d = std::fmod(deg, 180.0);
  if (d < 0.0) d += 180.0;
  return d;
}

}  // namespace

CompensationResult optimize_triplet(const std::array<Stokes, 4>& reconstructed,
                                    const std::array<Stokes, 4>& targets) {
  auto eval = [&](double a, double b, double c) {
    return triplet_mean_fidelity(reconstructed, targets, a, b, c);
  };

  struct Cand {
    double a, b, c, f;
  };
  std::vector<Cand> top;
  top.push_back({0.0, 0.0, 0.0, eval(0.0, 0.0, 0.0)});  // identity baseline
  for (double a = 0.0; a < 180.0; a += 10.0)
    for (double b = 0.0; b < 180.0; b += 10.0)
      for (double c = 0.0; c < 180.0; c += 10.0) {
        double f = eval(a, b, c);
        top.push_back({a, b, c, f});
        std::push_heap(top.begin(), top.end(),
                       [](const Cand& x, const Cand& y) { return x.f > y.f; });
        if (top.size() > 6) {
          std::pop_heap(top.begin(), top.end(),
                        [](const Cand& x, const Cand& y) { return x.f > y.f; });
          top.pop_back();
        }
      }

  Cand best{0.0, 0.0, 0.0, -1.0};
  for (Cand cand : top) {
    double step = 5.0;
    int evals = 0;
    while (step >= 0.005 && evals < 20000) {
      bool improved = false;
      const double deltas[6][3] = {{step, 0, 0}, {-step, 0, 0}, {0, step, 0},
                                   {0, -step, 0}, {0, 0, step}, {0, 0, -step}};
      for (const auto& d : deltas) {
        double f = eval(cand.a + d[0], cand.b + d[1], cand.c + d[2]);
        ++evals;
        if (f > cand.f) {
          cand = {cand.a + d[0], cand.b + d[1], cand.c + d[2], f};
          improved = true;
        }
      }
      if (!improved) step *= 0.5;
    }
    if (cand.f > best.f) best = cand;
  }

  CompensationResult out;
  out.triplet = {wrap_plate(best.a), wrap_plate(best.b), wrap_plate(best.c)};
  out.mean_fidelity = best.f;
  double bound = 0.0;
  for (const auto& r : reconstructed) bound += 0.5 * (1.0 + r.norm());
  bound *= 0.25;
  out.converged = best.f >= bound - 5e-4;
  return out;
}

double predicted_source_qber(const std::array<Stokes, 4>& compensated,
                             const std::array<Stokes, 4>& targets) {
  double q = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    q += 1.0 - polarization::fidelity(compensated[i], targets[i]);
  return q * 0.25;
}

void write_source_log(const std::string& path_prefix, const SourceLog& log) {
  log.config.validate();
  std::ofstream bin(path_prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + path_prefix + ".bin");
  const char magic[4] = {'A', 'Q', 'S', '1'};
  bin.write(magic, 4);
  std::uint32_t version = 1;
  std::uint32_t len = static_cast<std::uint32_t>(log.table.size());
  std::uint32_t nep = static_cast<std::uint32_t>(log.epoch_slots.size());
  bin.write(reinterpret_cast<const char*>(&version), 4);
  bin.write(reinterpret_cast<const char*>(&len), 4);
  bin.write(reinterpret_cast<const char*>(&nep), 4);
  for (const auto& s : log.table) {
    std::uint8_t rec[3] = {static_cast<std::uint8_t>(s.intensity),
                           static_cast<std::uint8_t>(s.basis), s.bit};
    bin.write(reinterpret_cast<const char*>(rec), 3);
  }
  for (std::uint64_t e : log.epoch_slots)
    bin.write(reinterpret_cast<const char*>(&e), 8);

  nlohmann::ordered_json j;
  j["format"] = "airqkd-source-log/1";
  j["seed"] = log.seed;
  j["clock_rate_hz"] = log.config.clock_rate_hz;
  j["mu"] = log.config.mu;
  j["nu"] = log.config.nu;
  j["p_signal"] = log.config.p_signal;
  j["p_decoy"] = log.config.p_decoy;
  j["p_vacuum"] = log.config.p_vacuum;
  j["sequence_length"] = log.config.sequence_length;
  j["true_random_mode"] = log.config.true_random_mode;
  std::ofstream side(path_prefix + ".json");
  side << j.dump(2) << "\n";
}

SourceLog read_source_log(const std::string& path_prefix) {
  std::ifstream side(path_prefix + ".json");
  if (!side) throw std::runtime_error("cannot read " + path_prefix + ".json");
  nlohmann::json j = nlohmann::json::parse(side);
  SourceLog log;
  log.seed = j.at("seed").get<std::uint64_t>();
  log.config.clock_rate_hz = j.at("clock_rate_hz").get<double>();
  log.config.mu = j.at("mu").get<double>();
  log.config.nu = j.at("nu").get<double>();
  log.config.p_signal = j.at("p_signal").get<double>();
  log.config.p_decoy = j.at("p_decoy").get<double>();
  log.config.p_vacuum = j.at("p_vacuum").get<double>();
  log.config.sequence_length = j.at("sequence_length").get<std::uint32_t>();
  log.config.true_random_mode = j.at("true_random_mode").get<bool>();

  std::ifstream bin(path_prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read " + path_prefix + ".bin");
  char magic[4];
  bin.read(magic, 4);
  if (bin.gcount() != 4 || magic[0] != 'A' || magic[1] != 'Q' || magic[2] != 'S' ||
      magic[3] != '1')
    throw std::runtime_error("bad source log magic");
  std::uint32_t version = 0, len = 0, nep = 0;
  bin.read(reinterpret_cast<char*>(&version), 4);
  bin.read(reinterpret_cast<char*>(&len), 4);
  bin.read(reinterpret_cast<char*>(&nep), 4);
  if (version != 1) throw std::runtime_error("unsupported source log version");
  log.table.resize(len);
  for (std::uint32_t i = 0; i < len; ++i) {
    std::uint8_t rec[3];
    bin.read(reinterpret_cast<char*>(rec), 3);
    PulseSlot& s = log.table[i];
    s.slot_index = i;
    s.intensity = static_cast<Intensity>(rec[0]);
    s.basis = static_cast<Basis>(rec[1]);
    s.bit = rec[2];
    s.state = polarization::kBB84[(s.basis == Basis::HV ? 0 : 2) + s.bit];
  }
  log.epoch_slots.resize(nep);
  for (std::uint32_t i = 0; i < nep; ++i)
    bin.read(reinterpret_cast<char*>(&log.epoch_slots[i]), 8);
  if (!bin) throw std::runtime_error("truncated source log");
  return log;
}

}  // namespace airqkd::transmitter

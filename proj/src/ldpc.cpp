#include "airqkd/ldpc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "airqkd/distill.hpp"
#include "airqkd/rng.hpp"

namespace airqkd::ldpc {

LdpcCode build_ldpc(int n, double rate, std::uint64_t seed) {
  if (n < 8) throw std::invalid_argument("block too short");
  if (rate <= 0.0 || rate >= 1.0) throw std::invalid_argument("rate must be in (0,1)");
  const int col_w = 3;
  int n_checks = static_cast<int>(std::lround(n * (1.0 - rate)));
  if (n_checks < col_w + 1) throw std::invalid_argument("rate leaves too few checks");

  // Row capacities: spread 3n stubs as evenly as the check count allows.
  const long long stubs = static_cast<long long>(n) * col_w;
  std::vector<int> cap(n_checks, static_cast<int>(stubs / n_checks));
  for (long long i = 0; i < stubs % n_checks; ++i) ++cap[static_cast<std::size_t>(i)];

  auto rng = make_rng(seed, 0x7e60 + static_cast<std::uint64_t>(std::lround(rate * 100)));

  std::vector<std::vector<int>> check_rows(n_checks);
  std::vector<std::vector<int>> var_cols(n);
  std::vector<int> degree(n_checks, 0);

  // Progressive edge growth: breadth-first expansion from the variable over
  // the graph built so far; prefer a check the expansion never reaches (no
  // new cycle), otherwise one as far away as possible, so every new cycle is
  // as long as the current graph allows.
  std::vector<int> chk_stamp(n_checks, -1), chk_dist(n_checks, 0);
  std::vector<int> var_stamp(n, -1);
  std::vector<int> frontier, chk_frontier, next_frontier;
  int epoch = 0;

  // Long codes bound the lookahead: once a candidate sits more than two
  // check levels away the closed cycle is already length >= 8, and the exact
  // search would sweep nearly the whole graph for every edge.
  const int depth_cap = n >= 16384 ? 2 : n;

  for (int v = 0; v < n; ++v) {
    for (int k = 0; k < col_w; ++k) {
      ++epoch;
      var_stamp[static_cast<std::size_t>(v)] = epoch;
      frontier.assign(1, v);
      int depth = 0;
      while (!frontier.empty() && depth <= depth_cap) {
        chk_frontier.clear();
        for (int u : frontier)
          for (int c : var_cols[static_cast<std::size_t>(u)])
            if (chk_stamp[static_cast<std::size_t>(c)] != epoch) {
              chk_stamp[static_cast<std::size_t>(c)] = epoch;
              chk_dist[static_cast<std::size_t>(c)] = depth;
              chk_frontier.push_back(c);
            }
        next_frontier.clear();
        for (int c : chk_frontier)
          for (int u : check_rows[static_cast<std::size_t>(c)])
            if (var_stamp[static_cast<std::size_t>(u)] != epoch) {
              var_stamp[static_cast<std::size_t>(u)] = epoch;
              next_frontier.push_back(u);
            }
        frontier.swap(next_frontier);
        ++depth;
      }

      int best = -1, best_deg = 1 << 30, best_dist = -1, ties = 0;
      bool best_unreached = false;
      for (int c = 0; c < n_checks; ++c) {
        auto cs = static_cast<std::size_t>(c);
        if (degree[cs] >= cap[cs]) continue;
        bool unreached = chk_stamp[cs] != epoch;
        if (!unreached && chk_dist[cs] == 0) continue;  // parallel edge
        int dist = unreached ? 1 << 30 : chk_dist[cs];
        bool better = false;
        if (unreached != best_unreached) {
          better = unreached;
        } else if (unreached) {
          better = degree[cs] < best_deg;
        } else if (dist != best_dist) {
          better = dist > best_dist;
        } else {
          better = degree[cs] < best_deg;
        }
        if (better) {
          best = c;
          best_deg = degree[cs];
          best_dist = dist;
          best_unreached = unreached;
          ties = 1;
        } else if (best >= 0 && unreached == best_unreached && degree[cs] == best_deg &&
                   (unreached || dist == best_dist)) {
          // Reservoir tie-break keeps the construction seeded-random.
          ++ties;
          if (rng() % ties == 0) best = c;
        }
      }
      if (best < 0) throw std::runtime_error("edge growth exhausted the checks");
      check_rows[static_cast<std::size_t>(best)].push_back(v);
      var_cols[static_cast<std::size_t>(v)].push_back(best);
      ++degree[static_cast<std::size_t>(best)];
    }
  }

  LdpcCode code;
  code.n = n;
  code.n_checks = n_checks;
  code.rate = rate;
  code.check_offset.resize(n_checks + 1, 0);
  for (int c = 0; c < n_checks; ++c)
    code.check_offset[c + 1] = code.check_offset[c] + static_cast<int>(check_rows[c].size());
  code.check_var.resize(static_cast<std::size_t>(code.check_offset[n_checks]));
  std::vector<std::vector<int>> var_edges(n);
  for (int c = 0; c < n_checks; ++c)
    for (std::size_t i = 0; i < check_rows[c].size(); ++i) {
      int e = code.check_offset[c] + static_cast<int>(i);
      code.check_var[static_cast<std::size_t>(e)] = check_rows[c][i];
      var_edges[check_rows[c][i]].push_back(e);
    }
  code.var_offset.resize(n + 1, 0);
  for (int v = 0; v < n; ++v)
    code.var_offset[v + 1] = code.var_offset[v] + static_cast<int>(var_edges[v].size());
  code.var_edge.resize(static_cast<std::size_t>(code.var_offset[n]));
  for (int v = 0; v < n; ++v)
    for (std::size_t i = 0; i < var_edges[v].size(); ++i)
      code.var_edge[static_cast<std::size_t>(code.var_offset[v]) + i] = var_edges[v][i];
  return code;
}

std::vector<std::uint8_t> ldpc_syndrome(const LdpcCode& code,
                                        const std::vector<std::uint8_t>& bits) {
  if (static_cast<int>(bits.size()) != code.n)
    throw std::invalid_argument("bit count does not match the code length");
  std::vector<std::uint8_t> s(static_cast<std::size_t>(code.n_checks), 0);
  for (int c = 0; c < code.n_checks; ++c) {
    std::uint8_t acc = 0;
    for (int e = code.check_offset[c]; e < code.check_offset[c + 1]; ++e)
      acc ^= bits[static_cast<std::size_t>(code.check_var[static_cast<std::size_t>(e)])];
    s[static_cast<std::size_t>(c)] = acc;
  }
  return s;
}

namespace {

bool syndrome_matches(const LdpcCode& code, const std::vector<std::uint8_t>& e,
                      const std::vector<std::uint8_t>& target) {
  for (int c = 0; c < code.n_checks; ++c) {
    std::uint8_t acc = 0;
    for (int k = code.check_offset[c]; k < code.check_offset[c + 1]; ++k)
      acc ^= e[static_cast<std::size_t>(code.check_var[static_cast<std::size_t>(k)])];
    if (acc != target[static_cast<std::size_t>(c)]) return false;
  }
  return true;
}

}  // namespace

bool ldpc_decode_syndrome(const LdpcCode& code, const std::vector<std::uint8_t>& syndrome,
                          double p, std::vector<std::uint8_t>& error_out, int max_iters) {
  if (static_cast<int>(syndrome.size()) != code.n_checks)
    throw std::invalid_argument("syndrome length mismatch");
  p = std::clamp(p, 1e-4, 0.3);
  const double llr0 = std::log((1.0 - p) / p);
  const std::size_t n_edges = code.check_var.size();

  // Sum-product with a layered (check-serial) schedule: each check reads the
  // freshest totals, so convergence needs roughly half the sweeps of a
  // flooding pass.
  std::vector<double> msg(n_edges, 0.0);
  std::vector<double> total(static_cast<std::size_t>(code.n), llr0);
  error_out.assign(static_cast<std::size_t>(code.n), 0);
  if (syndrome_matches(code, error_out, syndrome)) return true;

  int max_deg = 0;
  for (int c = 0; c < code.n_checks; ++c)
    max_deg = std::max(max_deg, code.check_offset[c + 1] - code.check_offset[c]);
  std::vector<double> th(static_cast<std::size_t>(max_deg));
  std::vector<double> pf(static_cast<std::size_t>(max_deg) + 1);
  int best_unsat = 1 << 30, stall = 0;
  const int stall_limit = 25;

  for (int iter = 0; iter < max_iters; ++iter) {
    for (int c = 0; c < code.n_checks; ++c) {
      int lo = code.check_offset[c], hi = code.check_offset[c + 1];
      int d = hi - lo;
      pf[0] = syndrome[static_cast<std::size_t>(c)] ? -1.0 : 1.0;
      for (int i = 0; i < d; ++i) {
        auto e = static_cast<std::size_t>(lo + i);
        double ext = total[static_cast<std::size_t>(code.check_var[e])] - msg[e];
        th[static_cast<std::size_t>(i)] = std::tanh(0.5 * ext);
        pf[static_cast<std::size_t>(i) + 1] =
            pf[static_cast<std::size_t>(i)] * th[static_cast<std::size_t>(i)];
      }
      double pb = 1.0;
      for (int i = d - 1; i >= 0; --i) {
        auto e = static_cast<std::size_t>(lo + i);
        double prod = std::clamp(pf[static_cast<std::size_t>(i)] * pb, -0.999999999999,
                                 0.999999999999);
        double m_new = 2.0 * std::atanh(prod);
        total[static_cast<std::size_t>(code.check_var[e])] += m_new - msg[e];
        msg[e] = m_new;
        pb *= th[static_cast<std::size_t>(i)];
      }
    }
    for (int v = 0; v < code.n; ++v)
      error_out[static_cast<std::size_t>(v)] = total[static_cast<std::size_t>(v)] < 0.0 ? 1 : 0;
    int unsat = 0;
    for (int c = 0; c < code.n_checks; ++c) {
      std::uint8_t acc = 0;
      for (int k = code.check_offset[c]; k < code.check_offset[c + 1]; ++k)
        acc ^= error_out[static_cast<std::size_t>(code.check_var[static_cast<std::size_t>(k)])];
      unsat += acc != syndrome[static_cast<std::size_t>(c)];
    }
    if (unsat == 0) return true;
    if (unsat < best_unsat) {
      best_unsat = unsat;
      stall = 0;
    } else if (++stall >= stall_limit) {
      return false;  // stagnated; further sweeps will not converge
    }
  }
  return false;
}

std::uint64_t key_hash64(const std::vector<std::uint8_t>& bits, std::uint64_t seed) {
  std::uint64_t h = seed ^ (0x9e3779b97f4a7c15ULL * (bits.size() + 1));
  std::uint64_t word = 0;
  int fill = 0;
  for (std::uint8_t b : bits) {
    word = (word << 1) | (b & 1u);
    if (++fill == 64) {
      std::uint64_t s = h ^ word;
      h = splitmix64(s);
      fill = 0;
      word = 0;
    }
  }
  std::uint64_t s = h ^ word ^ (static_cast<std::uint64_t>(fill) << 56);
  return splitmix64(s);
}

Reconciler::Reconciler(int block_len, std::uint64_t seed) : block_len_(block_len), seed_(seed) {
  if (block_len < 1024) throw std::invalid_argument("reconciliation blocks must be >= 1024 bits");
}

const std::vector<double>& Reconciler::rates() {
  static const std::vector<double> r{0.5, 0.6, 0.7, 0.75, 0.8, 0.85, 0.9};
  return r;
}

double Reconciler::pick_rate(double qber_estimate, double f_target) const {
  double need = f_target * distill::binary_entropy(std::clamp(qber_estimate, 0.0, 0.5));
  double best = rates().front();
  for (double r : rates())
    if (1.0 - r >= need && r > best) best = r;
  return best;
}

const LdpcCode& Reconciler::code_for_rate(double rate) {
  auto it = cache_.find(rate);
  if (it == cache_.end())
    it = cache_.emplace(rate, build_ldpc(block_len_, rate, seed_)).first;
  return it->second;
}

ReconcileResult Reconciler::reconcile_block(const std::vector<std::uint8_t>& alice,
                                            const std::vector<std::uint8_t>& bob,
                                            double qber_estimate, std::uint64_t hash_seed,
                                            double f_target) {
  if (static_cast<int>(alice.size()) != block_len_ ||
      static_cast<int>(bob.size()) != block_len_)
    throw std::invalid_argument("block size mismatch");

  ReconcileResult res;
  double start = pick_rate(qber_estimate, f_target);
  const auto& ladder = rates();
  int idx = static_cast<int>(std::find(ladder.begin(), ladder.end(), start) - ladder.begin());
  std::uint64_t alice_tag = key_hash64(alice, hash_seed);

  for (int i = idx; i >= 0; --i) {
    const LdpcCode& code = code_for_rate(ladder[static_cast<std::size_t>(i)]);
    ++res.attempts;
    res.leak_ec += code.syndrome_bits();
    auto sa = ldpc_syndrome(code, alice);
    auto sb = ldpc_syndrome(code, bob);
    std::vector<std::uint8_t> diff(sa.size());
    for (std::size_t k = 0; k < sa.size(); ++k) diff[k] = sa[k] ^ sb[k];
    std::vector<std::uint8_t> err;
    if (!ldpc_decode_syndrome(code, diff, qber_estimate, err)) continue;
    std::vector<std::uint8_t> candidate(bob.size());
    for (std::size_t k = 0; k < bob.size(); ++k) candidate[k] = bob[k] ^ err[k];
    if (key_hash64(candidate, hash_seed) != alice_tag) continue;
    res.key = std::move(candidate);
    res.verified = true;
    res.rate_used = ladder[static_cast<std::size_t>(i)];
    return res;
  }
  return res;  // discarded; leak stands
}

}  // namespace airqkd::ldpc

#pragma once

#include <cstdint>
#include <map>
#include <vector>

namespace airqkd::ldpc {

// Regular-column-weight-3 LDPC codes built by seeded progressive edge
// growth, used for syndrome-based key reconciliation: Alice discloses the
// syndrome of her block, Bob decodes the error pattern between the two
// blocks with belief propagation and verifies the result with a seeded
// 64-bit hash exchange.

struct LdpcCode {
  int n = 0;
  int n_checks = 0;
  double rate = 0.0;
  // CSR layout; edges grouped by check in check_var, var_edge maps each
  // variable to its edge slots.
  std::vector<int> check_offset;
  std::vector<int> check_var;
  std::vector<int> var_offset;
  std::vector<int> var_edge;
  std::size_t syndrome_bits() const { return static_cast<std::size_t>(n_checks); }
};

LdpcCode build_ldpc(int n, double rate, std::uint64_t seed);

std::vector<std::uint8_t> ldpc_syndrome(const LdpcCode& code,
                                        const std::vector<std::uint8_t>& bits);

// Recover the error pattern e with H e = syndrome, assuming an i.i.d.
// bit-flip prior p. Layered sum-product belief propagation, at most
// max_iters sweeps. Returns true when the syndrome is satisfied.
bool ldpc_decode_syndrome(const LdpcCode& code, const std::vector<std::uint8_t>& syndrome,
                          double p, std::vector<std::uint8_t>& error_out,
                          int max_iters = 100);

std::uint64_t key_hash64(const std::vector<std::uint8_t>& bits, std::uint64_t seed);

struct ReconcileResult {
  std::vector<std::uint8_t> key;  // Bob's corrected block (= Alice's on success)
  std::size_t leak_ec = 0;        // syndrome bits disclosed, retries included
  bool verified = false;
  double rate_used = 0.0;
  int attempts = 0;
};

class Reconciler {
 public:
  explicit Reconciler(int block_len = 4096, std::uint64_t seed = 0x41d9);

  static const std::vector<double>& rates();  // ascending {0.5 .. 0.9}

  // Largest rate whose redundancy covers f_target * h2(qber); clamps to the
  // lowest rung when none does.
  double pick_rate(double qber_estimate, double f_target = 1.25) const;

  const LdpcCode& code_for_rate(double rate);

  ReconcileResult reconcile_block(const std::vector<std::uint8_t>& alice,
                                  const std::vector<std::uint8_t>& bob,
                                  double qber_estimate, std::uint64_t hash_seed,
                                  double f_target = 1.25);

  int block_len() const { return block_len_; }

 private:
  int block_len_;
  std::uint64_t seed_;
  std::map<double, LdpcCode> cache_;
};

}  // namespace airqkd::ldpc

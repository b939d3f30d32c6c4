#include "airqkd/toeplitz.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

#include "airqkd/constants.hpp"

namespace airqkd::toeplitz {

namespace {

using cd = std::complex<double>;

void fft(std::vector<cd>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? -1.0 : 1.0);
    cd wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cd w(1.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        cd u = a[i + j];
        cd v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= static_cast<double>(n);
}

std::size_t next_pow2(std::size_t v) {
  std::size_t p = 1;
  while (p < v) p <<= 1;
  return p;
}

// The Toeplitz product is a linear convolution of the key with the seed
// rearranged so that out[i] = conv(key, arranged)[i + n - 1]:
// arranged[d + n - 1] = seed[d] for d >= 0 and seed[m - 1 - d] for d < 0,
// where d = i - j.
std::vector<std::uint8_t> arrange_seed(std::size_t n, std::size_t m,
                                       const std::vector<std::uint8_t>& seed) {
  std::vector<std::uint8_t> a(n + m - 1);
  for (std::size_t u = 0; u < a.size(); ++u) {
    std::ptrdiff_t d = static_cast<std::ptrdiff_t>(u) - static_cast<std::ptrdiff_t>(n - 1);
    a[u] = d >= 0 ? seed[static_cast<std::size_t>(d)]
                  : seed[m - 1 + static_cast<std::size_t>(-d)];
  }
  return a;
}

std::vector<std::uint8_t> amplify_direct(const std::vector<std::uint8_t>& key, std::size_t m,
                                         const std::vector<std::uint8_t>& arranged) {
  const std::size_t n = key.size();
  std::vector<std::uint8_t> out(m, 0);
  for (std::size_t j = 0; j < n; ++j) {
    if (!key[j]) continue;
    // out[i] ^= arranged[i + n - 1 - j]
    const std::uint8_t* src = arranged.data() + (n - 1 - j);
    for (std::size_t i = 0; i < m; ++i) out[i] ^= src[i];
  }
  return out;
}

std::vector<std::uint8_t> amplify_fft(const std::vector<std::uint8_t>& key, std::size_t m,
                                      const std::vector<std::uint8_t>& arranged) {
  const std::size_t n = key.size();
  const std::size_t block = 1u << 17;
  const std::size_t fft_len = next_pow2(2 * block);
  const std::size_t out_lo = n - 1;           // first needed convolution index
  const std::size_t out_hi = n - 1 + m;       // one past the last

  const std::size_t n_kb = (n + block - 1) / block;
  const std::size_t n_ab = (arranged.size() + block - 1) / block;

  // Cache the seed-side spectra; key-side spectra are computed per block.
  std::vector<std::vector<cd>> a_spec(n_ab);
  for (std::size_t bj = 0; bj < n_ab; ++bj) {
    a_spec[bj].assign(fft_len, cd(0.0));
    std::size_t lo = bj * block;
    std::size_t hi = std::min(arranged.size(), lo + block);
    for (std::size_t u = lo; u < hi; ++u) a_spec[bj][u - lo] = cd(arranged[u]);
    fft(a_spec[bj], false);
  }

  std::vector<std::uint32_t> acc(m, 0);
  std::vector<cd> k_spec(fft_len), prod(fft_len);
  for (std::size_t bi = 0; bi < n_kb; ++bi) {
    std::size_t klo = bi * block;
    std::size_t khi = std::min(n, klo + block);
    std::fill(k_spec.begin(), k_spec.end(), cd(0.0));
    for (std::size_t j = klo; j < khi; ++j) k_spec[j - klo] = cd(key[j]);
    fft(k_spec, false);
    for (std::size_t bj = 0; bj < n_ab; ++bj) {
      std::size_t base = klo + bj * block;  // conv index of the pair's first tap
      if (base >= out_hi || base + 2 * block - 1 < out_lo) continue;
      for (std::size_t u = 0; u < fft_len; ++u) prod[u] = k_spec[u] * a_spec[bj][u];
      fft(prod, true);
      std::size_t lo = std::max(base, out_lo);
      std::size_t hi = std::min(base + 2 * block - 1, out_hi);
      for (std::size_t idx = lo; idx < hi; ++idx) {
        long long v = std::llround(prod[idx - base].real());
        acc[idx - out_lo] += static_cast<std::uint32_t>(v);
      }
    }
  }

  std::vector<std::uint8_t> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = static_cast<std::uint8_t>(acc[i] & 1u);
  return out;
}

}  // namespace

std::vector<std::uint8_t> privacy_amplify(const std::vector<std::uint8_t>& key, std::size_t m,
                                          const std::vector<std::uint8_t>& seed, Method method) {
  const std::size_t n = key.size();
  if (m > n) throw std::invalid_argument("output cannot exceed input length");
  if (m == 0) return {};
  if (seed.size() != n + m - 1)
    throw std::invalid_argument("seed must hold exactly n + m - 1 bits");

  auto arranged = arrange_seed(n, m, seed);
  if (method == Method::direct) return amplify_direct(key, m, arranged);
  if (method == Method::fft) return amplify_fft(key, m, arranged);
  const double cost = static_cast<double>(n) * static_cast<double>(m);
  return cost <= static_cast<double>(1u << 26) ? amplify_direct(key, m, arranged)
                                               : amplify_fft(key, m, arranged);
}

}  // namespace airqkd::toeplitz

#pragma once

#include <cstdint>
#include <vector>

namespace airqkd::toeplitz {

// Two-universal hashing with an m x n Toeplitz matrix T over GF(2).
// Indexing convention: T[i][j] = seed[i - j] when i >= j, otherwise
// seed[m - 1 + (j - i)]; the first column is seed[0..m) top to bottom and
// the first row continues through seed[m - 1 ..] left to right.
// The seed must hold exactly n + m - 1 bits.

enum class Method { automatic, direct, fft };

std::vector<std::uint8_t> privacy_amplify(const std::vector<std::uint8_t>& key,
                                          std::size_t m,
                                          const std::vector<std::uint8_t>& seed,
                                          Method method = Method::automatic);

}  // namespace airqkd::toeplitz

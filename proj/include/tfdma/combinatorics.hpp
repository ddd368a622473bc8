#pragma once

#include <cstdint>
#include <limits>

#include "tfdma/errors.hpp"

namespace tfdma {

// Exact binomial coefficient in 64 bits. Intermediate products run in unsigned
// __int128 so n,k pairs whose result fits uint64 never overflow on the way
// (largest needed here: C(79,15) = 7.72e15).
inline std::uint64_t binom_u64(int n, int k) {
    if (n < 0 || k < 0) throw invalid_input("binom_u64: negative argument");
    if (k > n) return 0;
    if (k > n - k) k = n - k;
    unsigned __int128 acc = 1;
    for (int i = 1; i <= k; ++i) {
        acc = acc * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
        if (acc > std::numeric_limits<std::uint64_t>::max())
            throw invalid_input("binom_u64: result exceeds 64 bits");
    }
    return static_cast<std::uint64_t>(acc);
}

// Number of ordered nonnegative integer C-tuples summing to W: C(W+C-1, C-1).
inline std::uint64_t count_compositions(int w_tot, int channels) {
    if (w_tot < 0 || channels < 1) throw invalid_input("count_compositions: bad arguments");
    return binom_u64(w_tot + channels - 1, channels - 1);
}

// Round-half-up of the integer ratio a/b (b > 0), in exact integer arithmetic.
inline int round_half_up_ratio(int a, int b) {
    if (b <= 0) throw invalid_input("round_half_up_ratio: nonpositive denominator");
    return (2 * a + b) / (2 * b);
}

}  // namespace tfdma

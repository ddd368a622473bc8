#pragma once

#include <cstdint>

namespace tfdma {

// Deterministic 64-bit generator (splitmix64). Hand-rolled so that streams are
// bit-stable across standard libraries; std::uniform_real_distribution is
// implementation-defined and would break byte-identical reruns.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53 random mantissa bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    bool bernoulli(double p) { return next_double() < p; }

    // Uniform integer in [0, n). Modulo bias is < 2^-53 for the n used here.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // Independent per-replication seed derived from a master seed.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        Rng r(seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
        r.next_u64();
        return r.next_u64();
    }

  private:
    std::uint64_t state_;
};

}  // namespace tfdma

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tfdma/combinatorics.hpp"
#include "tfdma/errors.hpp"
#include "tfdma/rng.hpp"

namespace tfdma {

// Ordered occupancy vector (W_1, ..., W_C) with its enumeration index.
struct Composition {
    std::vector<int> counts;
    std::uint64_t index = 0;

    int total() const {
        int t = 0;
        for (int v : counts) t += v;
        return t;
    }
};

// All ordered nonnegative C-tuples summing to w_tot, lexicographic by leading
// coordinate. Length is always C(w_tot + C - 1, C - 1).
inline std::vector<Composition> enumerate_compositions(int w_tot, int channels) {
    if (w_tot < 0 || channels < 1) throw invalid_input("enumerate_compositions: bad arguments");
    const std::uint64_t n = count_compositions(w_tot, channels);
    std::vector<Composition> out;
    out.reserve(n);
    std::vector<int> cur(channels, 0);
    std::uint64_t idx = 0;
    // counts[0..channels-2] scan lexicographically; the last entry absorbs the rest
    auto rec = [&](auto&& self, int pos, int remaining) -> void {
        if (pos == channels - 1) {
            cur[pos] = remaining;
            out.push_back({cur, idx++});
            return;
        }
        for (int v = 0; v <= remaining; ++v) {
            cur[pos] = v;
            self(self, pos + 1, remaining - v);
        }
    };
    rec(rec, 0, w_tot);
    return out;
}

enum class ProbabilityMode {
    AsPrinted,         // sequential per-stage binomial, success probability 1/C at every stage
    ExactMultinomial,  // W_tot! / prod(W_c!) * C^-W_tot
};

inline const char* to_string(ProbabilityMode m) {
    return m == ProbabilityMode::AsPrinted ? "as-printed" : "multinomial";
}

// Probability that uniform random channel assignment of W_tot nodes produces
// this composition. The two modes coincide for C = 2 and differ for C > 2.
inline double composition_probability(const Composition& comp, ProbabilityMode mode) {
    const int C = static_cast<int>(comp.counts.size());
    if (C < 1) throw invalid_input("composition_probability: empty composition");
    for (int v : comp.counts)
        if (v < 0) throw invalid_input("composition_probability: negative count");
    const int w_tot = comp.total();
    if (C == 1) return 1.0;

    if (mode == ProbabilityMode::AsPrinted) {
        // Channel c draws W_c successes out of the nodes still unplaced, each
        // success with probability 1/C regardless of how many channels remain.
        double p = 1.0;
        int remaining = w_tot;
        for (int c = 0; c < C - 1; ++c) {
            const int wc = comp.counts[c];
            p *= static_cast<double>(binom_u64(remaining, wc)) *
                 std::pow(static_cast<double>(C - 1), remaining - wc) /
                 std::pow(static_cast<double>(C), remaining);
            remaining -= wc;
        }
        return p;
    }

    // Exact multinomial: coefficient as a product of binomials over prefix
    // sums (exact in 64 bits through W_tot = 20, log-space beyond).
    bool exact_ok = true;
    unsigned __int128 coef = 1;
    int prefix = 0;
    for (int c = 0; c < C; ++c) {
        prefix += comp.counts[c];
        std::uint64_t b;
        try {
            b = binom_u64(prefix, comp.counts[c]);
        } catch (const invalid_input&) {
            exact_ok = false;
            break;
        }
        coef *= b;
        if (coef > static_cast<unsigned __int128>(1) << 100) {
            exact_ok = false;
            break;
        }
    }
    if (exact_ok)
        return static_cast<double>(coef) * std::pow(static_cast<double>(C), -w_tot);
    double logp = -static_cast<double>(w_tot) * std::log(static_cast<double>(C)) +
                  std::lgamma(w_tot + 1.0);
    for (int v : comp.counts) logp -= std::lgamma(v + 1.0);
    return std::exp(logp);
}

// Worst deviation from the rounded per-channel average.
inline int imbalance(const Composition& comp, int w_tot, int channels) {
    if (channels < 1) throw invalid_input("imbalance: channels must be >= 1");
    if (static_cast<int>(comp.counts.size()) != channels)
        throw invalid_input("imbalance: length mismatch");
    if (comp.total() != w_tot) throw invalid_input("imbalance: counts do not sum to w_tot");
    const int avg = round_half_up_ratio(w_tot, channels);
    int worst = 0;
    for (int v : comp.counts) worst = std::max(worst, std::abs(v - avg));
    return worst;
}

struct DelayParams {
    int w_tot = 16;
    int channels = 8;
    double period_T = 0.25;
    double p_sw_0 = 0.33;
    double beta = 1.25;
    long Z = 60;
    double k_ss = 6.0;  // settling periods after the last departure

    void validate() const {
        if (w_tot < 0 || channels < 1) throw invalid_input("DelayParams: bad sizes");
        if (!(period_T > 0.0) || !std::isfinite(period_T))
            throw invalid_input("DelayParams: period_T must be positive");
        if (!(p_sw_0 > 0.0 && p_sw_0 <= 1.0)) throw invalid_input("DelayParams: p_sw_0 in (0,1]");
        if (!(beta > 1.0)) throw invalid_input("DelayParams: beta must exceed 1");
        if (Z < 1) throw invalid_input("DelayParams: Z must be >= 1");
        if (!(k_ss >= 0.0)) throw invalid_input("DelayParams: k_ss must be >= 0");
    }
};

// Expected periods until the k-th departure from the surplus channel, counted
// from the (k-1)-th. Before departure k the channel holds
// W_diff + avg - (k-1) nodes (avg = round-half-up of W_tot/channels), each
// attempting per period with probability min(beta^(k-1) p_0, 1); a forced
// attempt caps the wait at Z. Closed form of the truncated geometric mean:
// (1 - q^Z) / (1 - q) with q the per-period no-attempt probability.
inline double departure_delay(int k, int w_diff, const DelayParams& p) {
    p.validate();
    if (k < 1 || k > w_diff) throw invalid_input("departure_delay: need 1 <= k <= w_diff");
    const double p_eff = std::min(std::pow(p.beta, k - 1) * p.p_sw_0, 1.0);
    const int waiting = w_diff + round_half_up_ratio(p.w_tot, p.channels) - k + 1;
    if (waiting < 1) throw invalid_input("departure_delay: no nodes left to attempt");
    const double q = std::pow(1.0 - p_eff, waiting);
    if (q >= 1.0) return static_cast<double>(p.Z);
    if (q <= 0.0) return 1.0;
    return (1.0 - std::pow(q, static_cast<double>(p.Z))) / (1.0 - q);
}

struct PerComposition {
    Composition comp;
    double probability = 0.0;
    int w_diff = 0;
    double d_periods = 0.0;  // sum over departures of (delay + 2 switch-mode periods)
};

struct DelayEstimate {
    double total_seconds = 0.0;
    double expected_periods = 0.0;  // probability-weighted switching periods, before k_ss
    double probability_sum = 0.0;   // normalization of the mode actually used
    ProbabilityMode mode = ProbabilityMode::ExactMultinomial;
    std::vector<PerComposition> per_composition;
};

// Expected time to steady state from a uniformly random initial assignment:
// T * (sum_i p(i) * sum_{k=1..W_diff(i)} (d_k + 2) + k_ss). Enumeration is
// exact and refuses (rather than truncates) above composition_limit.
inline DelayEstimate expected_delay(const DelayParams& p, ProbabilityMode mode,
                                    std::uint64_t composition_limit = 10'000'000,
                                    bool keep_per_composition = true) {
    p.validate();
    const std::uint64_t n = count_compositions(p.w_tot, p.channels);
    if (n > composition_limit)
        throw size_limit_exceeded("expected_delay: " + std::to_string(n) +
                                  " compositions exceed limit " +
                                  std::to_string(composition_limit));

    DelayEstimate est;
    est.mode = mode;
    std::vector<Composition> comps = enumerate_compositions(p.w_tot, p.channels);
    if (keep_per_composition) est.per_composition.reserve(comps.size());

    // Kahan accumulation keeps the quarter-million-term sums reproducible to
    // the last bit regardless of future reordering temptations.
    double sum_p = 0.0, sum_p_err = 0.0;
    double sum_d = 0.0, sum_d_err = 0.0;
    auto kahan = [](double& s, double& e, double x) {
        const double y = x - e;
        const double t = s + y;
        e = (t - s) - y;
        s = t;
    };

    for (auto& comp : comps) {
        const double prob = composition_probability(comp, mode);
        const int w_diff = imbalance(comp, p.w_tot, p.channels);
        double d_periods = 0.0;
        for (int k = 1; k <= w_diff; ++k) d_periods += departure_delay(k, w_diff, p) + 2.0;
        kahan(sum_p, sum_p_err, prob);
        kahan(sum_d, sum_d_err, prob * d_periods);
        if (keep_per_composition)
            est.per_composition.push_back({std::move(comp), prob, w_diff, d_periods});
    }
    est.probability_sum = sum_p;
    est.expected_periods = sum_d;
    est.total_seconds = p.period_T * (sum_d + p.k_ss);
    return est;
}

// Monte Carlo mean of the first-attempt period: n_waiting nodes each attempt
// per period with probability p, forced at period Z. Independent check of the
// closed form above.
inline double monte_carlo_first_attempt(int n_waiting, double p, long Z, long n_trials,
                                        std::uint64_t seed) {
    if (n_waiting < 1 || Z < 1 || n_trials < 1)
        throw invalid_input("monte_carlo_first_attempt: bad arguments");
    if (!(p >= 0.0 && p <= 1.0)) throw invalid_input("monte_carlo_first_attempt: p in [0,1]");
    Rng rng(seed);
    double total = 0.0;
    for (long t = 0; t < n_trials; ++t) {
        long z = 1;
        for (; z < Z; ++z) {
            bool any = false;
            for (int i = 0; i < n_waiting; ++i)
                if (rng.bernoulli(p)) any = true;  // all nodes draw; keeps the stream aligned
            if (any) break;
        }
        total += static_cast<double>(z);
    }
    return total / static_cast<double>(n_trials);
}

}  // namespace tfdma

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "tfdma/errors.hpp"
#include "tfdma/rng.hpp"

namespace tfdma {

struct DesyncParams {
    double period_T = 0.25;  // beacon period in seconds
    double alpha = 0.95;     // phase-correction gain, must lie in (0,1)
    double q_ss = 0.02;      // steady-state tolerance as a fraction of period_T

    void validate() const {
        if (!(period_T > 0.0) || !std::isfinite(period_T))
            throw invalid_input("DesyncParams: period_T must be positive and finite");
        if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("DesyncParams: alpha must be in (0,1)");
        if (!(q_ss > 0.0 && q_ss < 1.0)) throw invalid_input("DesyncParams: q_ss must be in (0,1)");
    }
};

// Most recent observed firings of the cyclically previous neighbour, self, and
// next neighbour. Neighbours are whoever fired immediately before/after the
// node's own beacon, so the struct is meaningful even mid-convergence.
struct PhaseNeighborhood {
    double t_prev;
    double t_curr;
    double t_next;
};

// Reactive listening update: the node re-centres its next firing between its
// phase neighbours, evaluated immediately after hearing t_next.
inline double next_fire_time(const PhaseNeighborhood& nb, const DesyncParams& p) {
    p.validate();
    if (!std::isfinite(nb.t_prev) || !std::isfinite(nb.t_curr) || !std::isfinite(nb.t_next))
        throw invalid_input("next_fire_time: non-finite neighborhood");
    return p.period_T + (1.0 - p.alpha) * nb.t_curr + p.alpha * 0.5 * (nb.t_prev + nb.t_next);
}

struct BeaconSchedule {
    int node_id = 0;
    std::vector<double> fire_times;  // strictly increasing
};

// A node is at steady state when its latest inter-beacon gap deviates from the
// period by less than q_ss * T (strict).
inline bool is_steady_state(const BeaconSchedule& s, const DesyncParams& p) {
    p.validate();
    const auto n = s.fire_times.size();
    if (n < 2) throw insufficient_history("is_steady_state: need at least two firings");
    const double gap = s.fire_times[n - 1] - s.fire_times[n - 2];
    return std::abs(gap - p.period_T) < p.q_ss * p.period_T;
}

// Channel-level test at period k: every schedule must hold gap k within
// tolerance in the same period.
inline bool channel_steady_at(const std::vector<BeaconSchedule>& schedules, std::size_t k,
                              const DesyncParams& p) {
    p.validate();
    if (k < 1) throw invalid_input("channel_steady_at: period index must be >= 1");
    for (const auto& s : schedules) {
        if (s.fire_times.size() <= k)
            throw insufficient_history("channel_steady_at: schedule shorter than requested period");
        const double gap = s.fire_times[k] - s.fire_times[k - 1];
        if (!(std::abs(gap - p.period_T) < p.q_ss * p.period_T)) return false;
    }
    return true;
}

struct DesyncRunResult {
    bool converged = false;
    long periods = -1;          // first period index at which the channel-level test holds
    long periods_simulated = 0; // highest completed period index
    std::vector<BeaconSchedule> schedules;
};

// Pure single-channel run: n nodes, i.i.d. uniform initial phases in [0, T),
// lossless medium, zero delays. Each node tentatively schedules t + T at its
// own firing and revises via the reactive update when it hears the first
// subsequent beacon (its next neighbour); nodes with no history yet keep the
// tentative time. extra_periods continues the run beyond detection so
// persistence can be checked.
inline DesyncRunResult run_single_channel(int n_nodes, const DesyncParams& p, std::uint64_t seed,
                                          long cap = 1000, long extra_periods = 0) {
    p.validate();
    if (n_nodes < 1) throw invalid_input("run_single_channel: need at least one node");
    if (cap < 1) throw invalid_input("run_single_channel: cap must be >= 1");

    const double T = p.period_T;
    const int n = n_nodes;
    Rng rng(seed);

    std::vector<double> next_fire(n), last_fire(n), prev_snap(n), last_heard(n);
    std::vector<char> awaiting(n, 0);
    const double none = std::numeric_limits<double>::quiet_NaN();
    for (int i = 0; i < n; ++i) {
        next_fire[i] = rng.uniform(0.0, T);
        last_fire[i] = prev_snap[i] = last_heard[i] = none;
    }

    DesyncRunResult out;
    out.schedules.resize(n);
    for (int i = 0; i < n; ++i) out.schedules[i].node_id = i;

    // pass_count[k] = nodes whose gap k met tolerance; seen_count[k] = nodes with gap k recorded
    std::vector<int> pass_count, seen_count;
    long ss_period = -1;
    long stop_period = -1;  // once converged, run until this period completes

    const long max_fires = (cap + extra_periods + 2) * static_cast<long>(n) + n;
    for (long fired = 0; fired < max_fires; ++fired) {
        int who = 0;
        for (int i = 1; i < n; ++i)  // earliest next firing, ties to the lower id
            if (next_fire[i] < next_fire[who]) who = i;
        const double t = next_fire[who];

        auto& sched = out.schedules[who].fire_times;
        const long k = static_cast<long>(sched.size());  // period index of this firing
        if (k > cap + extra_periods) break;
        sched.push_back(t);
        prev_snap[who] = last_heard[who];
        last_fire[who] = t;
        awaiting[who] = 1;
        next_fire[who] = t + T;  // tentative; replaced if a neighbour is heard

        if (k >= 1) {
            const double gap = sched[k] - sched[k - 1];
            const bool ok = std::abs(gap - T) < p.q_ss * T;
            if (static_cast<long>(pass_count.size()) <= k) {
                pass_count.resize(k + 1, 0);
                seen_count.resize(k + 1, 0);
            }
            seen_count[k] += 1;
            if (ok) pass_count[k] += 1;
            if (seen_count[k] == n) {
                out.periods_simulated = k;
                if (ss_period < 0 && pass_count[k] == n) {
                    ss_period = k;
                    stop_period = k + extra_periods;
                }
                if (ss_period >= 0 && k >= stop_period) break;
                if (ss_period < 0 && k >= cap) break;
            }
        }

        // Broadcast: everyone else hears the beacon at t.
        for (int m = 0; m < n; ++m) {
            if (m == who) continue;
            last_heard[m] = t;
            if (awaiting[m]) {
                awaiting[m] = 0;
                if (std::isfinite(prev_snap[m]) && std::isfinite(last_fire[m])) {
                    const double revised =
                        next_fire_time({prev_snap[m], last_fire[m], t}, p);
                    // the update never reorders the firing sequence
                    if (!(revised > t))
                        throw std::logic_error("run_single_channel: ordering violated by update");
                    next_fire[m] = revised;
                }
            }
        }
    }

    out.converged = ss_period >= 0;
    out.periods = ss_period;
    return out;
}

// First period index at which all nodes satisfy the steady-state test
// simultaneously; converged == false reports non-convergence within cap.
inline DesyncRunResult periods_to_steady_state(int n_nodes, const DesyncParams& p,
                                               std::uint64_t seed, long cap = 1000) {
    return run_single_channel(n_nodes, p, seed, cap, 0);
}

}  // namespace tfdma

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "tfdma/engine.hpp"
#include "tfdma/io.hpp"

using namespace tfdma;
using Catch::Matchers::WithinAbs;

namespace {

SimConfig make_config(int nodes, int channels, std::uint64_t seed) {
    SimConfig cfg;
    cfg.protocol.n_channels_C = channels;
    cfg.n_nodes = nodes;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("identical configurations replay byte-identically") {
    const SimConfig cfg = make_config(16, 4, 7);
    const RunResult a = run(cfg);
    const RunResult b = run(cfg);

    CHECK(trace_to_csv(a.trace) == trace_to_csv(b.trace));
    CHECK(a.summary.converged == b.summary.converged);
    CHECK(a.summary.convergence_time == b.summary.convergence_time);
    CHECK(a.summary.final_occupancy == b.summary.final_occupancy);
    CHECK(a.summary.switch_attempts == b.summary.switch_attempts);
    CHECK(a.summary.returns == b.summary.returns);

    SimConfig other = cfg;
    other.seed = 8;
    CHECK(trace_to_csv(run(other).trace) != trace_to_csv(a.trace));
}

TEST_CASE("node count is conserved in the final occupancy") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 17ull, 99ull}) {
        const RunResult r = run(make_config(16, 8, seed));
        const int total = std::accumulate(r.summary.final_occupancy.begin(),
                                          r.summary.final_occupancy.end(), 0);
        CHECK(total == 16);
        CHECK(r.summary.final_occupancy.size() == 8);
    }
}

TEST_CASE("single-channel runs never emit switching traffic") {
    const RunResult r = run(make_config(4, 1, 5));
    REQUIRE(r.summary.converged);
    CHECK(r.summary.switch_attempts == 0);
    CHECK(r.summary.returns == 0);
    for (const auto& e : r.trace.events) {
        CHECK(e.event != EventKind::SendSwitch);
        CHECK(e.event != EventKind::SendReturn);
        CHECK(e.event != EventKind::Join);
        CHECK(e.event != EventKind::Freeze);
    }
    REQUIRE(r.summary.final_occupancy.size() == 1);
    CHECK(r.summary.final_occupancy[0] == 4);
}

TEST_CASE("attempts resolve one period later, as a join or a return") {
    const RunResult r = run(make_config(16, 8, 11));
    const double T = r.trace.period_T;

    std::map<int, double> last_switch;  // node -> time of its outstanding attempt
    std::map<int, long> switches, resolutions;
    for (const auto& e : r.trace.events) {
        if (e.event == EventKind::SendSwitch) {
            CHECK(last_switch.find(e.node) == last_switch.end());
            last_switch[e.node] = e.time_s;
            switches[e.node] += 1;
        } else if (e.event == EventKind::Join || e.event == EventKind::SendReturn) {
            auto it = last_switch.find(e.node);
            REQUIRE(it != last_switch.end());
            CHECK_THAT(e.time_s - it->second, WithinAbs(T, 1e-9));
            last_switch.erase(it);
            resolutions[e.node] += 1;
        }
    }
    // every attempt resolves except at most the one in flight at trace end
    for (const auto& [node, n_sw] : switches) {
        const long res = resolutions.count(node) ? resolutions[node] : 0;
        CHECK(n_sw - res >= 0);
        CHECK(n_sw - res <= 1);
    }
    CHECK(r.summary.switch_attempts >= r.summary.returns);
}

TEST_CASE("a channel hosts one attempt at a time") {
    // After an attempt the origin channel is frozen until the scout's return
    // (one period later) or the two-period timeout, so the next attempt on the
    // same channel cannot start before whichever comes first.
    const RunResult r = run(make_config(16, 4, 23));
    const double T = r.trace.period_T;

    std::map<int, std::vector<std::pair<double, EventKind>>> per_channel;
    for (const auto& e : r.trace.events) {
        if (e.event == EventKind::SendSwitch || e.event == EventKind::SendReturn)
            per_channel[e.channel].push_back({e.time_s, e.event});
    }
    for (const auto& [channel, seq] : per_channel) {
        for (std::size_t i = 0; i < seq.size(); ++i) {
            if (seq[i].second != EventKind::SendSwitch) continue;
            const double t = seq[i].first;
            double release = t + 2.0 * T;
            for (std::size_t j = i + 1; j < seq.size(); ++j) {
                if (seq[j].second == EventKind::SendReturn && seq[j].first <= release) {
                    release = seq[j].first;
                    break;
                }
            }
            for (std::size_t j = i + 1; j < seq.size(); ++j) {
                if (seq[j].second != EventKind::SendSwitch) continue;
                CHECK(seq[j].first >= release - 1e-9);
                break;
            }
        }
    }
}

TEST_CASE("a returning scout resumes its original slot two periods after departure") {
    const RunResult r = run(make_config(16, 8, 31));
    const double T = r.trace.period_T;

    long checked = 0;
    for (std::size_t i = 0; i < r.trace.events.size(); ++i) {
        const auto& e = r.trace.events[i];
        if (e.event != EventKind::SendReturn) continue;
        for (std::size_t j = i + 1; j < r.trace.events.size(); ++j) {
            const auto& f = r.trace.events[j];
            if (f.node != e.node || f.event != EventKind::FireBeacon) continue;
            CHECK_THAT(f.time_s - e.time_s, WithinAbs(T, 1e-9));
            checked += 1;
            break;
        }
    }
    CHECK(checked > 0);
}

TEST_CASE("airtime shares split each channel evenly at steady state") {
    SimConfig cfg = make_config(16, 8, 3);
    // a long stable window averages out the dropped trailing gap and the
    // slots donated to peers while the not-yet-decayed p_sw still probes
    cfg.stable_window_periods = 60;
    const RunResult r = run(cfg);
    REQUIRE(r.summary.converged);
    const auto& share = r.summary.per_node_airtime_share;
    REQUIRE(share.size() == 16);

    // 16 nodes over 8 channels: 2 per channel, so each node owns about half
    // its channel and the shares total one per channel.
    double total = 0.0;
    for (double s : share) {
        CHECK(s > 0.30);
        CHECK(s < 0.70);
        total += s;
    }
    CHECK_THAT(total, WithinAbs(8.0, 1e-6));
}

TEST_CASE("airtime_shares rejects bad windows and unconverged traces") {
    SimConfig cfg = make_config(16, 8, 3);
    const RunResult ok = run(cfg);
    REQUIRE(ok.summary.converged);
    const double t0 = ok.trace.convergence_time;
    const double t1 = ok.trace.end_time;

    CHECK_THROWS_AS(airtime_shares(ok.trace, t1, t0), invalid_input);
    CHECK_THROWS_AS(airtime_shares(ok.trace, t0 - 1.0, t1), not_at_steady_state);
    CHECK_THROWS_AS(airtime_shares(ok.trace, t0, t1 + 1.0), not_at_steady_state);

    cfg.max_time = 0.3;  // too short for any stable window
    const RunResult bad = run(cfg);
    REQUIRE_FALSE(bad.summary.converged);
    CHECK(bad.summary.per_node_airtime_share.empty());
    CHECK_THROWS_AS(airtime_shares(bad.trace, 0.0, 0.2), not_at_steady_state);
}

TEST_CASE("message loss drops roughly the configured fraction") {
    SimConfig cfg = make_config(8, 2, 41);
    cfg.message_loss_prob = 0.10;
    const RunResult r = run(cfg);

    REQUIRE(r.trace.messages_sent > 500);
    const double ratio = static_cast<double>(r.trace.messages_dropped) /
                         static_cast<double>(r.trace.messages_sent);
    CHECK_THAT(ratio, WithinAbs(0.10, 0.03));

    long drop_events = 0;
    for (const auto& e : r.trace.events)
        if (e.event == EventKind::DroppedMsg) drop_events += 1;
    CHECK(drop_events == r.trace.messages_dropped);
}

TEST_CASE("scripted arrivals and departures adjust the population") {
    SimConfig cfg = make_config(8, 2, 13);
    cfg.initial_counts = {4, 4};
    cfg.script.push_back({1.0, true, -1, 1});   // one node arrives on channel 1
    cfg.script.push_back({2.0, false, 0, 0});   // node 0 leaves
    const RunResult r = run(cfg);

    bool saw_arrive = false, saw_depart = false;
    for (const auto& e : r.trace.events) {
        if (e.event == EventKind::Arrive) {
            saw_arrive = true;
            CHECK(e.node == 8);
            CHECK(e.channel == 1);
            CHECK_THAT(e.time_s, WithinAbs(1.0, 1e-12));
        }
        if (e.event == EventKind::Depart) {
            saw_depart = true;
            CHECK(e.node == 0);
            CHECK_THAT(e.time_s, WithinAbs(2.0, 1e-12));
        }
    }
    CHECK(saw_arrive);
    CHECK(saw_depart);
    const int total = std::accumulate(r.summary.final_occupancy.begin(),
                                      r.summary.final_occupancy.end(), 0);
    CHECK(total == 8);
    CHECK(r.summary.converged);
}

TEST_CASE("initial_counts places nodes sequentially") {
    SimConfig cfg = make_config(4, 2, 9);
    cfg.initial_counts = {3, 1};
    const RunResult r = run(cfg);

    std::map<int, int> first_channel;
    for (const auto& e : r.trace.events) {
        if (e.event == EventKind::FireBeacon && !first_channel.count(e.node))
            first_channel[e.node] = e.channel;
    }
    CHECK(first_channel[0] == 1);
    CHECK(first_channel[1] == 1);
    CHECK(first_channel[2] == 1);
    CHECK(first_channel[3] == 2);
}

TEST_CASE("configuration validation rejects malformed inputs") {
    SimConfig cfg = make_config(16, 8, 1);
    CHECK_NOTHROW(cfg.validate());

    SimConfig c1 = cfg; c1.n_nodes = 0;
    CHECK_THROWS_AS(c1.validate(), invalid_input);
    SimConfig c2 = cfg; c2.max_time = 0.0;
    CHECK_THROWS_AS(c2.validate(), invalid_input);
    SimConfig c3 = cfg; c3.message_loss_prob = 1.0;
    CHECK_THROWS_AS(c3.validate(), invalid_input);
    SimConfig c4 = cfg; c4.message_loss_prob = -0.1;
    CHECK_THROWS_AS(c4.validate(), invalid_input);
    SimConfig c5 = cfg; c5.stable_window_periods = 0;
    CHECK_THROWS_AS(c5.validate(), invalid_input);
    SimConfig c6 = cfg; c6.initial_counts = {8, 8};  // wrong length for 8 channels
    CHECK_THROWS_AS(c6.validate(), invalid_input);
    SimConfig c7 = cfg; c7.initial_counts = {2, 2, 2, 2, 2, 2, 2, 1};  // sums to 15
    CHECK_THROWS_AS(c7.validate(), invalid_input);
    SimConfig c8 = cfg; c8.initial_counts = {4, 4, 4, 4, 2, 0, 0, -2};
    CHECK_THROWS_AS(c8.validate(), invalid_input);
    SimConfig c9 = cfg; c9.script.push_back({-1.0, true, -1, 0});
    CHECK_THROWS_AS(c9.validate(), invalid_input);
    SimConfig c10 = cfg; c10.script.push_back({1.0, false, -1, 0});
    CHECK_THROWS_AS(c10.validate(), invalid_input);
    SimConfig c11 = cfg; c11.script.push_back({1.0, true, -1, 9});
    CHECK_THROWS_AS(c11.validate(), invalid_input);
    SimConfig c12 = cfg; c12.protocol.beta = 1.0;
    CHECK_THROWS_AS(c12.validate(), invalid_input);
}

TEST_CASE("replication statistics are deterministic in the base seed") {
    const SimConfig base = make_config(8, 2, 101);
    const DistStats a = convergence_time_distribution(base, 6);
    const DistStats b = convergence_time_distribution(base, 6);

    CHECK(a.n_runs == 6);
    CHECK(a.n_converged == b.n_converged);
    CHECK(a.n_converged <= a.n_runs);
    CHECK(a.mean == b.mean);
    CHECK(a.p50 == b.p50);
    if (a.n_converged > 0) {
        CHECK(a.mean > 0.0);
        CHECK(a.min <= a.p10);
        CHECK(a.p10 <= a.p50);
        CHECK(a.p50 <= a.p90);
        CHECK(a.p90 <= a.max);
    }
    CHECK_THROWS_AS(convergence_time_distribution(base, 0), invalid_input);
}

TEST_CASE("balanced zero-loss runs converge and stay conserved") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        SimConfig cfg = make_config(16, 8, seed);
        cfg.initial_counts = {2, 2, 2, 2, 2, 2, 2, 2};
        const RunResult r = run(cfg);
        CHECK(r.summary.converged);
        const int total = std::accumulate(r.summary.final_occupancy.begin(),
                                          r.summary.final_occupancy.end(), 0);
        CHECK(total == 16);
    }
}

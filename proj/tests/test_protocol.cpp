#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "tfdma/protocol.hpp"

using namespace tfdma;
using Catch::Matchers::WithinAbs;

TEST_CASE("ProtocolParams validation") {
    ProtocolParams p;
    CHECK_NOTHROW(p.validate());

    ProtocolParams bad = p;
    bad.beta = 1.0;
    CHECK_THROWS_AS(bad.validate(), invalid_input);
    bad = p;
    bad.p_sw_initial = 0.0;
    CHECK_THROWS_AS(bad.validate(), invalid_input);
    bad = p;
    bad.p_sw_initial = 1.5;
    CHECK_THROWS_AS(bad.validate(), invalid_input);
    bad = p;
    bad.s_initial = 0;
    CHECK_THROWS_AS(bad.validate(), invalid_input);
    bad = p;
    bad.s_initial = 5;  // cap for C = 8 is 4
    CHECK_THROWS_AS(bad.validate(), invalid_input);
    bad = p;
    bad.Z = 0;
    CHECK_THROWS_AS(bad.validate(), invalid_input);
    bad = p;
    bad.n_channels_C = 0;
    CHECK_THROWS_AS(bad.validate(), invalid_input);
}

TEST_CASE("decide_switch_attempt: probability draw and forced attempt") {
    ProtocolParams params;
    Rng rng(99);
    ChannelLocalView v;

    v.p_sw = 0.0;
    v.periods_since_attempt = 0;
    for (int i = 0; i < 100; ++i) CHECK_FALSE(decide_switch_attempt(v, params, rng));

    v.periods_since_attempt = params.Z;  // forced attempt dominates even p = 0
    CHECK(decide_switch_attempt(v, params, rng));
    v.periods_since_attempt = params.Z + 5;
    CHECK(decide_switch_attempt(v, params, rng));

    v.p_sw = 1.0;
    v.periods_since_attempt = 0;
    for (int i = 0; i < 100; ++i) CHECK(decide_switch_attempt(v, params, rng));
}

TEST_CASE("decide_switch_attempt empirical rate 0.33 +- 0.02 over 10000 draws") {
    ProtocolParams params;
    Rng rng(12345);
    ChannelLocalView v;
    v.p_sw = 0.33;
    int hits = 0;
    for (int i = 0; i < 10000; ++i)
        if (decide_switch_attempt(v, params, rng)) hits += 1;
    const double rate = hits / 10000.0;
    CHECK_THAT(rate, WithinAbs(0.33, 0.02));
}

TEST_CASE("target_channel wraps cyclically in 1..C") {
    CHECK(target_channel(3, +2, 8) == 5);
    CHECK(target_channel(7, +3, 8) == 2);
    CHECK(target_channel(1, -1, 8) == 8);
    CHECK(target_channel(1, -4, 8) == 5);
    CHECK(target_channel(8, +4, 8) == 4);
    CHECK(target_channel(1, +1, 2) == 2);
    CHECK(target_channel(2, +1, 2) == 1);
    CHECK(target_channel(2, -1, 2) == 1);

    CHECK_THROWS_AS(target_channel(1, +1, 1), no_target);
    CHECK_THROWS_AS(target_channel(1, 0, 8), invalid_input);
    CHECK_THROWS_AS(target_channel(1, +5, 8), invalid_input);  // cap is 4
    CHECK_THROWS_AS(target_channel(0, +1, 8), invalid_input);
    CHECK_THROWS_AS(target_channel(9, +1, 8), invalid_input);
    CHECK_THROWS_AS(target_channel(1, +2, 2), invalid_input);  // cap is 1
}

TEST_CASE("evaluate_join admits only a strict improvement of 2") {
    CHECK(evaluate_join(5, 3));
    CHECK_FALSE(evaluate_join(5, 4));
    CHECK(evaluate_join(2, 0));
    CHECK_FALSE(evaluate_join(2, 1));
    CHECK_FALSE(evaluate_join(1, 0));
    CHECK(evaluate_join(4, 2));
    CHECK_THROWS_AS(evaluate_join(0, 0), invalid_input);
    CHECK_THROWS_AS(evaluate_join(3, -1), invalid_input);
}

TEST_CASE("update_switch_probability multiplies and clamps") {
    CHECK_THAT(update_switch_probability(0.33, false, 1.25), WithinAbs(0.4125, 1e-12));
    CHECK_THAT(update_switch_probability(0.9, false, 1.25), WithinAbs(1.0, 0.0));
    CHECK_THAT(update_switch_probability(0.4125, true, 1.25), WithinAbs(0.33, 1e-12));

    // success then failure restores the value exactly when no clamping occurs
    const double p0 = 0.25;  // dyadic, so * 1.25 / 1.25 round-trips bit-exactly
    CHECK(update_switch_probability(update_switch_probability(p0, false, 1.25), true, 1.25) == p0);

    CHECK_THROWS_AS(update_switch_probability(0.33, false, 1.0), invalid_input);
    CHECK_THROWS_AS(update_switch_probability(0.0, false, 1.25), invalid_input);
    CHECK_THROWS_AS(update_switch_probability(1.5, false, 1.25), invalid_input);
}

TEST_CASE("update_direction: flip on odd streak, grow on even, wrap at the cap") {
    // C = 8, cap = 4: failure schedule from +1 is -1, +2, -2, +3, -3, +4, -4, +1
    CHECK(update_direction(+1, true, 8, 1) == -1);
    CHECK(update_direction(-1, true, 8, 2) == +2);
    CHECK(update_direction(+2, true, 8, 3) == -2);
    CHECK(update_direction(-2, true, 8, 4) == +3);
    CHECK(update_direction(+3, true, 8, 5) == -3);
    CHECK(update_direction(-3, true, 8, 6) == +4);
    CHECK(update_direction(+4, true, 8, 7) == -4);
    CHECK(update_direction(-4, true, 8, 8) == +1);

    // success resets the search to the nearest neighbor
    CHECK(update_direction(-3, false, 8, 0) == +1);
    CHECK(update_direction(+2, false, 8, 6) == +1);
    CHECK(update_direction(+1, false, 2, 0) == +1);

    // C = 2, cap = 1: the schedule alternates between the two names of the
    // single other channel
    CHECK(update_direction(+1, true, 2, 1) == -1);
    CHECK(update_direction(-1, true, 2, 2) == +1);

    // odd C = 5, cap = 2
    CHECK(update_direction(+1, true, 5, 1) == -1);
    CHECK(update_direction(-1, true, 5, 2) == +2);
    CHECK(update_direction(+2, true, 5, 3) == -2);
    CHECK(update_direction(-2, true, 5, 4) == +1);

    CHECK_THROWS_AS(update_direction(+1, true, 1, 1), invalid_input);
    CHECK_THROWS_AS(update_direction(0, true, 8, 1), invalid_input);
    CHECK_THROWS_AS(update_direction(+5, true, 8, 1), invalid_input);
    CHECK_THROWS_AS(update_direction(+1, true, 8, -1), invalid_input);
}

TEST_CASE("failure schedule sweeps every other channel within 2*cap probes") {
    for (int C = 2; C <= 9; ++C) {
        const int cap = std::max(1, C / 2);
        int s = +1;
        int streak = 0;
        std::set<int> visited;
        for (int probe = 0; probe < 2 * cap; ++probe) {
            visited.insert(target_channel(1, s, C));
            streak += 1;
            s = update_direction(s, true, C, streak);
        }
        CHECK(static_cast<int>(visited.size()) == C - 1);
    }
}

namespace {

NodeState make_node(int id, int channel) {
    NodeState n;
    n.id = id;
    n.params = ProtocolParams{};
    n.view.channel_index = channel;
    n.view.p_sw = n.params.p_sw_initial;
    n.view.s_offset = n.params.s_initial;
    return n;
}

Message at(Message::Body body, int channel, double t) { return Message{std::move(body), channel, t}; }

}  // namespace

TEST_CASE("beacon updates the heard count and switch-mode knowledge") {
    NodeState n = make_node(0, 3);
    REQUIRE(n.view.w_heard == 1);

    n = on_message(n, at(Beacon{7, 5, false}, 3, 1.0));
    CHECK(n.view.w_heard == 5);
    CHECK_FALSE(n.view.switch_mode_active);
    CHECK(n.members.count(7) == 1);

    n = on_message(n, at(Beacon{8, 2, true}, 3, 1.1));
    CHECK(n.view.switch_mode_active);
    CHECK(n.last_flag_time == 1.1);
    // w_heard never drops below the node's own roster count
    CHECK(n.view.w_heard >= n.own_count());
}

TEST_CASE("switch message freezes the channel and resets the inactivity counter") {
    NodeState n = make_node(0, 2);
    n.view.periods_since_attempt = 17;

    n = on_message(n, at(SwitchMsg{4}, 2, 2.0));
    CHECK(n.mode == NodeMode::Frozen);
    CHECK(n.view.switch_mode_active);
    CHECK(n.view.periods_since_attempt == 0);
    CHECK(n.scouting_member == 4);
    CHECK(n.freeze_scout == 4);
    CHECK(n.freeze_started == 2.0);
}

TEST_CASE("return message ends switch mode with the collective failure update") {
    NodeState n = make_node(0, 2);
    n = on_message(n, at(SwitchMsg{4}, 2, 2.0));
    REQUIRE(n.mode == NodeMode::Frozen);
    const double p_before = n.view.p_sw;
    const int s_before = n.view.s_offset;

    n = on_message(n, at(ReturnMsg{4}, 2, 2.3));
    CHECK(n.mode == NodeMode::DesyncActive);
    CHECK_FALSE(n.view.switch_mode_active);
    CHECK_THAT(n.view.p_sw, WithinAbs(p_before / 1.25, 1e-12));
    CHECK(n.view.s_offset == update_direction(s_before, true, 8, 1));
    CHECK(n.view.fail_streak == 1);
    CHECK(n.scouting_member == -1);
    CHECK(n.members.count(4) == 1);  // the scout is back
}

TEST_CASE("return without a prior switch is ignored with a warning") {
    NodeState n = make_node(0, 2);
    const NodeState before = n;
    n = on_message(n, at(ReturnMsg{9}, 2, 1.0));
    CHECK(n.mode == before.mode);
    CHECK(n.view.p_sw == before.view.p_sw);
    CHECK(n.view.s_offset == before.view.s_offset);
    CHECK_FALSE(n.last_warning.empty());
}

TEST_CASE("switch-mode timeout applies the collective success update") {
    NodeState n = make_node(0, 2);
    n = on_message(n, at(Beacon{4, 2, false}, 2, 1.9));
    n = on_message(n, at(SwitchMsg{4}, 2, 2.0));
    n.view.s_offset = -3;
    n.view.fail_streak = 6;
    REQUIRE(n.mode == NodeMode::Frozen);
    REQUIRE(n.members.count(4) == 1);

    apply_switch_mode_timeout(n);
    CHECK(n.mode == NodeMode::DesyncActive);
    CHECK_FALSE(n.view.switch_mode_active);
    CHECK_THAT(n.view.p_sw, WithinAbs(0.33 * 1.25, 1e-12));
    CHECK(n.view.s_offset == +1);  // success resets the search direction
    CHECK(n.view.fail_streak == 0);
    CHECK(n.members.count(4) == 0);  // the scout joined elsewhere
    CHECK(n.scouting_member == -1);

    // no-op when not frozen
    NodeState idle = make_node(1, 2);
    const NodeState before = idle;
    apply_switch_mode_timeout(idle);
    CHECK(idle.mode == before.mode);
    CHECK(idle.view.p_sw == before.view.p_sw);
}

TEST_CASE("occupants witnessing the same exits keep identical copies") {
    NodeState a = make_node(0, 5);
    NodeState b = make_node(1, 5);

    // a failed attempt followed by a timed-out (successful) one, heard by both
    for (NodeState* n : {&a, &b}) {
        *n = on_message(*n, at(SwitchMsg{7}, 5, 1.00));
        *n = on_message(*n, at(ReturnMsg{7}, 5, 1.25));
        *n = on_message(*n, at(SwitchMsg{8}, 5, 2.00));
        apply_switch_mode_timeout(*n);
    }
    CHECK(a.view.p_sw == b.view.p_sw);
    CHECK(a.view.s_offset == b.view.s_offset);
    CHECK(a.view.fail_streak == b.view.fail_streak);
}

TEST_CASE("listening mode counts beacons and tracks switch-mode evidence") {
    NodeState n = make_node(0, 1);
    n.mode = NodeMode::Listening;
    n.origin_channel = 1;
    n.target = 2;
    const double T = n.params.desync.period_T;

    n = on_message(n, at(Beacon{10, 3, false}, 2, 1.00));
    n = on_message(n, at(Beacon{11, 3, false}, 2, 1.05));
    n = on_message(n, at(Beacon{10, 3, false}, 2, 1.25));
    CHECK(n.target_members.size() == 2);
    CHECK(n.target_max_w == 3);
    CHECK(n.target_beacon_times.size() == 3);
    CHECK_FALSE(n.target_in_switch_mode(1.3));

    // a flagged beacon speaks for one period
    n = on_message(n, at(Beacon{11, 3, true}, 2, 1.30));
    CHECK(n.target_in_switch_mode(1.31));
    CHECK(n.target_in_switch_mode(1.30 + T - 0.01));
    CHECK_FALSE(n.target_in_switch_mode(1.30 + T + 0.01));

    // a switch message speaks for two periods; a return ends it early but
    // hides the returning slot for one more period
    n = on_message(n, at(SwitchMsg{12}, 2, 1.40));
    CHECK(n.target_in_switch_mode(1.40 + 2.0 * T - 0.01));
    n = on_message(n, at(ReturnMsg{12}, 2, 1.50));
    CHECK(n.target_in_switch_mode(1.50 + T - 0.01));
    CHECK_FALSE(n.target_in_switch_mode(1.50 + T + 0.01));

    // listening state never touches the origin-channel copy
    CHECK(n.view.p_sw == 0.33);
    CHECK(n.view.channel_index == 1);
}

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "tfdma/desync.hpp"
#include "tfdma/errors.hpp"
#include "tfdma/rng.hpp"

namespace tfdma {

struct ProtocolParams {
    int n_channels_C = 8;
    double beta = 1.25;          // multiplicative switch-probability adaptation, > 1
    double p_sw_initial = 0.33;  // initial per-period switch probability
    int s_initial = +1;          // initial channel-hop offset
    long Z = 60;                 // periods of switching inactivity before a forced attempt
    DesyncParams desync{};

    int max_offset() const { return std::max(1, n_channels_C / 2); }

    void validate() const {
        desync.validate();
        if (n_channels_C < 1) throw invalid_input("ProtocolParams: n_channels_C must be >= 1");
        if (!(beta > 1.0)) throw invalid_input("ProtocolParams: beta must exceed 1");
        if (!(p_sw_initial > 0.0 && p_sw_initial <= 1.0))
            throw invalid_input("ProtocolParams: p_sw_initial must be in (0,1]");
        if (s_initial == 0 || std::abs(s_initial) > max_offset())
            throw invalid_input("ProtocolParams: s_initial out of range");
        if (Z < 1) throw invalid_input("ProtocolParams: Z must be >= 1");
    }
};

enum class NodeMode {
    DesyncActive,  // normal beaconing with reactive phase updates
    Frozen,        // channel in switch mode: repeat beacons verbatim every T
    Listening,     // silently counting beacons in the prospective channel
    Rejoining,     // back in a channel, first beacon not yet fired
};

inline const char* to_string(NodeMode m) {
    switch (m) {
        case NodeMode::DesyncActive: return "DESYNC_ACTIVE";
        case NodeMode::Frozen: return "FROZEN";
        case NodeMode::Listening: return "LISTENING";
        case NodeMode::Rejoining: return "REJOINING";
    }
    return "?";
}

// One node's local copy of the shared per-channel quantities. Copies are kept
// consistent across occupants by the switch-mode exit events they all witness.
struct ChannelLocalView {
    int channel_index = 1;           // 1-based
    int w_heard = 1;                 // nodes believed in this channel, >= 1 (counts self)
    bool switch_mode_active = false; // a switch attempt is in progress in this channel
    double p_sw = 0.33;
    int s_offset = +1;
    long periods_since_attempt = 0;  // own periods since switch activity was last seen here
    int fail_streak = 0;             // consecutive failed attempts at the current magnitude run
};

struct Beacon {
    int node_id = 0;
    int w_count = 1;          // sender's w_heard, lets one beacon reveal the occupancy
    bool switch_flag = false; // sender believes the channel is in switch mode
};
struct SwitchMsg {
    int node_id = 0;
};
struct ReturnMsg {
    int node_id = 0;
};

struct Message {
    using Body = std::variant<Beacon, SwitchMsg, ReturnMsg>;
    Body body;
    int channel = 1;        // stamped by the medium
    double timestamp = 0.0; // stamped by the medium
};

// True with probability view.p_sw; deterministically true once the node has
// seen Z own periods with no switch activity in its channel.
inline bool decide_switch_attempt(const ChannelLocalView& view, const ProtocolParams& params,
                                  Rng& rng) {
    params.validate();
    if (view.periods_since_attempt >= params.Z) return true;
    return rng.bernoulli(view.p_sw);
}

// Cyclic hop: channel c+s with 1-based wraparound. A lone channel has no target.
inline int target_channel(int current, int s_offset, int n_channels) {
    if (n_channels < 1) throw invalid_input("target_channel: n_channels must be >= 1");
    if (n_channels == 1) throw no_target("target_channel: single channel has no switch target");
    if (current < 1 || current > n_channels) throw invalid_input("target_channel: bad channel index");
    if (s_offset == 0 || std::abs(s_offset) > std::max(1, n_channels / 2))
        throw invalid_input("target_channel: offset out of range");
    int z = (current - 1 + s_offset) % n_channels;
    if (z < 0) z += n_channels;
    return z + 1;
}

// Join only strictly improves balance: the target must be smaller by at least 2
// (the mover leaves W_origin-1 behind and arrives as W_target+1).
inline bool evaluate_join(int w_origin, int w_target) {
    if (w_origin < 1 || w_target < 0) throw invalid_input("evaluate_join: bad occupancy counts");
    return w_target <= w_origin - 2;
}

// Multiplicative adaptation at switch-mode exit: no return heard means the
// attempt succeeded somewhere, so probe more (x beta, clamped to 1); a return
// means failure, back off (/ beta).
inline double update_switch_probability(double p_prev, bool returned, double beta) {
    if (!(beta > 1.0)) throw invalid_input("update_switch_probability: beta must exceed 1");
    if (!(p_prev > 0.0 && p_prev <= 1.0))
        throw invalid_input("update_switch_probability: p_prev must be in (0,1]");
    return returned ? p_prev / beta : std::min(p_prev * beta, 1.0);
}

// Probe-direction schedule. A failure flips the sign while the streak at the
// current magnitude is odd and grows the magnitude once both signs have
// failed, sweeping +1, -1, +2, -2, ... out to +-floor(C/2) before wrapping
// back to +1; the sweep therefore visits every channel. A success resets the
// search to the nearest neighbor (+1), which also snaps every occupant's
// local copy back to a common value.
inline int update_direction(int s_prev, bool returned, int n_channels, int fail_streak) {
    if (n_channels < 2) throw invalid_input("update_direction: need at least two channels");
    const int cap = std::max(1, n_channels / 2);
    if (s_prev == 0 || std::abs(s_prev) > cap) throw invalid_input("update_direction: bad s_prev");
    if (fail_streak < 0) throw invalid_input("update_direction: negative fail_streak");
    if (!returned) return +1;
    if (fail_streak % 2 == 1) return -s_prev;
    const int mag = std::abs(s_prev);
    return mag < cap ? mag + 1 : +1;
}

// Full per-node protocol state. Timing fields are maintained by the engine;
// everything message-driven lives in the transition below so it can be tested
// without an event loop.
struct NodeState {
    int id = 0;
    NodeMode mode = NodeMode::DesyncActive;
    ChannelLocalView view{};
    ProtocolParams params{};

    std::map<int, double> members;  // other occupants of the channel -> last heard time
    int scouting_member = -1;       // member away on an attempt (still counted), -1 if none
    double freeze_started = -1.0;
    int freeze_scout = -1;
    std::uint64_t freeze_epoch = 0;  // distinguishes successive freezes for timeout matching
    double last_flag_time = -1.0;    // latest switch_flag=true beacon heard

    // listening bookkeeping (valid while mode == Listening)
    int origin_channel = -1;
    int target = -1;
    int w_origin_snapshot = 0;
    double depart_time = -1.0;
    std::map<int, double> target_members;  // senders heard in the target -> last time
    std::vector<double> target_beacon_times;
    int target_max_w = 0;
    double target_switch_until = -1.0;  // switch-mode evidence horizon in the target
    double target_last_return = -1.0;   // a returned scout's slot is invisible for one period

    // Whether the target channel must be presumed in (or disturbed by) switch
    // mode at decision time t.
    bool target_in_switch_mode(double t) const {
        if (target_switch_until > t + 1e-12) return true;
        if (target_last_return >= 0.0 && t + 1e-12 < target_last_return + params.desync.period_T)
            return true;
        return false;
    }

    std::string last_warning;  // set by transitions that ignore a message

    int own_count() const { return static_cast<int>(members.size()) + 1; }
};

// Message-driven transition, mutating form. The engine guarantees the message
// was delivered on the channel the node is tuned to and that the node is not
// the sender.
inline void apply_message(NodeState& n, const Message& m) {
    if (n.mode == NodeMode::Listening) {
        // Counting beacons in the prospective channel. Switch-mode evidence is
        // horizoned: a flagged beacon speaks for one period, a switch message
        // for the full two-period window, and a return ends the window but
        // hides the returning node's slot for one more period.
        const double T = n.params.desync.period_T;
        if (const auto* b = std::get_if<Beacon>(&m.body)) {
            n.target_members[b->node_id] = m.timestamp;
            n.target_beacon_times.push_back(m.timestamp);
            n.target_max_w = std::max(n.target_max_w, b->w_count);
            if (b->switch_flag)
                n.target_switch_until = std::max(n.target_switch_until, m.timestamp + T);
        } else if (std::holds_alternative<SwitchMsg>(m.body)) {
            n.target_switch_until = std::max(n.target_switch_until, m.timestamp + 2.0 * T);
        } else if (std::holds_alternative<ReturnMsg>(m.body)) {
            n.target_switch_until = std::min(n.target_switch_until, m.timestamp);
            n.target_last_return = m.timestamp;
        }
        return;
    }

    if (const auto* b = std::get_if<Beacon>(&m.body)) {
        n.members[b->node_id] = m.timestamp;
        n.view.w_heard = std::max(n.own_count(), b->w_count);
        if (b->switch_flag) {
            n.last_flag_time = m.timestamp;
            n.view.switch_mode_active = true;
        }
        return;
    }

    if (const auto* s = std::get_if<SwitchMsg>(&m.body)) {
        n.members[s->node_id] = m.timestamp;
        n.scouting_member = s->node_id;
        n.view.periods_since_attempt = 0;
        n.view.switch_mode_active = true;
        if (n.mode != NodeMode::Frozen) {
            n.mode = NodeMode::Frozen;
            n.freeze_started = m.timestamp;
            n.freeze_scout = s->node_id;
            n.freeze_epoch += 1;
        }
        return;
    }

    if (const auto* r = std::get_if<ReturnMsg>(&m.body)) {
        if (n.mode != NodeMode::Frozen) {
            n.last_warning = "return from node " + std::to_string(r->node_id) +
                             " ignored: channel not in switch mode (lost switch message?)";
            return;
        }
        // Early exit from switch mode: the attempt failed. Every occupant
        // witnesses the exit and applies the same shared-state update, which
        // is what keeps the per-channel (p_sw, s) copies aligned.
        n.mode = NodeMode::DesyncActive;
        n.view.switch_mode_active = false;
        n.view.p_sw = update_switch_probability(n.view.p_sw, true, n.params.beta);
        n.view.fail_streak += 1;
        n.view.s_offset = update_direction(n.view.s_offset, true, n.params.n_channels_C,
                                           n.view.fail_streak);
        n.members[r->node_id] = m.timestamp;
        n.scouting_member = -1;
        n.freeze_scout = -1;
        n.freeze_started = -1.0;
        n.last_flag_time = -1.0;  // flag evidence predates the exit from switch mode
        return;
    }
}

// Pure form of the transition for direct testing.
inline NodeState on_message(NodeState n, const Message& m) {
    apply_message(n, m);
    return n;
}

// Switch-mode timeout: two periods passed with no return, so the scout joined
// elsewhere. Probability is rewarded, the search direction resets to the
// nearest neighbor, and the scout leaves the local roster.
inline void apply_switch_mode_timeout(NodeState& n) {
    if (n.mode != NodeMode::Frozen) return;
    n.mode = NodeMode::DesyncActive;
    n.view.switch_mode_active = false;
    n.view.p_sw = update_switch_probability(n.view.p_sw, false, n.params.beta);
    n.view.fail_streak = 0;
    n.view.s_offset = update_direction(n.view.s_offset, false, n.params.n_channels_C, 0);
    if (n.freeze_scout >= 0) n.members.erase(n.freeze_scout);
    if (n.scouting_member == n.freeze_scout) n.scouting_member = -1;
    n.freeze_scout = -1;
    n.freeze_started = -1.0;
    n.last_flag_time = -1.0;
    n.view.w_heard = n.own_count();
}

}  // namespace tfdma

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "tfdma/desync.hpp"
#include "tfdma/errors.hpp"
#include "tfdma/protocol.hpp"
#include "tfdma/rng.hpp"

namespace tfdma {

enum class EventKind {
    FireBeacon,
    SendSwitch,
    SendReturn,
    Join,
    Freeze,
    Unfreeze,
    DroppedMsg,
    Arrive,
    Depart,
};

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::FireBeacon: return "FIRE_BEACON";
        case EventKind::SendSwitch: return "SEND_SWITCH";
        case EventKind::SendReturn: return "SEND_RETURN";
        case EventKind::Join: return "JOIN";
        case EventKind::Freeze: return "FREEZE";
        case EventKind::Unfreeze: return "UNFREEZE";
        case EventKind::DroppedMsg: return "DROPPED_MSG";
        case EventKind::Arrive: return "ARRIVE";
        case EventKind::Depart: return "DEPART";
    }
    return "UNKNOWN";
}

struct TraceEvent {
    double time_s = 0.0;
    int channel = 0;
    int node = -1;
    EventKind event = EventKind::FireBeacon;
    std::string detail;
};

struct TraceWarning {
    double time_s = 0.0;
    int node = -1;
    std::string text;
};

// Full event record of one run plus the convergence verdict.
struct SimTrace {
    int n_nodes = 0;
    int n_channels = 0;
    double period_T = 0.0;
    std::vector<TraceEvent> events;
    std::vector<TraceWarning> warnings;
    bool converged = false;
    double convergence_time = -1.0;  // start of the stable window
    double end_time = 0.0;
    long messages_sent = 0;     // point-to-point deliveries attempted
    long messages_dropped = 0;  // independent losses among those
};

struct RunSummary {
    bool converged = false;
    double convergence_time = -1.0;
    std::vector<int> final_occupancy;  // per channel, 1-based channel c at index c-1
    long switch_attempts = 0;
    long returns = 0;
    std::vector<double> per_node_airtime_share;  // empty when not converged
};

// Scripted membership change, applied at a fixed wall-clock time.
struct ScriptedChange {
    double time = 0.0;
    bool arrival = true;
    int node_id = -1;   // departures only; ignored for arrivals
    int channel = 0;    // arrivals only; 0 picks a random channel
};

struct SimConfig {
    ProtocolParams protocol{};
    int n_nodes = 16;
    std::uint64_t seed = 1;
    double max_time = 60.0;
    double message_loss_prob = 0.0;
    double propagation_delay = 0.0;
    int stable_window_periods = 3;
    std::vector<int> initial_counts;  // per-channel node counts; empty = uniform random placement
    std::vector<ScriptedChange> script;

    void validate() const {
        protocol.validate();
        if (n_nodes < 1) throw invalid_input("n_nodes must be positive");
        if (!(max_time > 0.0) || !std::isfinite(max_time)) throw invalid_input("max_time must be positive");
        if (message_loss_prob < 0.0 || message_loss_prob >= 1.0)
            throw invalid_input("message_loss_prob must be in [0, 1)");
        if (propagation_delay < 0.0 || !std::isfinite(propagation_delay))
            throw invalid_input("propagation_delay must be non-negative");
        if (stable_window_periods < 1) throw invalid_input("stable_window_periods must be positive");
        if (!initial_counts.empty()) {
            if (static_cast<int>(initial_counts.size()) != protocol.n_channels_C)
                throw invalid_input("initial_counts size must equal the channel count");
            long sum = 0;
            for (int c : initial_counts) {
                if (c < 0) throw invalid_input("initial_counts entries must be non-negative");
                sum += c;
            }
            if (sum != n_nodes) throw invalid_input("initial_counts must sum to n_nodes");
        }
        for (const auto& sc : script) {
            if (!(sc.time >= 0.0) || !std::isfinite(sc.time))
                throw invalid_input("scripted change time must be non-negative");
            if (!sc.arrival && sc.node_id < 0)
                throw invalid_input("scripted departure needs a node id");
            if (sc.arrival && (sc.channel < 0 || sc.channel > protocol.n_channels_C))
                throw invalid_input("scripted arrival channel out of range");
        }
    }
};

struct RunResult {
    SimTrace trace;
    RunSummary summary;
};

// Per-node airtime fraction over [t0, t1): within each channel consecutive
// beacon gaps are attributed to the earlier firer, so a channel's shares sum
// to one. Requires a converged trace and a window inside the stable stretch.
inline std::vector<double> airtime_shares(const SimTrace& trace, double t0, double t1) {
    if (!(t1 > t0)) throw invalid_input("airtime window must have positive length");
    if (!trace.converged) throw not_at_steady_state("airtime requested on a run that never converged");
    const double eps = 1e-9;
    if (t0 < trace.convergence_time - eps)
        throw not_at_steady_state("airtime window starts before the stable stretch");
    if (t1 > trace.end_time + eps)
        throw not_at_steady_state("airtime window extends past the end of the run");

    int max_node = trace.n_nodes - 1;
    for (const auto& e : trace.events) max_node = std::max(max_node, e.node);
    std::vector<double> share(static_cast<std::size_t>(max_node) + 1, 0.0);

    // Channel -> ordered (time, node) fires inside the window. Trace events
    // are already time-ordered.
    std::vector<std::vector<std::pair<double, int>>> fires(
        static_cast<std::size_t>(trace.n_channels) + 1);
    for (const auto& e : trace.events) {
        if (e.event != EventKind::FireBeacon) continue;
        if (e.time_s < t0 || e.time_s >= t1) continue;
        fires[static_cast<std::size_t>(e.channel)].push_back({e.time_s, e.node});
    }
    for (const auto& ch : fires) {
        if (ch.size() < 2) continue;
        const double span = ch.back().first - ch.front().first;
        if (!(span > 0.0)) continue;
        for (std::size_t i = 0; i + 1 < ch.size(); ++i) {
            const double gap = ch[i + 1].first - ch[i].first;
            share[static_cast<std::size_t>(ch[i].second)] += gap / span;
        }
    }
    return share;
}

namespace detail {

// Members older than this many periods are presumed gone from the channel.
constexpr double kStaleFactor = 2.5;

struct QueuedEvent {
    double t = 0.0;
    int kind = 0;          // 0 fire, 1 deliver, 2 join-evaluation, 3 unfreeze timeout, 4 scripted
    int node = -1;
    std::uint64_t tag = 0;  // schedule version / scout epoch / freeze epoch / script index
    std::uint64_t seq = 0;
    Message msg{};
};

struct QueuedEventLater {
    bool operator()(const QueuedEvent& a, const QueuedEvent& b) const {
        if (a.t != b.t) return a.t > b.t;
        if (a.kind != b.kind) return a.kind > b.kind;
        if (a.node != b.node) return a.node > b.node;
        return a.seq > b.seq;
    }
};

struct EngineNode {
    NodeState st{};
    int tuned = 1;  // receive channel; equals st.view.channel_index except while listening
    bool departed = false;
    double next_fire = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t sched_ver = 0;
    std::uint64_t scout_epoch = 0;
    double last_fire = std::numeric_limits<double>::quiet_NaN();
    double prev_snap = std::numeric_limits<double>::quiet_NaN();  // last beacon heard before own fire
    double last_heard = std::numeric_limits<double>::quiet_NaN();
    bool awaiting = false;  // waiting for the first beacon after own fire
    bool have_gap = false;
    double last_gap = 0.0;
    bool last_gap_exempt = false;
    bool pending_exempt = false;   // next gap is a deliberate two-period return slot
    bool hold_slot_once = false;   // skip one reactive update after a failed attempt so the
                                   // returning scout finds the ring exactly as it left it
};

class Engine {
  public:
    explicit Engine(const SimConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
        cfg_.validate();
        T_ = cfg_.protocol.desync.period_T;
        C_ = cfg_.protocol.n_channels_C;
        trace_.n_channels = C_;
        trace_.period_T = T_;
        occ_.assign(static_cast<std::size_t>(C_) + 1, 0);
    }

    RunResult run() {
        seed_nodes();
        trace_.n_nodes = static_cast<int>(nodes_.size());
        for (std::size_t i = 0; i < cfg_.script.size(); ++i) {
            push({cfg_.script[i].time, 4, -1, i, seq_++});
        }

        const double window = cfg_.stable_window_periods * T_;
        while (!queue_.empty()) {
            QueuedEvent ev = queue_.top();
            // Completion is checked before dispatch: nothing between the last
            // event and ev.t can have disturbed the stable window.
            if (window_open_ && window_start_ + window <= cfg_.max_time &&
                ev.t >= window_start_ + window) {
                trace_.converged = true;
                trace_.convergence_time = window_start_;
                trace_.end_time = window_start_ + window;
                break;
            }
            if (ev.t > cfg_.max_time) {
                trace_.end_time = cfg_.max_time;
                break;
            }
            queue_.pop();
            dispatch(ev);
        }
        if (queue_.empty()) trace_.end_time = cfg_.max_time;

        RunSummary s;
        s.converged = trace_.converged;
        s.convergence_time = trace_.convergence_time;
        s.final_occupancy.assign(occ_.begin() + 1, occ_.end());
        s.switch_attempts = attempts_;
        s.returns = returns_;
        if (trace_.converged) {
            s.per_node_airtime_share =
                airtime_shares(trace_, trace_.convergence_time, trace_.end_time);
        }
        check_conservation();
        return {std::move(trace_), std::move(s)};
    }

  private:
    SimConfig cfg_;
    Rng rng_;
    double T_ = 0.25;
    int C_ = 8;
    std::vector<EngineNode> nodes_;
    std::vector<int> occ_;  // ground-truth membership count per channel, 1-based
    int active_total_ = 0;
    std::priority_queue<QueuedEvent, std::vector<QueuedEvent>, QueuedEventLater> queue_;
    std::uint64_t seq_ = 0;
    SimTrace trace_;
    long attempts_ = 0;
    long returns_ = 0;
    bool window_open_ = false;
    double window_start_ = 0.0;

    void push(QueuedEvent ev) { queue_.push(std::move(ev)); }

    void record(double t, int channel, int node, EventKind k, std::string detail) {
        trace_.events.push_back({t, channel, node, k, std::move(detail)});
    }

    static std::string fmt(const char* pattern, double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, pattern, v);
        return buf;
    }

    void seed_nodes() {
        nodes_.resize(static_cast<std::size_t>(cfg_.n_nodes));
        std::vector<int> channel_of(nodes_.size(), 1);
        if (!cfg_.initial_counts.empty()) {
            int idx = 0;
            for (int c = 1; c <= C_; ++c)
                for (int k = 0; k < cfg_.initial_counts[static_cast<std::size_t>(c - 1)]; ++k)
                    channel_of[static_cast<std::size_t>(idx++)] = c;
        } else {
            for (auto& c : channel_of) c = 1 + static_cast<int>(rng_.next_below(static_cast<std::uint64_t>(C_)));
        }
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            init_node(static_cast<int>(i), channel_of[i], rng_.uniform(0.0, T_));
        }
    }

    void init_node(int id, int channel, double first_fire) {
        auto& n = nodes_[static_cast<std::size_t>(id)];
        n.st = NodeState{};
        n.st.id = id;
        n.st.params = cfg_.protocol;
        n.st.view.channel_index = channel;
        n.st.view.p_sw = cfg_.protocol.p_sw_initial;
        n.st.view.s_offset = cfg_.protocol.s_initial;
        n.tuned = channel;
        n.departed = false;
        n.next_fire = first_fire;
        n.sched_ver += 1;
        occ_[static_cast<std::size_t>(channel)] += 1;
        active_total_ += 1;
        push({first_fire, 0, id, n.sched_ver, seq_++});
    }

    std::size_t member_count(int channel) const {
        return static_cast<std::size_t>(occ_[static_cast<std::size_t>(channel)]);
    }

    void dispatch(const QueuedEvent& ev) {
        switch (ev.kind) {
            case 0: fire(ev); break;
            case 1: deliver(ev); break;
            case 2: scout_decision(ev); break;
            case 3: unfreeze_timeout(ev); break;
            case 4: scripted(ev); break;
            default: throw std::logic_error("unknown event kind");
        }
        update_window(ev.t);
    }

    void broadcast(double t, int channel, int sender, const Message::Body& body) {
        const double arrive = t + cfg_.propagation_delay;
        for (std::size_t j = 0; j < nodes_.size(); ++j) {
            auto& r = nodes_[j];
            if (static_cast<int>(j) == sender || r.departed || r.tuned != channel) continue;
            trace_.messages_sent += 1;
            if (cfg_.message_loss_prob > 0.0 && rng_.bernoulli(cfg_.message_loss_prob)) {
                trace_.messages_dropped += 1;
                record(t, channel, static_cast<int>(j), EventKind::DroppedMsg,
                       "from=" + std::to_string(sender));
                continue;
            }
            push({arrive, 1, static_cast<int>(j), 0, seq_++, Message{body, channel, arrive}});
        }
    }

    // Reactive phase update on the first beacon heard after the node's own
    // firing. Stale neighborhoods (no recent beacon before the fire, or a
    // result that would land in the past) fall back to the tentative period.
    void maybe_revise(EngineNode& n, int id, double beacon_time) {
        if (!n.awaiting) return;
        n.awaiting = false;
        if (n.st.mode == NodeMode::Frozen) return;  // verbatim repeat keeps the slot
        if (n.hold_slot_once) {
            n.hold_slot_once = false;
            return;
        }
        if (!std::isfinite(n.prev_snap)) return;
        if (n.last_fire - n.prev_snap > 2.0 * T_) return;
        PhaseNeighborhood nb{n.prev_snap, n.last_fire, beacon_time};
        const double revised = next_fire_time(nb, cfg_.protocol.desync);
        if (revised < beacon_time) return;
        n.next_fire = revised;
        n.sched_ver += 1;
        push({revised, 0, id, n.sched_ver, seq_++});
    }

    void fire(const QueuedEvent& ev) {
        auto& n = nodes_[static_cast<std::size_t>(ev.node)];
        if (n.departed || ev.tag != n.sched_ver) return;
        const double t = ev.t;
        const int c = n.st.view.channel_index;

        if (n.st.mode == NodeMode::Frozen) {
            // Switch mode: the beacon is repeated verbatim, roster untouched.
            n.st.view.switch_mode_active = true;
        } else {
            // Age out members not heard from for several periods; the scout
            // that froze the channel is deliberately silent and is kept.
            for (auto it = n.st.members.begin(); it != n.st.members.end();) {
                if (t - it->second > kStaleFactor * T_ && it->first != n.st.scouting_member &&
                    it->first != n.st.freeze_scout) {
                    it = n.st.members.erase(it);
                } else {
                    ++it;
                }
            }
            const bool flag_fresh =
                n.st.last_flag_time >= 0.0 &&
                (!std::isfinite(n.last_fire) || n.st.last_flag_time >= n.last_fire);
            n.st.view.w_heard = n.st.own_count();
            n.st.view.switch_mode_active = flag_fresh;
            if (n.st.mode == NodeMode::Rejoining) n.st.mode = NodeMode::DesyncActive;
        }
        n.st.view.periods_since_attempt += 1;

        if (std::isfinite(n.last_fire)) {
            n.have_gap = true;
            n.last_gap = t - n.last_fire;
            n.last_gap_exempt = n.pending_exempt;
        }
        n.pending_exempt = false;
        n.prev_snap = n.last_heard;
        n.last_fire = t;
        n.awaiting = true;
        n.next_fire = t + T_;
        n.sched_ver += 1;
        push({n.next_fire, 0, ev.node, n.sched_ver, seq_++});

        // The broadcast flag carries ground truth only: a node advertises
        // switch mode iff it is itself frozen. Relaying a heard flag would let
        // two nodes echo it back and forth past the end of switch mode.
        Beacon b{ev.node, n.st.view.w_heard, n.st.mode == NodeMode::Frozen};
        record(t, c, ev.node, EventKind::FireBeacon,
               "w=" + std::to_string(b.w_count) + " flag=" + (b.switch_flag ? "1" : "0"));
        broadcast(t, c, ev.node, Message::Body{b});

        // Switch attempt decision happens right after the own beacon. A node
        // that believes itself alone never attempts: no target can satisfy
        // W_target <= W_origin - 2 when W_origin = 1 (the expected-flow model
        // likewise gives zero outflow there), and its futile freezes would
        // flag the channel as busy to exactly the scouts that should join it.
        if (C_ >= 2 && n.st.view.w_heard >= 2 && n.st.mode == NodeMode::DesyncActive &&
            !n.st.view.switch_mode_active) {
            if (decide_switch_attempt(n.st.view, cfg_.protocol, rng_)) {
                start_attempt(ev.node, t);
            }
        }
    }

    void start_attempt(int id, double t) {
        auto& n = nodes_[static_cast<std::size_t>(id)];
        const int origin = n.st.view.channel_index;
        const int target = target_channel(origin, n.st.view.s_offset, C_);
        attempts_ += 1;
        record(t, origin, id, EventKind::SendSwitch,
               "target=" + std::to_string(target) + " s=" + std::to_string(n.st.view.s_offset));
        broadcast(t, origin, id, Message::Body{SwitchMsg{id}});

        n.st.mode = NodeMode::Listening;
        n.st.origin_channel = origin;
        n.st.target = target;
        n.st.w_origin_snapshot = n.st.view.w_heard;
        n.st.depart_time = t;
        n.st.target_members.clear();
        n.st.target_beacon_times.clear();
        n.st.target_max_w = 0;
        n.st.target_switch_until = -1.0;
        n.st.target_last_return = -1.0;
        n.st.view.periods_since_attempt = 0;
        n.tuned = target;
        n.last_heard = std::numeric_limits<double>::quiet_NaN();
        n.awaiting = false;
        n.sched_ver += 1;  // cancels the pending own fire
        n.next_fire = std::numeric_limits<double>::quiet_NaN();
        n.scout_epoch += 1;
        push({t + T_, 2, id, n.scout_epoch, seq_++});
    }

    void deliver(const QueuedEvent& ev) {
        auto& n = nodes_[static_cast<std::size_t>(ev.node)];
        if (n.departed) return;
        const Message& m = ev.msg;
        if (n.tuned != m.channel) return;  // retuned at the same instant; physically missed

        const NodeMode before = n.st.mode;
        apply_message(n.st, m);

        if (const auto* b = std::get_if<Beacon>(&m.body)) {
            (void)b;
            n.last_heard = m.timestamp;
            if (before != NodeMode::Listening) maybe_revise(n, ev.node, m.timestamp);
            return;
        }
        if (std::holds_alternative<SwitchMsg>(m.body)) {
            if (before != NodeMode::Frozen && n.st.mode == NodeMode::Frozen) {
                record(m.timestamp, m.channel, ev.node, EventKind::Freeze,
                       "scout=" + std::to_string(n.st.freeze_scout));
                push({m.timestamp + 2.0 * T_, 3, ev.node, n.st.freeze_epoch, seq_++});
            }
            return;
        }
        if (std::holds_alternative<ReturnMsg>(m.body)) {
            if (before == NodeMode::Frozen && n.st.mode == NodeMode::DesyncActive) {
                record(m.timestamp, m.channel, ev.node, EventKind::Unfreeze, "return");
                n.hold_slot_once = true;
            } else if (!n.st.last_warning.empty()) {
                trace_.warnings.push_back({m.timestamp, ev.node, n.st.last_warning});
                n.st.last_warning.clear();
            }
            return;
        }
    }

    // One listening period has elapsed; the scout either joins the target or
    // returns to its origin slot two periods after departure.
    void scout_decision(const QueuedEvent& ev) {
        auto& n = nodes_[static_cast<std::size_t>(ev.node)];
        if (n.departed || n.st.mode != NodeMode::Listening || ev.tag != n.scout_epoch) return;
        const double t = ev.t;
        const int w_target = std::max(static_cast<int>(n.st.target_members.size()),
                                      n.st.target_max_w);
        const bool ok = evaluate_join(n.st.w_origin_snapshot, w_target);
        if (ok) {
            join_target(ev.node, t, w_target);
        } else {
            return_to_origin(ev.node, t, w_target);
        }
    }

    void join_target(int id, double t, int w_target) {
        auto& n = nodes_[static_cast<std::size_t>(id)];
        const int origin = n.st.origin_channel;
        const int target = n.st.target;
        record(t, target, id, EventKind::Join,
               "from=" + std::to_string(origin) + " w_target=" + std::to_string(w_target));
        occ_[static_cast<std::size_t>(origin)] -= 1;
        occ_[static_cast<std::size_t>(target)] += 1;

        n.st.mode = NodeMode::Rejoining;
        n.st.view.channel_index = target;
        // p_sw, s_offset and the failure streak are logically per-channel
        // quantities; occupants hold copies kept equal by the collectively
        // witnessed switch-mode exits. A joiner adopts the channel's current
        // values (in a radio implementation they ride on the beacon payload)
        // instead of restarting fresh, which would desynchronize the copies
        // and break the systematic probe sweep.
        n.st.view.p_sw = cfg_.protocol.p_sw_initial;
        n.st.view.s_offset = cfg_.protocol.s_initial;
        n.st.view.fail_streak = 0;
        for (const auto& peer : nodes_) {
            if (peer.departed || peer.st.id == id) continue;
            if (peer.st.view.channel_index != target) continue;
            n.st.view.p_sw = peer.st.view.p_sw;
            n.st.view.s_offset = peer.st.view.s_offset;
            n.st.view.fail_streak = peer.st.view.fail_streak;
            break;
        }
        n.st.view.periods_since_attempt = 0;
        n.st.view.switch_mode_active = false;
        n.st.last_flag_time = -1.0;
        n.st.members = n.st.target_members;
        n.st.scouting_member = -1;
        n.st.freeze_scout = -1;
        n.st.view.w_heard = std::max(n.st.own_count(), w_target + 1);
        n.tuned = target;

        // First fire lands in the middle of the widest observed beacon gap,
        // projected into the period after the listening window.
        double first = t;
        auto& times = n.st.target_beacon_times;
        if (!times.empty()) {
            std::sort(times.begin(), times.end());
            double best_gap = (times.front() + T_) - times.back();
            double best_mid = (times.back() + times.front() + T_) / 2.0;
            for (std::size_t i = 0; i + 1 < times.size(); ++i) {
                const double gap = times[i + 1] - times[i];
                if (gap > best_gap + 1e-15) {
                    best_gap = gap;
                    best_mid = (times[i] + times[i + 1]) / 2.0;
                }
            }
            first = best_mid;
            while (first < t) first += T_;
        }
        n.last_fire = std::numeric_limits<double>::quiet_NaN();
        n.prev_snap = std::numeric_limits<double>::quiet_NaN();
        n.have_gap = false;
        n.last_gap_exempt = false;
        n.pending_exempt = false;
        n.awaiting = false;
        n.next_fire = first;
        n.sched_ver += 1;
        push({first, 0, id, n.sched_ver, seq_++});
    }

    void return_to_origin(int id, double t, int w_target) {
        auto& n = nodes_[static_cast<std::size_t>(id)];
        const int origin = n.st.origin_channel;
        returns_ += 1;
        record(t, origin, id, EventKind::SendReturn,
               "w_target=" + std::to_string(w_target) +
               (n.st.target_in_switch_mode(t) ? " target_in_switch_mode=1" : ""));
        n.tuned = origin;
        broadcast(t, origin, id, Message::Body{ReturnMsg{id}});

        n.st.mode = NodeMode::Rejoining;
        n.st.view.p_sw = update_switch_probability(n.st.view.p_sw, true, cfg_.protocol.beta);
        n.st.view.fail_streak += 1;
        n.st.view.s_offset = update_direction(n.st.view.s_offset, true, C_, n.st.view.fail_streak);
        n.st.view.periods_since_attempt = 0;
        n.last_heard = std::numeric_limits<double>::quiet_NaN();
        n.awaiting = false;
        n.pending_exempt = true;  // the two-period slot is part of the protocol
        n.next_fire = n.st.depart_time + 2.0 * T_;
        n.sched_ver += 1;
        push({n.next_fire, 0, id, n.sched_ver, seq_++});
    }

    void unfreeze_timeout(const QueuedEvent& ev) {
        auto& n = nodes_[static_cast<std::size_t>(ev.node)];
        if (n.departed || n.st.mode != NodeMode::Frozen || ev.tag != n.st.freeze_epoch) return;
        apply_switch_mode_timeout(n.st);
        n.hold_slot_once = false;  // the scout is gone; the ring must close its slot
        record(ev.t, n.st.view.channel_index, ev.node, EventKind::Unfreeze, "timeout");
    }

    void scripted(const QueuedEvent& ev) {
        const ScriptedChange& sc = cfg_.script[static_cast<std::size_t>(ev.tag)];
        if (sc.arrival) {
            int channel = sc.channel;
            if (channel == 0) channel = 1 + static_cast<int>(rng_.next_below(static_cast<std::uint64_t>(C_)));
            const int id = static_cast<int>(nodes_.size());
            nodes_.emplace_back();
            init_node(id, channel, ev.t + rng_.uniform(0.0, T_));
            trace_.n_nodes = static_cast<int>(nodes_.size());
            record(ev.t, channel, id, EventKind::Arrive, "");
        } else {
            if (sc.node_id >= static_cast<int>(nodes_.size())) return;
            auto& n = nodes_[static_cast<std::size_t>(sc.node_id)];
            if (n.departed) return;
            // Silent removal; peers age the node out of their rosters.
            const int c = n.st.mode == NodeMode::Listening ? n.st.origin_channel
                                                           : n.st.view.channel_index;
            occ_[static_cast<std::size_t>(c)] -= 1;
            active_total_ -= 1;
            n.departed = true;
            n.sched_ver += 1;
            record(ev.t, c, sc.node_id, EventKind::Depart, "");
        }
    }

    // Global steady state: ground-truth occupancy balanced, and every active
    // node's last realized beacon-to-beacon gap is one period long, deliberate
    // two-period return slots excepted. Scheduled-but-unfired gaps are not
    // judged; a bad one breaks the window when it fires.
    bool stable_now() const {
        if (active_total_ == 0) return false;
        const int lo = active_total_ / C_;
        const int hi = (active_total_ + C_ - 1) / C_;
        for (int c = 1; c <= C_; ++c) {
            const int w = occ_[static_cast<std::size_t>(c)];
            if (w != lo && w != hi) return false;
        }
        const double tol = cfg_.protocol.desync.q_ss * T_;
        for (const auto& n : nodes_) {
            if (n.departed || n.st.mode == NodeMode::Listening) continue;
            if (!n.have_gap) return false;
            if (!n.last_gap_exempt && !(std::abs(n.last_gap - T_) < tol)) return false;
        }
        return true;
    }

    void update_window(double t) {
        if (stable_now()) {
            if (!window_open_) {
                window_open_ = true;
                window_start_ = t;
            }
        } else {
            window_open_ = false;
        }
    }

    void check_conservation() const {
        long total = 0;
        for (int c = 1; c <= C_; ++c) total += occ_[static_cast<std::size_t>(c)];
        if (total != active_total_)
            throw std::logic_error("occupancy accounting out of balance");
        long n_active = 0;
        for (const auto& n : nodes_)
            if (!n.departed) n_active += 1;
        if (n_active != active_total_)
            throw std::logic_error("node accounting out of balance");
    }
};

}  // namespace detail

inline RunResult run(const SimConfig& cfg) {
    detail::Engine engine(cfg);
    return engine.run();
}

// Convergence-time statistics over independently seeded replications.
struct DistStats {
    int n_runs = 0;
    int n_converged = 0;
    double mean = 0.0;  // over converged runs
    double sem = 0.0;
    double p10 = 0.0;
    double p50 = 0.0;
    double p90 = 0.0;
    double min = 0.0;
    double max = 0.0;
};

inline DistStats convergence_time_distribution(const SimConfig& base, int n_runs) {
    if (n_runs < 1) throw invalid_input("n_runs must be positive");
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(n_runs));
    DistStats st;
    st.n_runs = n_runs;
    for (int i = 0; i < n_runs; ++i) {
        SimConfig cfg = base;
        cfg.seed = Rng::derive(base.seed, static_cast<std::uint64_t>(i));
        RunResult r = run(cfg);
        if (r.summary.converged) times.push_back(r.summary.convergence_time);
    }
    st.n_converged = static_cast<int>(times.size());
    if (times.empty()) return st;
    std::sort(times.begin(), times.end());
    double sum = 0.0;
    for (double v : times) sum += v;
    st.mean = sum / static_cast<double>(times.size());
    double ss = 0.0;
    for (double v : times) ss += (v - st.mean) * (v - st.mean);
    const auto n = static_cast<double>(times.size());
    st.sem = times.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    auto quantile = [&](double q) {
        const double pos = q * (n - 1.0);
        const auto i = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(i);
        if (i + 1 >= times.size()) return times.back();
        return times[i] * (1.0 - frac) + times[i + 1] * frac;
    };
    st.p10 = quantile(0.10);
    st.p50 = quantile(0.50);
    st.p90 = quantile(0.90);
    st.min = times.front();
    st.max = times.back();
    return st;
}

}  // namespace tfdma

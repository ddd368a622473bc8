#pragma once

#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>

#include "json.hpp"
#include "tfdma/delay.hpp"
#include "tfdma/engine.hpp"
#include "tfdma/errors.hpp"
#include "tfdma/stability.hpp"

namespace tfdma {

using ordered_json = nlohmann::ordered_json;

namespace detail {

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += "\"\"";
        else out += ch;
    }
    out += '"';
    return out;
}

inline std::string fixed9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9f", v);
    return buf;
}

inline std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

}  // namespace detail

inline std::string trace_to_csv(const SimTrace& trace) {
    std::string out = "time_s,channel,node,event,detail\n";
    for (const auto& e : trace.events) {
        out += detail::fixed9(e.time_s);
        out += ',';
        out += std::to_string(e.channel);
        out += ',';
        out += std::to_string(e.node);
        out += ',';
        out += to_string(e.event);
        out += ',';
        out += detail::csv_field(e.detail);
        out += '\n';
    }
    return out;
}

inline std::string trace_to_jsonl(const SimTrace& trace) {
    std::string out;
    for (const auto& e : trace.events) {
        ordered_json j;
        j["time_s"] = e.time_s;
        j["channel"] = e.channel;
        j["node"] = e.node;
        j["event"] = to_string(e.event);
        j["detail"] = e.detail;
        out += j.dump();
        out += '\n';
    }
    return out;
}

inline ordered_json summary_to_json(const RunSummary& s) {
    ordered_json j;
    j["converged"] = s.converged;
    if (s.converged) j["convergence_time"] = s.convergence_time;
    else j["convergence_time"] = nullptr;
    j["final_occupancy"] = s.final_occupancy;
    j["switch_attempts"] = s.switch_attempts;
    j["returns"] = s.returns;
    j["per_node_airtime_share"] = s.per_node_airtime_share;
    return j;
}

inline ordered_json config_to_json(const SimConfig& cfg) {
    ordered_json j;
    j["nodes"] = cfg.n_nodes;
    j["channels"] = cfg.protocol.n_channels_C;
    j["period_T"] = cfg.protocol.desync.period_T;
    j["alpha"] = cfg.protocol.desync.alpha;
    j["q_ss"] = cfg.protocol.desync.q_ss;
    j["beta"] = cfg.protocol.beta;
    j["p_sw_initial"] = cfg.protocol.p_sw_initial;
    j["s_initial"] = cfg.protocol.s_initial;
    j["Z"] = cfg.protocol.Z;
    j["seed"] = cfg.seed;
    j["max_time"] = cfg.max_time;
    j["message_loss_prob"] = cfg.message_loss_prob;
    j["propagation_delay"] = cfg.propagation_delay;
    j["stable_window_periods"] = cfg.stable_window_periods;
    j["initial_counts"] = cfg.initial_counts;
    ordered_json script = ordered_json::array();
    for (const auto& sc : cfg.script) {
        ordered_json e;
        e["time"] = sc.time;
        e["arrival"] = sc.arrival;
        e["node_id"] = sc.node_id;
        e["channel"] = sc.channel;
        script.push_back(e);
    }
    j["script"] = script;
    return j;
}

inline SimConfig config_from_json(const ordered_json& j) {
    SimConfig cfg;
    try {
        if (j.contains("nodes")) cfg.n_nodes = j.at("nodes").get<int>();
        if (j.contains("channels")) cfg.protocol.n_channels_C = j.at("channels").get<int>();
        if (j.contains("period_T")) cfg.protocol.desync.period_T = j.at("period_T").get<double>();
        if (j.contains("alpha")) cfg.protocol.desync.alpha = j.at("alpha").get<double>();
        if (j.contains("q_ss")) cfg.protocol.desync.q_ss = j.at("q_ss").get<double>();
        if (j.contains("beta")) cfg.protocol.beta = j.at("beta").get<double>();
        if (j.contains("p_sw_initial")) cfg.protocol.p_sw_initial = j.at("p_sw_initial").get<double>();
        if (j.contains("s_initial")) cfg.protocol.s_initial = j.at("s_initial").get<int>();
        if (j.contains("Z")) cfg.protocol.Z = j.at("Z").get<long>();
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("max_time")) cfg.max_time = j.at("max_time").get<double>();
        if (j.contains("message_loss_prob"))
            cfg.message_loss_prob = j.at("message_loss_prob").get<double>();
        if (j.contains("propagation_delay"))
            cfg.propagation_delay = j.at("propagation_delay").get<double>();
        if (j.contains("stable_window_periods"))
            cfg.stable_window_periods = j.at("stable_window_periods").get<int>();
        if (j.contains("initial_counts"))
            cfg.initial_counts = j.at("initial_counts").get<std::vector<int>>();
        if (j.contains("script")) {
            for (const auto& e : j.at("script")) {
                ScriptedChange sc;
                sc.time = e.at("time").get<double>();
                sc.arrival = e.at("arrival").get<bool>();
                if (e.contains("node_id")) sc.node_id = e.at("node_id").get<int>();
                if (e.contains("channel")) sc.channel = e.at("channel").get<int>();
                cfg.script.push_back(sc);
            }
        }
    } catch (const nlohmann::json::exception& ex) {
        throw invalid_input(std::string("bad config json: ") + ex.what());
    }
    return cfg;
}

inline ordered_json stats_to_json(const DistStats& st) {
    ordered_json j;
    j["n_runs"] = st.n_runs;
    j["n_converged"] = st.n_converged;
    if (st.n_converged > 0) {
        j["mean_s"] = st.mean;
        j["sem_s"] = st.sem;
        j["p10_s"] = st.p10;
        j["p50_s"] = st.p50;
        j["p90_s"] = st.p90;
        j["min_s"] = st.min;
        j["max_s"] = st.max;
    } else {
        j["mean_s"] = nullptr;
        j["sem_s"] = nullptr;
        j["p10_s"] = nullptr;
        j["p50_s"] = nullptr;
        j["p90_s"] = nullptr;
        j["min_s"] = nullptr;
        j["max_s"] = nullptr;
    }
    return j;
}

inline ordered_json delay_params_to_json(const DelayParams& p) {
    ordered_json j;
    j["nodes"] = p.w_tot;
    j["channels"] = p.channels;
    j["period_T"] = p.period_T;
    j["p_sw0"] = p.p_sw_0;
    j["beta"] = p.beta;
    j["Z"] = p.Z;
    j["k_ss"] = p.k_ss;
    return j;
}

inline ordered_json delay_estimate_to_json(const DelayEstimate& e, const DelayParams& p) {
    ordered_json j;
    j["mode"] = to_string(e.mode);
    j["total_seconds"] = e.total_seconds;
    j["expected_periods"] = e.expected_periods;
    j["probability_sum"] = e.probability_sum;
    j["n_compositions"] = e.per_composition.size();
    j["params"] = delay_params_to_json(p);
    return j;
}

inline std::string delay_breakdown_to_csv(const DelayEstimate& e) {
    std::string out = "i,counts,p_i,W_diff,d_periods\n";
    for (const auto& pc : e.per_composition) {
        out += std::to_string(pc.comp.index);
        out += ',';
        std::string counts;
        for (std::size_t c = 0; c < pc.comp.counts.size(); ++c) {
            if (c) counts += '|';
            counts += std::to_string(pc.comp.counts[c]);
        }
        out += counts;
        out += ',';
        out += detail::num(pc.probability);
        out += ',';
        out += std::to_string(pc.w_diff);
        out += ',';
        out += detail::num(pc.d_periods);
        out += '\n';
    }
    return out;
}

inline ordered_json matrix_to_json(const TransitionMatrix& G) {
    ordered_json rows = ordered_json::array();
    for (int r = 0; r < G.C; ++r) {
        ordered_json row = ordered_json::array();
        for (int c = 0; c < G.C; ++c) row.push_back(G.at(r, c));
        rows.push_back(row);
    }
    return rows;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw invalid_input("cannot open for writing: " + path);
    f << content;
    if (!f) throw invalid_input("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw invalid_input("cannot open for reading: " + path);
    std::string out((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return out;
}

}  // namespace tfdma

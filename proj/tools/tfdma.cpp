// Command-line front end: event simulator, closed-form delay model, and
// expected-flow matrix diagnostics behind one deterministic binary. All
// randomness flows from a single seed (--seed, else TFDMA_SEED, else 1), so
// identical invocations produce byte-identical outputs.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tfdma/tfdma.hpp"

namespace {

using tfdma::ordered_json;

std::uint64_t fallback_seed() {
    const char* e = std::getenv("TFDMA_SEED");
    if (e == nullptr || *e == '\0') return 1;
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(e, &pos);
        if (pos != std::string(e).size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw tfdma::invalid_input("TFDMA_SEED must be an unsigned integer");
    }
}

void emit(const std::string& path, const std::string& content) {
    if (path.empty())
        std::cout << content;
    else
        tfdma::write_text_file(path, content);
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

tfdma::ProbabilityMode parse_mode(const std::string& m) {
    if (m == "as-printed") return tfdma::ProbabilityMode::AsPrinted;
    if (m == "multinomial") return tfdma::ProbabilityMode::ExactMultinomial;
    throw tfdma::invalid_input("mode must be 'as-printed' or 'multinomial'");
}

template <typename T>
std::vector<T> broadcast(const std::vector<T>& v, int n, const char* what) {
    if (static_cast<int>(v.size()) == n) return v;
    if (v.size() == 1) return std::vector<T>(static_cast<std::size_t>(n), v[0]);
    throw tfdma::invalid_input(std::string(what) + " needs 1 or " + std::to_string(n) +
                               " entries, got " + std::to_string(v.size()));
}

// Externally published benchmark for the five reference configurations: the
// measured mean delay to steady state (with its standard deviation) and the
// closed-form prediction quoted alongside it.
struct ReferenceRow {
    int nodes;
    int channels;
    double measured_s;
    double measured_sd_s;
    double predicted_s;
};
constexpr ReferenceRow kReference[] = {
    {16, 8, 4.7, 1.7, 4.9}, {16, 4, 4.0, 1.0, 4.1}, {16, 2, 3.2, 0.5, 2.7},
    {8, 4, 3.1, 0.7, 3.1},  {8, 2, 2.9, 0.6, 2.3},
};

struct SimulateArgs {
    std::string config_path;
    std::string out;
    std::string trace_out;
    std::string format = "csv";
    int nodes = 16;
    int channels = 8;
    int replications = 1;
    double period = 0.25;
    double alpha = 0.95;
    double qss = 0.02;
    double beta = 1.25;
    double p_sw0 = 0.33;
    long Z = 60;
    double max_time = 60.0;
    double loss = 0.0;
    std::uint64_t seed = 1;
};

struct DelayArgs {
    int nodes = 16;
    int channels = 8;
    double period = 0.25;
    double p_sw0 = 0.33;
    double beta = 1.25;
    double kss = 6.0;
    long Z = 60;
    std::uint64_t limit = 10'000'000;
    std::string mode = "as-printed";
    std::string out;
    std::string breakdown_out;
};

struct MatrixArgs {
    std::vector<double> w;
    std::vector<double> p_sw{0.33};
    std::vector<int> s{1};
    std::string out;
};

struct SweepArgs {
    int nodes = 16;
    int channels = 8;
    int replications = 0;
    double period = 0.25;
    double p_sw0 = 0.33;
    double beta = 1.25;
    double kss = 6.0;
    double max_time = 60.0;
    long Z = 60;
    std::string mode = "as-printed";
    std::string sweep;
    std::string out;
    std::uint64_t seed = 1;
};

struct CompareArgs {
    int replications = 20;
    double max_time = 60.0;
    std::string mode = "as-printed";
    std::string out;
    std::uint64_t seed = 1;
};

tfdma::DelayParams delay_params_of(int nodes, int channels, double period, double p_sw0,
                                   double beta, long Z, double kss) {
    tfdma::DelayParams p;
    p.w_tot = nodes;
    p.channels = channels;
    p.period_T = period;
    p.p_sw_0 = p_sw0;
    p.beta = beta;
    p.Z = Z;
    p.k_ss = kss;
    return p;
}

tfdma::SimConfig sim_config_of(const tfdma::DelayParams& p, std::uint64_t seed, double max_time) {
    tfdma::SimConfig cfg;
    cfg.n_nodes = p.w_tot;
    cfg.protocol.n_channels_C = p.channels;
    cfg.protocol.desync.period_T = p.period_T;
    cfg.protocol.p_sw_initial = p.p_sw_0;
    cfg.protocol.beta = p.beta;
    cfg.protocol.Z = p.Z;
    cfg.seed = seed;
    cfg.max_time = max_time;
    return cfg;
}

double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw tfdma::invalid_input("bad numeric value '" + s + "' for " + what);
    }
}

long parse_long(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw tfdma::invalid_input("bad integer value '" + s + "' for " + what);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Decentralized multichannel TDMA toolkit: event-driven protocol simulator,\n"
        "closed-form delay model, and expected-flow matrix diagnostics."};
    app.require_subcommand(1);

    // ---- simulate ----------------------------------------------------------
    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "Run the event-driven protocol simulator");
    auto* so_config =
        sim->add_option("--config", sa.config_path, "JSON config file (explicit flags override)");
    auto* so_nodes = sim->add_option("--nodes", sa.nodes, "Total node count");
    auto* so_channels = sim->add_option("--channels", sa.channels, "Channel count");
    auto* so_period = sim->add_option("--period", sa.period, "Beacon period T in seconds");
    auto* so_alpha = sim->add_option("--alpha", sa.alpha, "Phase-update weight in (0,1)");
    auto* so_qss = sim->add_option("--qss", sa.qss, "Steady-state gap tolerance fraction");
    auto* so_beta = sim->add_option("--beta", sa.beta, "Switch-probability adaptation factor");
    auto* so_psw = sim->add_option("--p-sw0", sa.p_sw0, "Initial per-period switch probability");
    auto* so_Z = sim->add_option("--Z", sa.Z, "Inactivity periods before a forced attempt");
    auto* so_seed = sim->add_option("--seed", sa.seed, "Random seed");
    auto* so_maxt = sim->add_option("--max-time", sa.max_time, "Simulated horizon in seconds");
    auto* so_loss = sim->add_option("--loss", sa.loss, "Independent message loss probability");
    sim->add_option("--replications", sa.replications,
                    "Independent seeded runs; > 1 reports statistics instead of one summary");
    sim->add_option("--out", sa.out, "Write the JSON report here instead of stdout");
    auto* so_trace =
        sim->add_option("--trace-out", sa.trace_out, "Write the event trace (single run only)");
    sim->add_option("--format", sa.format, "Trace file format")
        ->check(CLI::IsMember({"csv", "jsonl", "json"}));
    sim->callback([&] {
        tfdma::SimConfig cfg;
        cfg.seed = fallback_seed();
        if (so_config->count()) {
            const std::uint64_t env_seed = cfg.seed;
            const ordered_json j = ordered_json::parse(tfdma::read_text_file(sa.config_path));
            cfg = tfdma::config_from_json(j);
            if (!j.contains("seed")) cfg.seed = env_seed;
        }
        if (so_nodes->count()) cfg.n_nodes = sa.nodes;
        if (so_channels->count()) cfg.protocol.n_channels_C = sa.channels;
        if (so_period->count()) cfg.protocol.desync.period_T = sa.period;
        if (so_alpha->count()) cfg.protocol.desync.alpha = sa.alpha;
        if (so_qss->count()) cfg.protocol.desync.q_ss = sa.qss;
        if (so_beta->count()) cfg.protocol.beta = sa.beta;
        if (so_psw->count()) cfg.protocol.p_sw_initial = sa.p_sw0;
        if (so_Z->count()) cfg.protocol.Z = sa.Z;
        if (so_seed->count()) cfg.seed = sa.seed;
        if (so_maxt->count()) cfg.max_time = sa.max_time;
        if (so_loss->count()) cfg.message_loss_prob = sa.loss;
        cfg.validate();
        if (sa.replications < 1) throw tfdma::invalid_input("replications must be >= 1");
        if (sa.replications > 1 && so_trace->count())
            throw tfdma::invalid_input("trace output requires a single replication");

        ordered_json report;
        report["config"] = tfdma::config_to_json(cfg);
        if (sa.replications == 1) {
            const tfdma::RunResult r = tfdma::run(cfg);
            report["summary"] = tfdma::summary_to_json(r.summary);
            emit(sa.out, dump(report));
            if (so_trace->count()) {
                const std::string body =
                    sa.format == "csv" ? tfdma::trace_to_csv(r.trace) : tfdma::trace_to_jsonl(r.trace);
                tfdma::write_text_file(sa.trace_out, body);
            }
            if (r.summary.converged)
                std::fprintf(stderr, "converged at %.6f s\n", r.summary.convergence_time);
            else
                std::fprintf(stderr, "did not converge within %.6f s\n", cfg.max_time);
        } else {
            const tfdma::DistStats st = tfdma::convergence_time_distribution(cfg, sa.replications);
            report["replications"] = sa.replications;
            report["stats"] = tfdma::stats_to_json(st);
            emit(sa.out, dump(report));
            std::fprintf(stderr, "%d of %d replications converged\n", st.n_converged, st.n_runs);
        }
    });

    // ---- predict-delay -----------------------------------------------------
    DelayArgs da;
    auto* pd = app.add_subcommand("predict-delay",
                                  "Closed-form expected delay to steady state from a uniformly "
                                  "random initial channel assignment");
    pd->add_option("--nodes", da.nodes, "Total node count");
    pd->add_option("--channels", da.channels, "Channel count");
    pd->add_option("--period", da.period, "Beacon period T in seconds");
    pd->add_option("--p-sw0", da.p_sw0, "Initial per-period switch probability");
    pd->add_option("--beta", da.beta, "Switch-probability adaptation factor");
    pd->add_option("--Z", da.Z, "Inactivity periods before a forced attempt");
    pd->add_option("--kss", da.kss, "Settling periods added after the last departure");
    pd->add_option("--mode", da.mode, "Composition probability model")
        ->check(CLI::IsMember({"as-printed", "multinomial"}));
    pd->add_option("--limit", da.limit, "Refuse enumerations larger than this many compositions");
    pd->add_option("--out", da.out, "Write the JSON estimate here instead of stdout");
    pd->add_option("--breakdown-out", da.breakdown_out, "Write the per-composition CSV here");
    pd->callback([&] {
        const tfdma::DelayParams p = delay_params_of(da.nodes, da.channels, da.period, da.p_sw0,
                                                     da.beta, da.Z, da.kss);
        const bool keep = !da.breakdown_out.empty();
        const tfdma::DelayEstimate est = tfdma::expected_delay(p, parse_mode(da.mode), da.limit, keep);
        ordered_json j = tfdma::delay_estimate_to_json(est, p);
        j["n_compositions"] = tfdma::count_compositions(p.w_tot, p.channels);
        emit(da.out, dump(j));
        if (keep) tfdma::write_text_file(da.breakdown_out, tfdma::delay_breakdown_to_csv(est));
    });

    // ---- analyze-matrix ----------------------------------------------------
    MatrixArgs ma;
    auto* am = app.add_subcommand("analyze-matrix",
                                  "Expected-flow transition matrix for one occupancy vector: "
                                  "entries, column sums, spectral radius, one step, and the "
                                  "balance iteration");
    am->add_option("--w", ma.w, "Per-channel occupancy, comma-separated")->required()->delimiter(',');
    am->add_option("--p-sw", ma.p_sw, "Per-channel switch probability (single value broadcasts)")
        ->delimiter(',');
    am->add_option("--s", ma.s, "Per-channel hop offset (single value broadcasts)")->delimiter(',');
    am->add_option("--out", ma.out, "Write the JSON report here instead of stdout");
    am->callback([&] {
        const int C = static_cast<int>(ma.w.size());
        if (C < 2) throw tfdma::invalid_input("--w needs at least two channels");
        const std::vector<double> p_sw = broadcast(ma.p_sw, C, "--p-sw");
        const std::vector<int> s = broadcast(ma.s, C, "--s");
        const tfdma::SwitchRates rates = tfdma::SwitchRates::from(ma.w, p_sw, s);
        const tfdma::TransitionMatrix G = tfdma::build_G(ma.w, rates);

        std::vector<double> col_sums(static_cast<std::size_t>(C), 0.0);
        for (int c = 0; c < C; ++c)
            for (int r = 0; r < C; ++r) col_sums[static_cast<std::size_t>(c)] += G.at(r, c);

        double total = 0.0;
        for (double v : ma.w) total += v;
        const int w_tot = static_cast<int>(std::llround(total));

        ordered_json j;
        j["w"] = ma.w;
        j["p_sw"] = p_sw;
        j["s"] = s;
        j["g"] = rates.g;
        j["G"] = tfdma::matrix_to_json(G);
        j["column_sums"] = col_sums;
        j["spectral_radius"] = tfdma::spectral_radius(G);
        j["is_fixed_point"] = tfdma::is_fixed_point(ma.w, w_tot, C);
        j["next"] = tfdma::step_expected(ma.w, rates);
        const tfdma::FluidResult fluid = tfdma::iterate_to_balance(ma.w, p_sw[0], s[0]);
        ordered_json fj;
        fj["balanced"] = fluid.balanced;
        fj["iterations"] = fluid.iterations;
        fj["final_w"] = fluid.w;
        j["fluid"] = fj;
        emit(ma.out, dump(j));
    });

    // ---- sweep --------------------------------------------------------------
    SweepArgs wa;
    auto* sw = app.add_subcommand(
        "sweep", "Grid over one parameter; one CSV row per point with the analytic delay "
                 "and, with --replications > 0, the simulated mean");
    sw->add_option("--nodes", wa.nodes, "Total node count");
    sw->add_option("--channels", wa.channels, "Channel count");
    sw->add_option("--period", wa.period, "Beacon period T in seconds");
    sw->add_option("--p-sw0", wa.p_sw0, "Initial per-period switch probability");
    sw->add_option("--beta", wa.beta, "Switch-probability adaptation factor");
    sw->add_option("--Z", wa.Z, "Inactivity periods before a forced attempt");
    sw->add_option("--kss", wa.kss, "Settling periods added after the last departure");
    sw->add_option("--mode", wa.mode, "Composition probability model")
        ->check(CLI::IsMember({"as-printed", "multinomial"}));
    sw->add_option("--sweep", wa.sweep,
                   "KEY=v1,v2,... over one of: p-sw0, beta, kss, Z, nodes, channels, period")
        ->required();
    sw->add_option("--replications", wa.replications, "Simulated runs per point (0 = analytic only)");
    sw->add_option("--max-time", wa.max_time, "Simulated horizon in seconds");
    auto* wo_seed = sw->add_option("--seed", wa.seed, "Random seed for the simulated runs");
    sw->add_option("--out", wa.out, "Write the CSV here instead of stdout");
    sw->callback([&] {
        const std::uint64_t seed = wo_seed->count() ? wa.seed : fallback_seed();
        const std::size_t eq = wa.sweep.find('=');
        if (eq == std::string::npos || eq == 0)
            throw tfdma::invalid_input("--sweep expects KEY=v1,v2,...");
        const std::string key = wa.sweep.substr(0, eq);
        std::vector<std::string> values;
        {
            std::string rest = wa.sweep.substr(eq + 1);
            std::size_t start = 0;
            while (start <= rest.size() && !rest.empty()) {
                const std::size_t comma = rest.find(',', start);
                const std::string tok = rest.substr(
                    start, comma == std::string::npos ? std::string::npos : comma - start);
                if (!tok.empty()) values.push_back(tok);
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
        }
        if (values.size() > 10000) throw tfdma::invalid_input("sweep grid exceeds 10000 points");
        if (wa.replications < 0) throw tfdma::invalid_input("replications must be >= 0");

        std::string csv =
            "parameter,value,analytic_delay_s,expected_periods,sim_mean_s,sim_n_converged,"
            "sim_n_runs\n";
        for (const std::string& vs : values) {
            tfdma::DelayParams p = delay_params_of(wa.nodes, wa.channels, wa.period, wa.p_sw0,
                                                   wa.beta, wa.Z, wa.kss);
            if (key == "p-sw0") p.p_sw_0 = parse_double(vs, key);
            else if (key == "beta") p.beta = parse_double(vs, key);
            else if (key == "kss") p.k_ss = parse_double(vs, key);
            else if (key == "Z") p.Z = parse_long(vs, key);
            else if (key == "nodes") p.w_tot = static_cast<int>(parse_long(vs, key));
            else if (key == "channels") p.channels = static_cast<int>(parse_long(vs, key));
            else if (key == "period") p.period_T = parse_double(vs, key);
            else throw tfdma::invalid_input("unknown sweep parameter '" + key + "'");

            const tfdma::DelayEstimate est =
                tfdma::expected_delay(p, parse_mode(wa.mode), 10'000'000, false);
            csv += key + "," + vs + "," + num(est.total_seconds) + "," + num(est.expected_periods);
            if (wa.replications > 0) {
                const tfdma::DistStats st = tfdma::convergence_time_distribution(
                    sim_config_of(p, seed, wa.max_time), wa.replications);
                csv += ",";
                if (st.n_converged > 0) csv += num(st.mean);
                csv += "," + std::to_string(st.n_converged) + "," + std::to_string(st.n_runs);
            } else {
                csv += ",,,";
            }
            csv += "\n";
        }
        emit(wa.out, csv);
    });

    // ---- compare-reference ---------------------------------------------------
    CompareArgs ca;
    auto* cr = app.add_subcommand(
        "compare-reference",
        "Analytic prediction and simulated mean for the five reference configurations, "
        "side by side with the published measurements");
    cr->add_option("--replications", ca.replications, "Simulated runs per configuration");
    cr->add_option("--max-time", ca.max_time, "Simulated horizon in seconds");
    cr->add_option("--mode", ca.mode, "Composition probability model")
        ->check(CLI::IsMember({"as-printed", "multinomial"}));
    auto* co_seed = cr->add_option("--seed", ca.seed, "Random seed for the simulated runs");
    cr->add_option("--out", ca.out, "Write the CSV here instead of stdout");
    cr->callback([&] {
        const std::uint64_t seed = co_seed->count() ? ca.seed : fallback_seed();
        if (ca.replications < 1) throw tfdma::invalid_input("replications must be >= 1");
        std::string csv =
            "nodes,channels,predicted_delay_s,sim_mean_s,sim_sem_s,sim_n_converged,sim_n_runs,"
            "reference_measured_s,reference_measured_sd_s,reference_predicted_s\n";
        for (const ReferenceRow& row : kReference) {
            tfdma::DelayParams p;
            p.w_tot = row.nodes;
            p.channels = row.channels;
            const tfdma::DelayEstimate est =
                tfdma::expected_delay(p, parse_mode(ca.mode), 10'000'000, false);
            const tfdma::DistStats st = tfdma::convergence_time_distribution(
                sim_config_of(p, seed, ca.max_time), ca.replications);
            csv += std::to_string(row.nodes) + "," + std::to_string(row.channels) + "," +
                   num(est.total_seconds) + ",";
            if (st.n_converged > 0) csv += num(st.mean) + "," + num(st.sem);
            else csv += ",";
            csv += "," + std::to_string(st.n_converged) + "," + std::to_string(st.n_runs) + "," +
                   num(row.measured_s) + "," + num(row.measured_sd_s) + "," +
                   num(row.predicted_s) + "\n";
        }
        emit(ca.out, csv);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        ordered_json err;
        err["error"] = e.what();
        std::cerr << err.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        ordered_json err;
        err["error"] = e.what();
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}

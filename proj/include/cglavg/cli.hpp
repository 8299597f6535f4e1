#pragma once

// Subcommand dispatch for the cglavg tool.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "coefficients.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "experiments.hpp"
#include "integrator.hpp"
#include "io.hpp"
#include "measures.hpp"

namespace cglavg {

inline constexpr const char* kVersion = "cglavg 0.1.0";

enum ExitCode : int { exit_pass = 0, exit_internal = 1, exit_condition = 2, exit_trend = 3 };

inline const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> s{"check",       "simulate", "bogolyubov1", "bogolyubov2",
                                            "periodicity", "global",   "wasserstein"};
    return s;
}

struct RunManifest {
    std::string config_path;  ///< empty: built-in defaults
    std::string config_hash;
    std::string out_dir = ".";
    std::string subcommand;
    std::string timestamp;
    std::string version = kVersion;
    std::vector<std::string> positional;
};

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    bool quick = false;
};

/// --seed / --paths replace config values; --quick quarters path counts,
/// bootstrap replicates and the first-order horizon.
inline void apply_overrides(FullConfig& cfg, const CliOverrides& o) {
    ExperimentConfig& e = cfg.experiment;
    if (o.seed) e.seed = *o.seed;
    if (o.paths) e.n_paths = *o.paths;
    if (o.quick) {
        e.n_paths = std::max<std::size_t>(2, e.n_paths / 4);
        e.bootstrap_samples /= 4;
        e.horizon /= 4.0;
    }
    validate(e);
}

namespace detail {

inline std::vector<std::pair<std::string, std::string>> run_header(const RunManifest& m, const FullConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> h;
    h.emplace_back("version", m.version);
    h.emplace_back("subcommand", m.subcommand);
    h.emplace_back("config_path", m.config_path.empty() ? "(defaults)" : m.config_path);
    h.emplace_back("config_hash", m.config_hash);
    for (const auto& line : config_echo(cfg)) h.emplace_back("config", line);
    return h;
}

inline std::string out_path(const RunManifest& m, const std::string& name) {
    return (std::filesystem::path(m.out_dir) / name).string();
}

inline std::string eps_tag(double eps) {
    std::string s = exact_text(eps);
    for (char& c : s)
        if (c == '.') c = 'p';
    return s;
}

inline void write_manifest(const RunManifest& m) {
    std::string text;
    text += "version = " + m.version + "\n";
    text += "subcommand = " + m.subcommand + "\n";
    text += "config_path = " + (m.config_path.empty() ? std::string("(defaults)") : m.config_path) + "\n";
    text += "config_hash = " + m.config_hash + "\n";
    text += "out_dir = " + m.out_dir + "\n";
    text += "timestamp = " + m.timestamp + "\n";
    write_text(out_path(m, m.subcommand + "_manifest.txt"), text);
}

inline std::vector<std::pair<std::string, std::string>> with_conditions(
    std::vector<std::pair<std::string, std::string>> header, const ExperimentConfig& e, const ConditionReport& rep) {
    const CoefficientSet set = make_family(e);
    for (const auto& kv : describe(e, set, rep)) header.push_back(kv);
    return header;
}

inline int run_check(const RunManifest& m, const FullConfig& cfg, std::ostream& out) {
    const ExperimentConfig& e = cfg.experiment;
    const CoefficientSet set = make_family(e);
    const ConditionReport rep = check_conditions(set);
    CsvTable t;
    t.metadata = with_conditions(run_header(m, cfg), e, rep);
    t.header = {"quantity", "value", "holds", "claimed", "worst_ratio"};
    for (const Margin* mg : {&rep.gamma_floor, &rep.gap1, &rep.gap2, &rep.p_max})
        t.rows.push_back({mg->name, exact_text(mg->value), mg->holds ? "yes" : "no", "", ""});
    for (const auto& h : rep.hypotheses)
        t.rows.push_back({h.name, "", h.holds ? "yes" : "no", exact_text(h.claimed), exact_text(h.worst_ratio)});
    write_text(out_path(m, "check_conditions.csv"), t.render());

    const AveragedSet avg = kbm_average(set, e.kbm_T_grid, e.kbm_t_probes);
    CsvTable k;
    k.metadata = run_header(m, cfg);
    k.metadata.emplace_back("kbm_converged", avg.converged ? "yes" : "no");
    k.header = {"T", "delta_gamma", "delta_f", "delta_g", "delta_gamma_raw", "delta_f_raw", "delta_g_raw"};
    const auto& mp = avg.modulus_profiles;
    for (std::size_t i = 0; i < mp.T_grid.size(); ++i)
        k.rows.push_back({exact_text(mp.T_grid[i]), exact_text(mp.delta_gamma[i]), exact_text(mp.delta_f[i]),
                          exact_text(mp.delta_g[i]), exact_text(mp.delta_gamma_raw[i]),
                          exact_text(mp.delta_f_raw[i]), exact_text(mp.delta_g_raw[i])});
    write_text(out_path(m, "check_kbm_moduli.csv"), k.render());

    out << "family " << set.name << ": lambda* = " << rep.lambda_star << "\n";
    for (const Margin* mg : {&rep.gamma_floor, &rep.gap1, &rep.gap2, &rep.p_max})
        out << "  margin " << mg->name << " = " << mg->value << (mg->holds ? "  ok" : "  FAIL") << "\n";
    for (const auto& h : rep.hypotheses)
        out << "  " << h.name << " claimed " << h.claimed << ", worst ratio " << h.worst_ratio
            << (h.holds ? "  ok" : "  REFUTED") << "\n";
    out << "  KBM moduli " << (avg.converged ? "decay" : "do not decay") << "\n";
    const bool ok = rep.gamma_floor.holds && rep.gap1.holds && rep.hypotheses_hold();
    return ok ? exit_pass : exit_condition;
}

inline int run_simulate(const RunManifest& m, const FullConfig& cfg, std::ostream& out) {
    const ExperimentConfig& e = cfg.experiment;
    const CoefficientSet base = make_family(e);
    const ConditionReport rep = check_conditions(base);
    require_hypotheses(rep);
    const CoefficientSet set = base.with_epsilon(cfg.simulate.epsilon);
    const double dt = fitting_step(e.horizon, step_for(e, cfg.simulate.epsilon));
    const IntegratorConfig ic = integrator_for(e, dt);
    const SpectralField init = e.init_amplitude * benchmark_forcing_field(set.grid);
    const EnsembleResult res =
        solve_ensemble([&](std::uint64_t) { return init; }, e.start_time, e.horizon, ic, set, e.n_paths, e.seed);

    CsvTable t;
    t.metadata = with_conditions(run_header(m, cfg), e, rep);
    t.metadata.emplace_back("epsilon", exact_text(cfg.simulate.epsilon));
    t.metadata.emplace_back("dt", exact_text(dt));
    t.metadata.emplace_back("blown_paths", std::to_string(res.blown_paths.size()));
    t.header = {"quantity", "mean", "std_error", "count"};
    const auto row = [&](const std::string& name, const Estimate& est) {
        t.rows.push_back({name, exact_text(est.mean), exact_text(est.std_error), std::to_string(est.count)});
    };
    row("E sup ||u||^2", res.moments.sup_l2_p1);
    row("E sup ||u||^4", res.moments.sup_l2_p2);
    row("E int ||u||_1^2", res.moments.int_h1_squared);
    row("E int gamma ||u||_4^4", res.moments.int_gamma_l4);
    write_text(out_path(m, "simulate_moments.csv"), t.render());

    CsvTable tm;
    tm.metadata = run_header(m, cfg);
    tm.header = {"t", "second_moment"};
    for (std::size_t i = 0; i < res.times.size(); ++i)
        tm.rows.push_back({exact_text(res.times[i]), exact_text(second_moment(res.measures[i]))});
    write_text(out_path(m, "simulate_second_moment.csv"), tm.render());
    if (cfg.simulate.write_samples) write_samples(out_path(m, "simulate_terminal.cglf"), res.measures.back().samples());
    out << "simulated " << e.n_paths << " paths at epsilon " << cfg.simulate.epsilon << ", dt " << dt
        << "; E sup ||u||^2 = " << res.moments.sup_l2_p1.mean << "\n";
    return exit_pass;
}

inline void print_report(const ConvergenceReport& rep, std::ostream& out) {
    out << rep.experiment << ":\n";
    for (const auto& r : rep.rows)
        out << "  epsilon " << r.epsilon << "  estimate " << r.estimate << "  CI [" << r.ci_low << ", " << r.ci_high
            << "]\n";
    for (const auto& n : rep.notes) out << "  note: " << n << "\n";
    out << "  verdict " << (rep.verdict ? "PASS" : "FAIL") << " (monotone " << (rep.monotone ? "yes" : "no")
        << ", final below " << rep.threshold << " " << (rep.below_threshold ? "yes" : "no") << ")\n";
}

inline int emit_convergence(const RunManifest& m, const FullConfig& cfg, const ConvergenceReport& rep,
                            const std::string& stem, std::ostream& out) {
    write_text(out_path(m, stem + ".csv"), convergence_csv(rep, run_header(m, cfg)).render());
    for (std::size_t i = 0; i < rep.time_rows.size() && i < rep.rows.size(); ++i) {
        auto meta = run_header(m, cfg);
        meta.emplace_back("experiment", rep.experiment);
        meta.emplace_back("epsilon", exact_text(rep.rows[i].epsilon));
        write_text(out_path(m, stem + "_eps" + eps_tag(rep.rows[i].epsilon) + ".csv"),
                   time_csv(rep.time_rows[i], meta).render());
    }
    print_report(rep, out);
    return rep.verdict ? exit_pass : exit_trend;
}

inline int run_periodicity(const RunManifest& m, const FullConfig& cfg, std::ostream& out) {
    const PeriodicityReport rep = run_periodicity_check(cfg.experiment);
    auto meta = run_header(m, cfg);
    for (const auto& kv : rep.metadata) meta.push_back(kv);
    meta.emplace_back("epsilon", exact_text(rep.epsilon));
    meta.emplace_back("dt", exact_text(rep.dt));
    meta.emplace_back("floor", exact_text(rep.floor));
    meta.emplace_back("verdict", rep.pass ? "PASS" : "FAIL");
    write_text(out_path(m, "periodicity.csv"), time_csv(rep.rows, meta).render());
    out << "periodicity: P = " << rep.period << ", probe " << rep.probe_period << ", floor " << rep.floor
        << ", max W2 " << rep.max_w2 << "  " << (rep.pass ? "PASS" : "FAIL") << "\n";
    return rep.pass ? exit_pass : exit_trend;
}

inline int run_wasserstein(const RunManifest& m, std::ostream& out) {
    if (m.positional.size() != 2) throw InvalidArgument("wasserstein needs two sample files");
    const EmpiricalMeasure a(read_samples(m.positional[0]));
    const EmpiricalMeasure b(read_samples(m.positional[1]));
    const double w = wasserstein2(a, b);
    std::string s = exact_text(w);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    out << s << "\n";
    return exit_pass;
}

}  // namespace detail

/// Runs one subcommand; CONDITION errors become exit 2, trend failures 3.
/// Other exceptions propagate to the caller (exit 1).
inline int dispatch(const RunManifest& m, const FullConfig& cfg, std::ostream& out) {
    if (std::find(subcommands().begin(), subcommands().end(), m.subcommand) == subcommands().end())
        throw InvalidArgument("unknown subcommand '" + m.subcommand + "'");
    if (m.subcommand == "wasserstein") return detail::run_wasserstein(m, out);
    std::filesystem::create_directories(m.out_dir);
    detail::write_manifest(m);
    try {
        if (m.subcommand == "check") return detail::run_check(m, cfg, out);
        if (m.subcommand == "simulate") return detail::run_simulate(m, cfg, out);
        if (m.subcommand == "bogolyubov1")
            return detail::emit_convergence(m, cfg, run_first_bogolyubov(cfg.experiment), "bogolyubov1", out);
        if (m.subcommand == "bogolyubov2")
            return detail::emit_convergence(m, cfg, run_second_bogolyubov(cfg.experiment), "bogolyubov2", out);
        if (m.subcommand == "global")
            return detail::emit_convergence(m, cfg, run_global_averaging(cfg.experiment), "global", out);
        return detail::run_periodicity(m, cfg, out);
    } catch (const ConditionError& e) {
        out << "CONDITION: " << e.what() << "\n";
        return exit_condition;
    }
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace cglavg

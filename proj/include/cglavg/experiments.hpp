#pragma once

// Monte Carlo drivers for the averaging experiments: first-order (pathwise
// error on a finite horizon), second-order (laws of the L^2-bounded
// solutions), periodicity of those laws, and the global (attractor-type)
// comparison over one period.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "coefficients.hpp"
#include "errors.hpp"
#include "integrator.hpp"
#include "measures.hpp"
#include "noise.hpp"
#include "parallel.hpp"
#include "torus.hpp"

namespace cglavg {

struct ExperimentConfig {
    std::string family = "benchmark_A";
    BenchmarkParams params;
    double common_omega = 1.0;

    int dimension = 1;
    int modes = 32;
    double period = 2.0 * std::numbers::pi;
    double dealias_fraction = 2.0 / 3.0;

    Scheme scheme = Scheme::exponential_euler;
    std::size_t galerkin_n = 0;
    double blow_up_threshold = 1e6;
    /// Fixed step; 0 selects epsilon / steps_per_epsilon for every epsilon.
    double dt = 0.0;
    double steps_per_epsilon = 40.0;

    std::vector<double> epsilon_grid{0.5, 0.1, 0.02};
    std::size_t n_paths = 256;
    std::uint64_t seed = 20240601;

    /// First-order window [start_time, start_time + horizon].
    double start_time = 0.0;
    double horizon = 2.0;
    /// Initial datum: init_amplitude * h (the built-in forcing shape).
    double init_amplitude = 0.5;

    /// Second-order eval times (must sit on every dt lattice used).
    std::vector<double> eval_times{0.0, 0.25, 0.5, 0.75, 1.0};
    /// Replace eval_times by global_points phases over one period of each
    /// epsilon-system (the same grid the global comparison uses).
    bool eval_over_period = false;
    std::vector<double> depth_schedule{4.0, 8.0, 16.0};
    double pullback_tol = 1e-4;

    std::size_t bootstrap_samples = 40;
    /// Final-epsilon estimate must fall below these.
    double threshold_first = 0.05;
    double threshold_second = 0.05;

    /// KBM windows in fast time and their start probes.
    std::vector<double> kbm_T_grid{1.0, 10.0, 100.0, 1000.0};
    std::vector<double> kbm_t_probes{0.0, 0.7, 1.9};

    double periodicity_epsilon = 1.0;
    std::size_t phase_points = 8;
    double probe_period_factor = 1.0;
    /// Period used when the family is time independent (any P is a period).
    double fallback_period = 2.0 * std::numbers::pi;

    std::size_t global_points = 8;
};

/// Step used for a given epsilon.
inline double step_for(const ExperimentConfig& c, double eps) {
    return c.dt > 0.0 ? c.dt : eps / c.steps_per_epsilon;
}

inline void validate(const ExperimentConfig& c) {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (c.epsilon_grid.empty()) fail("epsilon_grid is empty");
    for (std::size_t i = 0; i < c.epsilon_grid.size(); ++i) {
        const double e = c.epsilon_grid[i];
        if (!(e > 0.0 && e <= 1.0)) fail("epsilon values must lie in (0, 1]");
        if (i > 0 && !(e < c.epsilon_grid[i - 1])) fail("epsilon_grid must be strictly decreasing");
        if (c.dt > 0.0 && c.dt > e / 20.0)
            fail("dt > epsilon/20 (dt = " + std::to_string(c.dt) + ", epsilon = " + std::to_string(e) + ")");
    }
    if (c.dt < 0.0) fail("dt must be positive (or 0 for epsilon-relative steps)");
    if (c.dt == 0.0 && !(c.steps_per_epsilon >= 20.0)) fail("dt > epsilon/20 (steps_per_epsilon < 20)");
    if (c.n_paths < 2) fail("paths must be >= 2");
    if (!(c.horizon > 0.0)) fail("horizon must be positive");
    if (c.eval_times.empty()) fail("eval_times is empty");
    for (std::size_t i = 1; i < c.eval_times.size(); ++i)
        if (!(c.eval_times[i] > c.eval_times[i - 1])) fail("eval_times must be strictly increasing");
    if (c.depth_schedule.empty()) fail("depth_schedule is empty");
    for (std::size_t i = 0; i < c.depth_schedule.size(); ++i)
        if (!(c.depth_schedule[i] > 0.0) || (i > 0 && !(c.depth_schedule[i] > c.depth_schedule[i - 1])))
            fail("depth_schedule must be positive and increasing");
    if (!(c.pullback_tol > 0.0)) fail("pullback_tol must be positive");
    if (!(c.threshold_first > 0.0) || !(c.threshold_second > 0.0)) fail("thresholds must be positive");
    if (c.phase_points < 2 || c.phase_points % 2 != 0) fail("phase_points must be even and >= 2");
    if (!(c.probe_period_factor > 0.0)) fail("probe_period_factor must be positive");
    if (c.global_points < 2) fail("global_points must be >= 2");
    if (!(c.periodicity_epsilon > 0.0 && c.periodicity_epsilon <= 1.0))
        fail("periodicity_epsilon must lie in (0, 1]");
}

struct ReportRow {
    double epsilon = 0.0;
    double estimate = 0.0;
    double ci_low = 0.0, ci_high = 0.0;
    std::size_t n_paths = 0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    bool completed = true;
};

/// W_2 (or error) against time for one run.
struct TimeRow {
    double t = 0.0;
    double w2 = 0.0;
    double ci_low = 0.0, ci_high = 0.0;
};

struct ConvergenceReport {
    std::string experiment;
    std::vector<ReportRow> rows;
    /// Per-epsilon time-resolved rows (second-order and global runs).
    std::vector<std::vector<TimeRow>> time_rows;
    double threshold = 0.0;
    bool monotone = false;
    bool below_threshold = false;
    bool verdict = false;
    /// Set when some epsilon did not complete (blow-up or pullback failure).
    bool partial = false;
    std::vector<std::string> notes;
    ConditionReport conditions;
    std::vector<std::pair<std::string, std::string>> metadata;
};

struct PeriodicityReport {
    double period = 0.0;        ///< physical period P
    double probe_period = 0.0;  ///< shift actually tested
    double epsilon = 0.0;
    double dt = 0.0;
    /// Independent-sample floor: mean over phases of W_2 between two
    /// independent ensembles at the same time.
    double floor = 0.0;
    std::vector<double> floor_per_phase;
    std::vector<TimeRow> rows;  ///< W_2(mu(t_j), mu(t_j + P')) with bootstrap CI
    double max_w2 = 0.0;
    bool pass = false;          ///< every phase within floor + 2 CI half-width
    ConditionReport conditions;
    std::vector<std::pair<std::string, std::string>> metadata;
};

namespace detail {

inline std::string fmt_double(double x) {
    std::ostringstream o;
    o.precision(10);
    o << x;
    return o.str();
}

/// Percentile bootstrap interval of `stat` over resampled index sets.
template <class Stat>
std::pair<double, double> bootstrap_interval(std::size_t n, std::size_t B, std::uint64_t seed, Stat&& stat) {
    if (B == 0) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        const double v = stat(idx);
        return {v, v};
    }
    std::vector<double> vals(B);
    std::vector<std::size_t> idx(n);
    for (std::size_t b = 0; b < B; ++b) {
        CounterRng rng(seed, 0xB0075000ull + b);
        for (std::size_t i = 0; i < n; ++i)
            idx[i] = std::min(n - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)));
        vals[b] = stat(idx);
    }
    std::sort(vals.begin(), vals.end());
    const auto lo = static_cast<std::size_t>(std::floor(0.025 * static_cast<double>(B - 1)));
    const auto hi = static_cast<std::size_t>(std::ceil(0.975 * static_cast<double>(B - 1)));
    return {vals[lo], vals[hi]};
}

inline EmpiricalMeasure pick(const std::vector<SpectralField>& samples, const std::vector<std::size_t>& idx) {
    std::vector<SpectralField> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(samples[i]);
    return EmpiricalMeasure(std::move(out));
}

inline std::vector<std::size_t> identity_index(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

/// Time-major view of p-major pullback states.
inline std::vector<std::vector<SpectralField>> by_time(const std::vector<std::vector<SpectralField>>& states) {
    std::vector<std::vector<SpectralField>> out;
    if (states.empty()) return out;
    out.resize(states.front().size());
    for (const auto& path : states)
        for (std::size_t j = 0; j < path.size(); ++j) out[j].push_back(path[j]);
    return out;
}

inline IntegratorConfig integrator_for(const ExperimentConfig& c, double dt) {
    IntegratorConfig ic;
    ic.dt = dt;
    ic.scheme = c.scheme;
    ic.galerkin_n = c.galerkin_n;
    ic.blow_up_threshold = c.blow_up_threshold;
    return ic;
}

/// Largest step <= nominal that divides `span` into whole steps.
inline double fitting_step(double span, double nominal) {
    const double k = std::ceil(span / nominal - 1e-9);
    return span / k;
}

inline void require_hypotheses(const ConditionReport& rep) {
    if (!rep.gamma_floor.holds) throw ConditionError("gamma(t) > |beta|/sqrt(3) fails (margin " +
                                                     fmt_double(rep.gamma_floor.value) + ")");
    for (const auto& h : rep.hypotheses)
        if (!h.holds)
            throw ConditionError("hypothesis " + h.name + " refuted (worst ratio " + fmt_double(h.worst_ratio) +
                                 (h.witness ? " at t = " + fmt_double(h.witness->t) : std::string()) + ")");
}

inline AveragedSet require_averaging(const CoefficientSet& set, const ExperimentConfig& c) {
    AveragedSet avg = kbm_average(set, c.kbm_T_grid, c.kbm_t_probes);
    if (!avg.converged) {
        std::string which;
        for (const auto& n : avg.nonconverged) which += (which.empty() ? "" : ", ") + n;
        throw ConditionError("KBM moduli do not decay (" + which + "); averaging hypotheses fail");
    }
    return avg;
}

inline void finish_trend(ConvergenceReport& rep) {
    rep.monotone = true;
    for (std::size_t i = 1; i < rep.rows.size(); ++i)
        if (!(rep.rows[i].completed && rep.rows[i - 1].completed && rep.rows[i].estimate < rep.rows[i - 1].estimate))
            rep.monotone = false;
    rep.below_threshold = !rep.rows.empty() && rep.rows.back().completed && rep.rows.back().estimate < rep.threshold;
    rep.verdict = rep.monotone && rep.below_threshold && !rep.partial;
}

}  // namespace detail

/// Builds the configured grid and family (at epsilon = 1).
inline CoefficientSet make_family(const ExperimentConfig& c) {
    const GridPtr grid = make_grid(c.dimension, c.modes, c.period, c.dealias_fraction);
    return builtin_family(c.family, c.params, grid, c.common_omega);
}

/// '# key: value' lines describing the run (no timestamps).
inline std::vector<std::pair<std::string, std::string>> describe(const ExperimentConfig& c,
                                                                 const CoefficientSet& set,
                                                                 const ConditionReport& rep) {
    using detail::fmt_double;
    std::vector<std::pair<std::string, std::string>> m;
    const auto& p = c.params;
    m.emplace_back("family", set.name + (set.verified ? " (built-in, constants verified)" : " (user, unverified)"));
    std::ostringstream fam;
    fam << "alpha=" << p.alpha << " beta=" << p.beta << " gamma0=" << p.gamma0 << " a_gamma=" << p.a_gamma
        << " c_f=" << p.c_f << " b0=" << p.b0 << " b1=" << p.b1 << " q1=" << p.q1 << " r=" << p.r
        << " sigma_scale=" << p.sigma_scale << " common_omega=" << c.common_omega;
    m.emplace_back("parameters", fam.str());
    std::ostringstream grid;
    grid << "d=" << c.dimension << " N=" << c.modes << " period=" << fmt_double(c.period)
         << " dealias=" << fmt_double(c.dealias_fraction) << " galerkin_n=" << c.galerkin_n;
    m.emplace_back("grid", grid.str());
    m.emplace_back("scheme", to_string(c.scheme));
    m.emplace_back("seed", std::to_string(c.seed));
    m.emplace_back("constants", "L_f=" + fmt_double(rep.constants.L_f) + " lambda_f=" +
                                    fmt_double(rep.constants.lambda_f) + " L_g=" + fmt_double(rep.constants.L_g) +
                                    " K=" + fmt_double(rep.constants.K));
    for (const Margin* mg : {&rep.gamma_floor, &rep.gap1, &rep.gap2, &rep.p_max})
        m.emplace_back("margin " + mg->name, fmt_double(mg->value) + (mg->holds ? " ok" : " FAIL"));
    for (const auto& h : rep.hypotheses)
        m.emplace_back("hypothesis " + h.name, "claimed=" + fmt_double(h.claimed) + " worst_ratio=" +
                                                   fmt_double(h.worst_ratio) + (h.holds ? " ok" : " REFUTED"));
    return m;
}

/// E sup_{t in [s, s+T]} ||u^eps(t) - u_bar(t)||^2 for each epsilon, with
/// u^eps and u_bar driven by the same Wiener path from the same datum.
inline ConvergenceReport run_first_bogolyubov(const ExperimentConfig& c) {
    validate(c);
    const CoefficientSet base = make_family(c);
    ConvergenceReport rep;
    rep.experiment = "first_bogolyubov";
    rep.threshold = c.threshold_first;
    rep.conditions = check_conditions(base);
    detail::require_hypotheses(rep.conditions);
    if (!rep.conditions.gap1.holds)
        throw ConditionError("first-order averaging needs lambda* - lambda_f - L_g^2/2 > 0 (gap1 = " +
                             detail::fmt_double(rep.conditions.gap1.value) + ")");
    const AveragedSet avg = detail::require_averaging(base, c);
    rep.metadata = describe(c, base, rep.conditions);
    rep.metadata.emplace_back("quantity", "E sup_t ||u_eps - u_bar||^2");
    rep.metadata.emplace_back("window", "[" + detail::fmt_double(c.start_time) + ", " +
                                            detail::fmt_double(c.start_time + c.horizon) + "]");

    const SpectralField init = c.init_amplitude * benchmark_forcing_field(base.grid);
    for (double eps : c.epsilon_grid) {
        const CoefficientSet set = base.with_epsilon(eps);
        const double dt = detail::fitting_step(c.horizon, step_for(c, eps));
        const IntegratorConfig ic = detail::integrator_for(c, dt);
        const std::size_t n = detail::step_count(c.horizon, dt);
        const Stepper proto_e(set, ic), proto_a(avg.averaged, ic);
        const WienerSampler sampler(c.seed, proto_e.channels(), dt);
        std::vector<double> sup_err(c.n_paths, 0.0);
        std::vector<char> blown(c.n_paths, 0);
        parallel_for(c.n_paths, [&](std::size_t p) {
            Stepper se = proto_e, sa = proto_a;
            const WienerSampler ps = sampler.for_path(p);
            SpectralField ue = init, ua = init;
            std::vector<double> dW(ps.channels());
            double worst = 0.0;
            try {
                for (std::size_t k = 0; k < n; ++k) {
                    const double t = c.start_time + static_cast<double>(k) * dt;
                    ps.step_increments(t, dt, dW);
                    se.advance(ue, t, dW);
                    sa.advance(ua, t, dW);
                    worst = std::max(worst, distance_squared(ue, ua));
                }
            } catch (const BlowUpError&) {
                blown[p] = 1;
            }
            sup_err[p] = worst;
        });
        std::vector<double> vals;
        for (std::size_t p = 0; p < c.n_paths; ++p)
            if (!blown[p]) vals.push_back(sup_err[p]);
        ReportRow row;
        row.epsilon = eps;
        row.dt = dt;
        row.seed = c.seed;
        row.n_paths = vals.size();
        if (static_cast<double>(c.n_paths - vals.size()) > 0.01 * static_cast<double>(c.n_paths)) {
            row.completed = false;
            row.estimate = std::numeric_limits<double>::quiet_NaN();
            row.ci_low = row.ci_high = row.estimate;
            rep.partial = true;
            rep.notes.push_back("epsilon " + detail::fmt_double(eps) + ": " +
                                std::to_string(c.n_paths - vals.size()) + " paths blew up");
            rep.rows.push_back(row);
            continue;
        }
        row.estimate = estimate_of(vals).mean;
        const auto ci = detail::bootstrap_interval(vals.size(), c.bootstrap_samples, c.seed,
                                                   [&](const std::vector<std::size_t>& idx) {
                                                       double acc = 0.0;
                                                       for (std::size_t i : idx) acc += vals[i];
                                                       return acc / static_cast<double>(idx.size());
                                                   });
        row.ci_low = ci.first;
        row.ci_high = ci.second;
        rep.rows.push_back(row);
    }
    detail::finish_trend(rep);
    return rep;
}

namespace detail {

/// Coupled pullback of the oscillating and averaged systems at `times`;
/// returns {eps states, averaged states}, both time-major.
inline std::pair<std::vector<std::vector<SpectralField>>, std::vector<std::vector<SpectralField>>>
coupled_pullback(const CoefficientSet& set, const CoefficientSet& averaged, const std::vector<double>& times,
                 const IntegratorConfig& ic, std::uint64_t seed, const ExperimentConfig& c,
                 std::vector<std::string>& notes) {
    const Stepper proto(set, ic);
    const WienerSampler sampler(seed, proto.channels(), ic.dt);
    const PullbackResult pe =
        pullback_bounded_solution(set, times, ic, sampler, c.n_paths, c.depth_schedule, c.pullback_tol);
    const PullbackResult pa =
        pullback_bounded_solution(averaged, times, ic, sampler, c.n_paths, c.depth_schedule, c.pullback_tol);
    notes.push_back("pullback depth " + fmt_double(pe.final_depth) + " / " + fmt_double(pa.final_depth) +
                    ", last gap " + fmt_double(pe.depth_gaps.empty() ? 0.0 : pe.depth_gaps.back()));
    std::vector<std::vector<SpectralField>> se, sa;
    for (const auto& m : pe.measures) se.push_back(m.samples());
    for (const auto& m : pa.measures) sa.push_back(m.samples());
    return {std::move(se), std::move(sa)};
}

/// Snaps times to the dt lattice.
inline std::vector<double> on_lattice(const std::vector<double>& times, double dt) {
    std::vector<double> out;
    for (double t : times) out.push_back(std::nearbyint(t / dt) * dt);
    return out;
}

/// global_points equally spaced times over one period of `set`, with a step
/// that divides their spacing.
inline std::pair<std::vector<double>, double> period_grid(const CoefficientSet& set, const ExperimentConfig& c,
                                                          double eps) {
    const double P =
        set.time_independent || set.period <= 0.0 ? c.fallback_period * eps : set.physical_period();
    const double spacing = P / static_cast<double>(c.global_points);
    const double dt = fitting_step(spacing, step_for(c, eps));
    std::vector<double> times;
    for (std::size_t j = 0; j < c.global_points; ++j)
        times.push_back(c.start_time + static_cast<double>(j) * spacing);
    return {times, dt};
}

}  // namespace detail

/// sup_t W_2(mu_eps(t), mu_bar(t)) over eval_times for each epsilon, where
/// mu_eps(t), mu_bar(t) are the laws of the pullback (L^2-bounded) solutions,
/// sampled on common Wiener paths.
inline ConvergenceReport run_second_bogolyubov(const ExperimentConfig& c) {
    validate(c);
    const CoefficientSet base = make_family(c);
    ConvergenceReport rep;
    rep.experiment = "second_bogolyubov";
    rep.threshold = c.threshold_second;
    rep.conditions = check_conditions(base);
    detail::require_hypotheses(rep.conditions);
    if (!rep.conditions.gap2.holds)
        throw ConditionError("second-order averaging needs lambda* - lambda_f - 9 L_g^2/2 > 0 (gap2 = " +
                             detail::fmt_double(rep.conditions.gap2.value) + ")");
    const AveragedSet avg = detail::require_averaging(base, c);
    rep.metadata = describe(c, base, rep.conditions);
    rep.metadata.emplace_back("quantity", "sup_t W2(mu_eps(t), mu_bar(t))");

    for (double eps : c.epsilon_grid) {
        const CoefficientSet set = base.with_epsilon(eps);
        double dt = step_for(c, eps);
        std::vector<double> times;
        if (c.eval_over_period)
            std::tie(times, dt) = detail::period_grid(set, c, eps);
        else
            times = detail::on_lattice(c.eval_times, dt);
        const IntegratorConfig ic = detail::integrator_for(c, dt);
        ReportRow row;
        row.epsilon = eps;
        row.dt = dt;
        row.seed = c.seed;
        row.n_paths = c.n_paths;
        std::vector<std::vector<SpectralField>> se, sa;
        try {
            std::tie(se, sa) = detail::coupled_pullback(set, avg.averaged, times, ic, c.seed, c, rep.notes);
        } catch (const NotConvergedError& e) {
            row.completed = false;
            rep.partial = true;
            rep.notes.push_back("epsilon " + detail::fmt_double(eps) + ": " + e.what());
        } catch (const BlowUpError& e) {
            row.completed = false;
            rep.partial = true;
            rep.notes.push_back("epsilon " + detail::fmt_double(eps) + ": " + e.what());
        }
        if (!row.completed) {
            row.estimate = row.ci_low = row.ci_high = std::numeric_limits<double>::quiet_NaN();
            rep.rows.push_back(row);
            rep.time_rows.emplace_back();
            continue;
        }
        const std::size_t n = c.n_paths;
        auto w2_at = [&](std::size_t j, const std::vector<std::size_t>& idx) {
            return wasserstein2(detail::pick(se[j], idx), detail::pick(sa[j], idx));
        };
        std::vector<TimeRow> trow;
        double sup = 0.0;
        const auto all = detail::identity_index(n);
        for (std::size_t j = 0; j < times.size(); ++j) {
            TimeRow tr;
            tr.t = times[j];
            tr.w2 = w2_at(j, all);
            const auto ci = detail::bootstrap_interval(n, c.bootstrap_samples, c.seed + j,
                                                       [&](const auto& idx) { return w2_at(j, idx); });
            tr.ci_low = ci.first;
            tr.ci_high = ci.second;
            sup = std::max(sup, tr.w2);
            trow.push_back(tr);
        }
        const auto ci = detail::bootstrap_interval(n, c.bootstrap_samples, c.seed, [&](const auto& idx) {
            double s = 0.0;
            for (std::size_t j = 0; j < times.size(); ++j) s = std::max(s, w2_at(j, idx));
            return s;
        });
        row.estimate = sup;
        row.ci_low = ci.first;
        row.ci_high = ci.second;
        rep.rows.push_back(row);
        rep.time_rows.push_back(std::move(trow));
    }
    detail::finish_trend(rep);
    return rep;
}

/// Tests mu(t + P') = mu(t) on phase_points times across one period, for the
/// pullback solution of the family at periodicity_epsilon with
/// P' = probe_period_factor * P.
inline PeriodicityReport run_periodicity_check(const ExperimentConfig& c) {
    validate(c);
    const CoefficientSet base = make_family(c);
    const CoefficientSet set = base.with_epsilon(c.periodicity_epsilon);
    PeriodicityReport rep;
    rep.conditions = check_conditions(base);
    detail::require_hypotheses(rep.conditions);
    if (!rep.conditions.gap1.holds)
        throw ConditionError("periodicity needs lambda* - lambda_f - L_g^2/2 > 0 (gap1 = " +
                             detail::fmt_double(rep.conditions.gap1.value) + ")");
    if (set.time_independent)
        rep.period = c.fallback_period;
    else if (set.period > 0.0)
        rep.period = set.physical_period();
    else
        throw InvalidArgument("family '" + set.name + "' has no common period");
    rep.epsilon = c.periodicity_epsilon;
    rep.probe_period = c.probe_period_factor * rep.period;
    const double spacing = rep.period / static_cast<double>(c.phase_points);
    const double shift_units = c.probe_period_factor * static_cast<double>(c.phase_points);
    if (std::abs(shift_units - std::nearbyint(shift_units)) > 1e-9)
        throw ConfigError("probe_period_factor * phase_points must be an integer");
    rep.dt = detail::fitting_step(spacing, step_for(c, c.periodicity_epsilon));
    const IntegratorConfig ic = detail::integrator_for(c, rep.dt);
    const auto shift = static_cast<std::size_t>(std::nearbyint(shift_units));

    std::vector<double> times;
    for (std::size_t j = 0; j < c.phase_points + shift; ++j)
        times.push_back(c.start_time + static_cast<double>(j) * spacing);
    rep.metadata = describe(c, base, rep.conditions);
    rep.metadata.emplace_back("quantity", "W2(mu(t), mu(t + P'))");
    rep.metadata.emplace_back("period", detail::fmt_double(rep.period));
    rep.metadata.emplace_back("probe_period", detail::fmt_double(rep.probe_period));

    const Stepper proto(set, ic);
    const WienerSampler sa(c.seed, proto.channels(), ic.dt);
    const WienerSampler sb(c.seed ^ 0x9E3779B97F4A7C15ull, proto.channels(), ic.dt);
    const PullbackResult pa = pullback_bounded_solution(set, times, ic, sa, c.n_paths, c.depth_schedule, c.pullback_tol);
    const std::vector<double> base_times(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(c.phase_points));
    const PullbackResult pb =
        pullback_bounded_solution(set, base_times, ic, sb, c.n_paths, c.depth_schedule, c.pullback_tol);

    const std::size_t n = c.n_paths;
    double floor_acc = 0.0;
    rep.pass = true;
    for (std::size_t j = 0; j < c.phase_points; ++j) {
        const double fl = wasserstein2(pa.measures[j], pb.measures[j]);
        rep.floor_per_phase.push_back(fl);
        floor_acc += fl;
    }
    rep.floor = floor_acc / static_cast<double>(c.phase_points);
    for (std::size_t j = 0; j < c.phase_points; ++j) {
        const auto& now = pa.measures[j].samples();
        const auto& later = pa.measures[j + shift].samples();
        auto w2 = [&](const std::vector<std::size_t>& idx) {
            return wasserstein2(detail::pick(now, idx), detail::pick(later, idx));
        };
        TimeRow tr;
        tr.t = times[j];
        tr.w2 = w2(detail::identity_index(n));
        const auto ci = detail::bootstrap_interval(n, c.bootstrap_samples, c.seed + j, w2);
        tr.ci_low = ci.first;
        tr.ci_high = ci.second;
        const double half = 0.5 * (tr.ci_high - tr.ci_low);
        if (tr.w2 > rep.floor + 2.0 * half) rep.pass = false;
        rep.max_w2 = std::max(rep.max_w2, tr.w2);
        rep.rows.push_back(tr);
    }
    return rep;
}

/// Hausdorff semidistance from {mu_eps(t)} to {mu_bar(t)} over one period of
/// the epsilon-system (global_points phases), for each epsilon.
inline ConvergenceReport run_global_averaging(const ExperimentConfig& c) {
    validate(c);
    const CoefficientSet base = make_family(c);
    ConvergenceReport rep;
    rep.experiment = "global_averaging";
    rep.threshold = c.threshold_second;
    rep.conditions = check_conditions(base);
    detail::require_hypotheses(rep.conditions);
    if (!rep.conditions.gap2.holds)
        throw ConditionError("global averaging needs gap2 > 0 (gap2 = " +
                             detail::fmt_double(rep.conditions.gap2.value) + ")");
    const AveragedSet avg = detail::require_averaging(base, c);
    rep.metadata = describe(c, base, rep.conditions);
    rep.metadata.emplace_back("quantity", "dist_H({mu_eps(t)}, {mu_bar(t)}) over one period");

    for (double eps : c.epsilon_grid) {
        const CoefficientSet set = base.with_epsilon(eps);
        const auto [times, dt] = detail::period_grid(set, c, eps);
        const IntegratorConfig ic = detail::integrator_for(c, dt);
        ReportRow row;
        row.epsilon = eps;
        row.dt = dt;
        row.seed = c.seed;
        row.n_paths = c.n_paths;
        std::vector<std::vector<SpectralField>> se, sa;
        try {
            std::tie(se, sa) = detail::coupled_pullback(set, avg.averaged, times, ic, c.seed, c, rep.notes);
        } catch (const NotConvergedError& e) {
            row.completed = false;
            rep.partial = true;
            rep.notes.push_back("epsilon " + detail::fmt_double(eps) + ": " + e.what());
        } catch (const BlowUpError& e) {
            row.completed = false;
            rep.partial = true;
            rep.notes.push_back("epsilon " + detail::fmt_double(eps) + ": " + e.what());
        }
        if (!row.completed) {
            row.estimate = row.ci_low = row.ci_high = std::numeric_limits<double>::quiet_NaN();
            rep.rows.push_back(row);
            rep.time_rows.emplace_back();
            continue;
        }
        auto dist = [&](const std::vector<std::size_t>& idx, std::vector<TimeRow>* rows) {
            std::vector<EmpiricalMeasure> A, B;
            for (std::size_t j = 0; j < times.size(); ++j) {
                A.push_back(detail::pick(se[j], idx));
                B.push_back(detail::pick(sa[j], idx));
            }
            if (rows)
                for (std::size_t j = 0; j < times.size(); ++j) {
                    double best = std::numeric_limits<double>::infinity();
                    for (const auto& b : B) best = std::min(best, wasserstein2(A[j], b));
                    rows->push_back({times[j], best, best, best});
                }
            return hausdorff_semidistance(A, B);
        };
        std::vector<TimeRow> trow;
        row.estimate = dist(detail::identity_index(c.n_paths), &trow);
        const auto ci = detail::bootstrap_interval(c.n_paths, c.bootstrap_samples, c.seed,
                                                   [&](const auto& idx) { return dist(idx, nullptr); });
        row.ci_low = ci.first;
        row.ci_high = ci.second;
        rep.rows.push_back(row);
        rep.time_rows.push_back(std::move(trow));
    }
    detail::finish_trend(rep);
    return rep;
}

}  // namespace cglavg

#pragma once

// Time-oscillating coefficient families (gamma, f, g), their structural
// constants, KBM averages and the hypothesis checker.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "noise.hpp"
#include "torus.hpp"

namespace cglavg {

/// g(t, .) at a fixed time: additive amplitudes on the eigenbasis plus a
/// scalar multiplicative channel. Channel 0 is the multiplicative channel
/// w_0 (x <w, w_0>); channel j >= 1 maps w_j to amplitude * e_{mode_order[j-1]}.
struct DiffusionOp {
    std::vector<double> mode_amplitudes;
    double mult_scale = 0.0;

    /// Squared Hilbert-Schmidt norm of w -> G(x)[w] into H_0^m.
    double hs_norm_squared(const TorusGrid& grid, const SpectralField* x, int m = 0) const {
        const auto order = grid.mode_order();
        double acc = 0.0;
        for (std::size_t j = 0; j < mode_amplitudes.size() && j < order.size(); ++j) {
            const double w = m == 0 ? 1.0 : std::pow(grid.eigenvalue(order[j]), m);
            acc += mode_amplitudes[j] * mode_amplitudes[j] * w;
        }
        if (x != nullptr && mult_scale != 0.0) {
            const double xn = sobolev_norm(*x, m);
            acc += mult_scale * mult_scale * xn * xn;
        }
        return acc;
    }
};

/// Squared HS norm of G1(x) - G2(x) into H_0^m.
inline double hs_distance_squared(const TorusGrid& grid, const DiffusionOp& a, const DiffusionOp& b,
                                  const SpectralField& x, int m = 0) {
    const auto order = grid.mode_order();
    const std::size_t n = std::max(a.mode_amplitudes.size(), b.mode_amplitudes.size());
    double acc = 0.0;
    for (std::size_t j = 0; j < n && j < order.size(); ++j) {
        const double aj = j < a.mode_amplitudes.size() ? a.mode_amplitudes[j] : 0.0;
        const double bj = j < b.mode_amplitudes.size() ? b.mode_amplitudes[j] : 0.0;
        const double w = m == 0 ? 1.0 : std::pow(grid.eigenvalue(order[j]), m);
        acc += (aj - bj) * (aj - bj) * w;
    }
    const double dm = a.mult_scale - b.mult_scale;
    if (dm != 0.0) {
        const double xn = sobolev_norm(x, m);
        acc += dm * dm * xn * xn;
    }
    return acc;
}

struct StructuralConstants {
    double L_f = 0.0;       ///< Lipschitz constant of f in L^2 (and H^1)
    double lambda_f = 0.0;  ///< one-sided constant <f(x)-f(y), x-y> <= lambda_f |x-y|^2
    double L_g = 0.0;       ///< Lipschitz constant of g into L_2(U, H_0^m), m = 0, 1, 2
    double K = 0.0;         ///< bound on |f(t,0)|, |f(t,0)|_1 and |g(t,0)|_{L_2(U,H_0^m)}
};

/// Parameters of the built-in family
///   gamma(t) = gamma0 + a_gamma cos(omega_gamma t)
///   f(t,x)   = c_f cos(omega_f t) x + (b0 + b1 sin(omega_b t)) h
///   g(t,x)w  = sum_k sigma_k (1 + q1 sin(omega_g t)) <w,w_k> e_k + r cos(omega_m t) x <w,w_0>
/// with sigma_k = sigma_scale (1 + lambda_k)^-2 and h a fixed unit-norm smooth field.
struct BenchmarkParams {
    double alpha = 0.5;
    double beta = 0.5;
    double gamma0 = 1.0;
    double a_gamma = 0.5;
    double omega_gamma = 1.0;
    double c_f = 0.2;
    double omega_f = 1.0;
    double b0 = 0.5;
    double b1 = 1.0;
    double omega_b = 1.0;
    double q1 = 0.0;
    double omega_g = 1.0;
    double r = 0.3;
    double omega_m = 0.0;
    double sigma_scale = 1.0;
};

/// A (gamma, f, g) family evaluated at physical time t through the fast time t / epsilon.
class CoefficientSet {
public:
    using GammaFn = std::function<double(double)>;
    using DriftFn = std::function<SpectralField(double, const SpectralField&)>;
    using DiffusionFn = std::function<DiffusionOp(double)>;

    std::string name;
    GridPtr grid;
    double alpha = 0.0;
    double beta = 0.0;
    GammaFn gamma;    ///< gamma(tau), tau the fast time
    DriftFn f;        ///< f(tau, x)
    DiffusionFn g;    ///< g(tau, .)
    StructuralConstants constants;
    double epsilon = 1.0;
    /// Constants were derived in closed form (false for user closures).
    bool verified = false;
    /// Coefficients do not depend on time.
    bool time_independent = false;
    /// Common period in fast time (0 when unknown or not periodic).
    double period = 0.0;
    /// Present for the built-in families; enables closed-form averages.
    std::optional<BenchmarkParams> benchmark;
    /// Disables the cubic term (linear verification runs only).
    bool cubic_enabled = true;

    double gamma_at(double t) const { return gamma(t / epsilon); }
    SpectralField f_at(double t, const SpectralField& x) const { return f(t / epsilon, x); }
    DiffusionOp g_at(double t) const { return g(t / epsilon); }

    /// Same family on time scale epsilon (gamma(t/eps), f(t/eps, .), g(t/eps, .)).
    CoefficientSet with_epsilon(double eps) const {
        if (!(eps > 0.0 && eps <= 1.0)) throw InvalidArgument("epsilon must lie in (0, 1]");
        CoefficientSet out = *this;
        out.epsilon = eps;
        return out;
    }

    /// Physical-time period of the coefficients (epsilon * fast period).
    double physical_period() const { return epsilon * period; }
};

/// The fixed smooth field h used by the built-in families (unit L^2 norm).
inline SpectralField benchmark_forcing_field(const GridPtr& grid) {
    SpectralField h(grid);
    h[grid->flat_index({1, 0, 0})] = 1.0;
    h[grid->flat_index({-2, 0, 0})] = 0.5;
    h *= 1.0 / std::sqrt(norm_squared(h));
    return h;
}

namespace detail {

inline std::vector<double> benchmark_sigmas(const TorusGrid& grid, double scale) {
    std::vector<double> s;
    s.reserve(grid.mode_order().size());
    for (std::size_t flat : grid.mode_order()) {
        const double l = grid.eigenvalue(flat);
        s.push_back(scale / ((1.0 + l) * (1.0 + l)));
    }
    return s;
}

inline double common_period(const BenchmarkParams& p) {
    double omega = 0.0;
    for (double w : {p.omega_gamma, p.omega_f, p.omega_b, p.omega_g, p.omega_m}) {
        if (w == 0.0) continue;
        if (omega == 0.0)
            omega = std::abs(w);
        else if (std::abs(std::abs(w) - omega) > 1e-14 * omega)
            return 0.0;
    }
    return omega == 0.0 ? 0.0 : 2.0 * std::numbers::pi / omega;
}

}  // namespace detail

/// Builds one of the built-in families on `grid`:
///   benchmark_A   - the parameters as given;
///   constant      - the same formulas with every frequency set to 0;
///   periodic_pair - every frequency set to `common_omega` (period 2 pi / omega).
inline CoefficientSet builtin_family(const std::string& name, BenchmarkParams p, const GridPtr& grid,
                                     double common_omega = 1.0) {
    if (name == "constant") {
        p.omega_gamma = p.omega_f = p.omega_b = p.omega_g = p.omega_m = 0.0;
    } else if (name == "periodic_pair") {
        if (!(common_omega > 0.0)) throw InvalidArgument("periodic_pair needs a positive common frequency");
        p.omega_gamma = p.omega_f = p.omega_b = p.omega_g = p.omega_m = common_omega;
    } else if (name != "benchmark_A") {
        throw InvalidArgument("unknown family '" + name + "' (expected benchmark_A, constant or periodic_pair)");
    }
    const double floor = std::abs(p.beta) / std::sqrt(3.0);
    const double gamma_min = p.gamma0 - (p.omega_gamma == 0.0 ? -p.a_gamma : std::abs(p.a_gamma));
    if (!(gamma_min >= floor))
        throw ConditionError("gamma floor violated: min gamma " + std::to_string(gamma_min) +
                             " < |beta|/sqrt(3) = " + std::to_string(floor));

    CoefficientSet set;
    set.name = name;
    set.grid = grid;
    set.alpha = p.alpha;
    set.beta = p.beta;
    set.benchmark = p;
    set.verified = true;
    set.time_independent = p.omega_gamma == 0.0 && p.omega_f == 0.0 && p.omega_b == 0.0 &&
                           p.omega_g == 0.0 && p.omega_m == 0.0;
    set.period = detail::common_period(p);

    set.gamma = [p](double tau) { return p.gamma0 + p.a_gamma * std::cos(p.omega_gamma * tau); };

    const SpectralField h = benchmark_forcing_field(grid);
    set.f = [p, h](double tau, const SpectralField& x) {
        SpectralField out = (p.c_f * std::cos(p.omega_f * tau)) * x;
        out.axpy(p.b0 + p.b1 * std::sin(p.omega_b * tau), h);
        return out;
    };

    const auto sigmas = detail::benchmark_sigmas(*grid, p.sigma_scale);
    set.g = [p, sigmas](double tau) {
        DiffusionOp op;
        const double mod = 1.0 + p.q1 * std::sin(p.omega_g * tau);
        op.mode_amplitudes.resize(sigmas.size());
        for (std::size_t j = 0; j < sigmas.size(); ++j) op.mode_amplitudes[j] = sigmas[j] * mod;
        op.mult_scale = p.r * std::cos(p.omega_m * tau);
        return op;
    };

    StructuralConstants c;
    c.L_f = std::abs(p.c_f);
    // sup_t c_f cos(omega_f t): |c_f| when oscillating, c_f itself when frozen.
    c.lambda_f = p.omega_f == 0.0 ? p.c_f : std::abs(p.c_f);
    c.L_g = std::abs(p.r);
    const double forcing = std::abs(p.b0) + (p.omega_b == 0.0 ? 0.0 : std::abs(p.b1));
    const double h1 = sobolev_norm(h, 1);
    double sig_h2 = 0.0;
    for (std::size_t j = 0; j < sigmas.size(); ++j) {
        const double l = grid->eigenvalue(grid->mode_order()[j]);
        sig_h2 += sigmas[j] * sigmas[j] * std::max({1.0, l, l * l});
    }
    const double gmod = 1.0 + (p.omega_g == 0.0 ? 0.0 : std::abs(p.q1));
    c.K = std::max({forcing, forcing * h1, gmod * std::sqrt(sig_h2)});
    set.constants = c;
    return set;
}

/// Wraps user closures; constants are taken on trust and the set is flagged unverified.
inline CoefficientSet custom_family(std::string name, GridPtr grid, double alpha, double beta,
                                    CoefficientSet::GammaFn gamma, CoefficientSet::DriftFn f,
                                    CoefficientSet::DiffusionFn g, StructuralConstants constants,
                                    double period = 0.0) {
    CoefficientSet set;
    set.name = std::move(name);
    set.grid = std::move(grid);
    set.alpha = alpha;
    set.beta = beta;
    set.gamma = std::move(gamma);
    set.f = std::move(f);
    set.g = std::move(g);
    set.constants = constants;
    set.period = period;
    set.verified = false;
    return set;
}

/// Random field supported on the first `modes` entries of the P_n ordering,
/// rescaled to L^2 norm `target_norm`.
inline SpectralField random_field(const GridPtr& grid, CounterRng& rng, double target_norm,
                                  std::size_t modes) {
    SpectralField u(grid);
    const auto order = grid->mode_order();
    const std::size_t n = std::min(modes, order.size());
    for (std::size_t j = 0; j < n; ++j) {
        const double decay = 1.0 / (1.0 + 0.25 * static_cast<double>(j));
        u[order[j]] = Complex(rng.normal(), rng.normal()) * decay;
    }
    const double nrm = std::sqrt(norm_squared(u));
    if (nrm > 0.0) u *= target_norm / nrm;
    return u;
}

// ---------------------------------------------------------------------------
// KBM averaging

struct ModulusProfile {
    std::vector<double> T_grid;
    std::vector<double> delta_gamma_raw, delta_f_raw, delta_g_raw;
    /// Least nonincreasing majorants of the raw sup estimates on T_grid.
    std::vector<double> delta_gamma, delta_f, delta_g;
};

struct AveragedSet {
    double gamma_bar = 0.0;
    CoefficientSet::DriftFn f_bar;
    DiffusionOp g_bar;
    /// Time-independent set (gamma_bar, f_bar, g_bar), ready to integrate.
    CoefficientSet averaged;
    ModulusProfile modulus_profiles;
    /// False when some profile fails to decrease over the largest decade of T.
    bool converged = true;
    std::vector<std::string> nonconverged;
};

/// Composite midpoint nodes per averaging window.
inline constexpr int kKbmQuadratureNodes = 1000;

/// Midpoint-rule estimate of T^-1 int_t^{t+T} gamma(s) ds (fast time).
inline double window_mean_gamma(const CoefficientSet& set, double t, double T,
                                int nodes = kKbmQuadratureNodes) {
    const double h = T / nodes;
    double acc = 0.0;
    for (int i = 0; i < nodes; ++i) acc += set.gamma(t + (i + 0.5) * h);
    return acc / nodes;
}

/// Default probe fields for delta_f / delta_g: eight fields with L^2 norms
/// log-spaced over [0.1, 10].
inline std::vector<SpectralField> default_field_probes(const GridPtr& grid, std::uint64_t seed = 17) {
    CounterRng rng(seed, 0xF1E1Dull);
    std::vector<SpectralField> probes;
    for (int i = 0; i < 8; ++i) {
        const double nrm = std::pow(10.0, -1.0 + 2.0 * i / 7.0);
        probes.push_back(random_field(grid, rng, nrm, grid->dealiased_mode_count()));
    }
    return probes;
}

namespace detail {

inline std::vector<double> nonincreasing_envelope(const std::vector<double>& raw) {
    std::vector<double> env(raw.size());
    double run = 0.0;
    for (std::size_t i = raw.size(); i-- > 0;) {
        run = std::max(run, raw[i]);
        env[i] = run;
    }
    return env;
}

/// Profile fails to decrease over the largest decade of T.
inline bool stalls(const std::vector<double>& T, const std::vector<double>& env) {
    if (T.size() < 2) return false;
    const double top = T.back();
    std::size_t lo = 0;
    for (std::size_t i = 0; i < T.size(); ++i)
        if (T[i] <= top / 10.0 * (1.0 + 1e-12)) lo = i;
    if (lo + 1 >= T.size()) lo = 0;
    const double last = env.back();
    if (last <= 1e-12) return false;
    return last > 0.5 * env[lo];
}

}  // namespace detail

/// Averaged coefficients plus sampled KBM moduli delta_gamma, delta_f,
/// delta_g over T_grid (fast time). Built-in families get closed-form
/// averages; user families are averaged numerically over the longest window.
inline AveragedSet kbm_average(const CoefficientSet& set, const std::vector<double>& T_grid,
                               const std::vector<double>& t_probes,
                               std::vector<SpectralField> field_probes = {}) {
    if (T_grid.empty()) throw InvalidArgument("kbm_average: empty T grid");
    for (std::size_t i = 0; i < T_grid.size(); ++i)
        if (!(T_grid[i] > 0.0) || (i > 0 && !(T_grid[i] > T_grid[i - 1])))
            throw InvalidArgument("kbm_average: T grid must be positive and increasing");
    if (t_probes.empty()) throw InvalidArgument("kbm_average: no time probes");
    if (field_probes.empty()) field_probes = default_field_probes(set.grid);

    AveragedSet avg;
    const GridPtr grid = set.grid;
    if (set.benchmark) {
        const BenchmarkParams p = *set.benchmark;
        avg.gamma_bar = p.gamma0 + (p.omega_gamma == 0.0 ? p.a_gamma : 0.0);
        const double lin = p.omega_f == 0.0 ? p.c_f : 0.0;
        const SpectralField h = benchmark_forcing_field(grid);
        avg.f_bar = [lin, b = p.b0, h](double, const SpectralField& x) {
            SpectralField out = lin * x;
            out.axpy(b, h);
            return out;
        };
        avg.g_bar = set.g(0.0);
        const auto sig = detail::benchmark_sigmas(*grid, p.sigma_scale);
        avg.g_bar.mode_amplitudes = sig;
        avg.g_bar.mult_scale = p.omega_m == 0.0 ? p.r : 0.0;
    } else {
        const double Tlong = T_grid.back();
        const double t0 = t_probes.front();
        avg.gamma_bar = window_mean_gamma(set, t0, Tlong);
        auto f = set.f;
        avg.f_bar = [f, t0, Tlong](double, const SpectralField& x) {
            const double hq = Tlong / kKbmQuadratureNodes;
            SpectralField acc(x.grid_ptr());
            for (int i = 0; i < kKbmQuadratureNodes; ++i) acc += f(t0 + (i + 0.5) * hq, x);
            acc *= 1.0 / kKbmQuadratureNodes;
            return acc;
        };
        const double hq = Tlong / kKbmQuadratureNodes;
        DiffusionOp mean;
        for (int i = 0; i < kKbmQuadratureNodes; ++i) {
            const DiffusionOp op = set.g(t0 + (i + 0.5) * hq);
            if (mean.mode_amplitudes.size() < op.mode_amplitudes.size())
                mean.mode_amplitudes.resize(op.mode_amplitudes.size(), 0.0);
            for (std::size_t j = 0; j < op.mode_amplitudes.size(); ++j)
                mean.mode_amplitudes[j] += op.mode_amplitudes[j] / kKbmQuadratureNodes;
            mean.mult_scale += op.mult_scale / kKbmQuadratureNodes;
        }
        avg.g_bar = mean;
    }

    // Moduli.
    ModulusProfile& mp = avg.modulus_profiles;
    mp.T_grid = T_grid;
    std::vector<SpectralField> fbar_probe;
    for (const auto& x : field_probes) fbar_probe.push_back(avg.f_bar(0.0, x));

    for (double T : T_grid) {
        const double hq = T / kKbmQuadratureNodes;
        double dg = 0.0, df = 0.0, dgg = 0.0;
        for (double t : t_probes) {
            dg = std::max(dg, std::abs(window_mean_gamma(set, t, T) - avg.gamma_bar));
            // f and g window averages share the quadrature nodes.
            std::vector<SpectralField> facc;
            for (const auto& x : field_probes) facc.emplace_back(x.grid_ptr());
            std::vector<double> gacc(field_probes.size(), 0.0);
            for (int i = 0; i < kKbmQuadratureNodes; ++i) {
                const double s = t + (i + 0.5) * hq;
                const DiffusionOp op = set.g(s);
                for (std::size_t q = 0; q < field_probes.size(); ++q) {
                    facc[q] += set.f(s, field_probes[q]);
                    gacc[q] += hs_distance_squared(*grid, op, avg.g_bar, field_probes[q]);
                }
            }
            for (std::size_t q = 0; q < field_probes.size(); ++q) {
                facc[q] *= 1.0 / kKbmQuadratureNodes;
                const double xn = std::sqrt(norm_squared(field_probes[q]));
                df = std::max(df, std::sqrt(distance_squared(facc[q], fbar_probe[q])) / (1.0 + xn));
                dgg = std::max(dgg, gacc[q] / kKbmQuadratureNodes / (1.0 + xn * xn));
            }
        }
        mp.delta_gamma_raw.push_back(dg);
        mp.delta_f_raw.push_back(df);
        mp.delta_g_raw.push_back(dgg);
    }
    mp.delta_gamma = detail::nonincreasing_envelope(mp.delta_gamma_raw);
    mp.delta_f = detail::nonincreasing_envelope(mp.delta_f_raw);
    mp.delta_g = detail::nonincreasing_envelope(mp.delta_g_raw);
    if (detail::stalls(T_grid, mp.delta_gamma)) avg.nonconverged.push_back("delta_gamma");
    if (detail::stalls(T_grid, mp.delta_f)) avg.nonconverged.push_back("delta_f");
    if (detail::stalls(T_grid, mp.delta_g)) avg.nonconverged.push_back("delta_g");
    avg.converged = avg.nonconverged.empty();

    CoefficientSet& a = avg.averaged;
    a.name = set.name + "_averaged";
    a.grid = grid;
    a.alpha = set.alpha;
    a.beta = set.beta;
    const double gb = avg.gamma_bar;
    a.gamma = [gb](double) { return gb; };
    a.f = avg.f_bar;
    const DiffusionOp gbar = avg.g_bar;
    a.g = [gbar](double) { return gbar; };
    a.constants = set.constants;
    a.verified = set.verified;
    a.time_independent = true;
    a.period = 0.0;
    a.cubic_enabled = set.cubic_enabled;
    return avg;
}

// ---------------------------------------------------------------------------
// Hypothesis checks

struct Witness {
    double t = 0.0;
    SpectralField x, y;
    double ratio = 0.0;
};

/// A sampled hypothesis. worst_ratio is the largest observed lhs / bound;
/// the claim is refuted when some sample exceeds its bound by a relative 1e-8.
struct HypothesisCheck {
    std::string name;
    double claimed = 0.0;
    double worst_ratio = 0.0;
    bool holds = true;
    std::optional<Witness> witness;
};

/// Margin computed by exact arithmetic on stored constants; holds == (value > 0).
struct Margin {
    std::string name;
    double value = 0.0;
    bool holds = false;
};

struct ConditionReport {
    std::vector<HypothesisCheck> hypotheses;  // H_f1, H_f2, H_f3, H_g1, H_g2, H_g3
    Margin gamma_floor, gap1, gap2, p_max;
    /// p_max is infinite (L_g = 0).
    bool p_max_unconstrained = false;
    double lambda_star = 0.0;
    StructuralConstants constants;

    bool hypotheses_hold() const {
        return std::all_of(hypotheses.begin(), hypotheses.end(), [](const auto& h) { return h.holds; });
    }
    const HypothesisCheck& hypothesis(const std::string& n) const {
        for (const auto& h : hypotheses)
            if (h.name == n) return h;
        throw InvalidArgument("no hypothesis named " + n);
    }
};

inline Margin make_margin(std::string name, double value) { return {std::move(name), value, value > 0.0}; }

/// min_t gamma(t) - |beta|/sqrt(3): closed form for built-ins, sampled otherwise.
inline double gamma_floor_margin(const CoefficientSet& set) {
    const double floor = std::abs(set.beta) / std::sqrt(3.0);
    if (set.benchmark) {
        const auto& p = *set.benchmark;
        const double gmin = p.omega_gamma == 0.0 ? p.gamma0 + p.a_gamma : p.gamma0 - std::abs(p.a_gamma);
        return gmin - floor;
    }
    double gmin = std::numeric_limits<double>::infinity();
    const double span = set.period > 0.0 ? set.period : 100.0;
    for (int i = 0; i <= 4096; ++i) gmin = std::min(gmin, set.gamma(span * i / 4096.0));
    return gmin - floor;
}

inline ConditionReport check_conditions(const CoefficientSet& set, std::uint64_t seed = 2024,
                                        int n_samples = 100) {
    const TorusGrid& grid = *set.grid;
    const StructuralConstants& c = set.constants;
    ConditionReport rep;
    rep.constants = c;
    rep.lambda_star = grid.lambda_star();

    const double ls = grid.lambda_star();
    const double lg2 = c.L_g * c.L_g;
    rep.gamma_floor = make_margin("gamma_floor", gamma_floor_margin(set));
    rep.gap1 = make_margin("gap1", ls - c.lambda_f - lg2 / 2.0);
    rep.gap2 = make_margin("gap2", ls - c.lambda_f - 4.5 * lg2);
    if (c.L_g == 0.0) {
        rep.p_max = make_margin("p_max", std::numeric_limits<double>::infinity());
        rep.p_max_unconstrained = true;
    } else {
        rep.p_max = make_margin("p_max", (ls - c.lambda_f) / lg2 + 0.5);
    }

    auto check = [](std::string name, double claimed) {
        HypothesisCheck h;
        h.name = std::move(name);
        h.claimed = claimed;
        return h;
    };
    HypothesisCheck hf1 = check("H_f1", c.L_f), hf2 = check("H_f2", c.L_f), hf3 = check("H_f3", c.lambda_f);
    HypothesisCheck hg1 = check("H_g1", c.L_g), hg2 = check("H_g2", c.L_g), hg3 = check("H_g3", c.L_g);

    // lhs <= bound must hold up to a relative 1e-8.
    auto record = [](HypothesisCheck& h, double lhs, double bound, double t, const SpectralField& x,
                     const SpectralField& y) {
        const double ratio = bound > 0.0 ? lhs / bound : (lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        if (bound > 0.0 || lhs > 0.0) h.worst_ratio = std::max(h.worst_ratio, ratio);
        const bool violated = lhs > bound + 1e-8 * std::abs(bound) + 1e-13;
        if (violated && h.holds) {
            h.holds = false;
            h.witness = Witness{t, x, y, ratio};
        }
    };

    CounterRng rng(seed, 0xC0DEull);
    const std::size_t band = grid.dealiased_mode_count();
    const SpectralField zero(set.grid);
    const double span = set.period > 0.0 ? set.period : 100.0;
    for (int s = 0; s < n_samples; ++s) {
        const double tau = span * (rng.uniform() - 0.5) * 2.0;
        const double nx = std::pow(10.0, -2.0 + 3.0 * rng.uniform());
        const double ny = std::pow(10.0, -2.0 + 3.0 * rng.uniform());
        const SpectralField x = random_field(set.grid, rng, nx, band);
        const SpectralField y = random_field(set.grid, rng, ny, band);
        const SpectralField fx = set.f(tau, x), fy = set.f(tau, y), f0 = set.f(tau, zero);
        const SpectralField dxy = x - y;
        const double d0 = sobolev_norm(dxy, 0), d1 = sobolev_norm(dxy, 1), d2 = sobolev_norm(dxy, 2);
        const SpectralField dfxy = fx - fy;

        record(hf1, sobolev_norm(dfxy, 0), c.L_f * d0, tau, x, y);
        record(hf1, sobolev_norm(f0, 0), c.K, tau, zero, zero);
        record(hf2, sobolev_norm(fx, 1), c.L_f * sobolev_norm(x, 1) + c.K, tau, x, zero);
        record(hf3, inner(dfxy, dxy), c.lambda_f * d0 * d0, tau, x, y);

        const DiffusionOp op = set.g(tau);
        DiffusionOp mult_only;
        mult_only.mult_scale = op.mult_scale;
        record(hg1, std::sqrt(hs_distance_squared(grid, mult_only, DiffusionOp{}, dxy, 0)), c.L_g * d0, tau, x, y);
        record(hg2, std::sqrt(hs_distance_squared(grid, mult_only, DiffusionOp{}, dxy, 1)), c.L_g * d1, tau, x, y);
        record(hg3, std::sqrt(hs_distance_squared(grid, mult_only, DiffusionOp{}, dxy, 2)), c.L_g * d2, tau, x, y);
        DiffusionOp additive = op;
        additive.mult_scale = 0.0;
        record(hg1, std::sqrt(additive.hs_norm_squared(grid, nullptr, 0)), c.K, tau, zero, zero);
        record(hg2, std::sqrt(additive.hs_norm_squared(grid, nullptr, 1)), c.K, tau, zero, zero);
        record(hg3, std::sqrt(additive.hs_norm_squared(grid, nullptr, 2)), c.K, tau, zero, zero);
    }
    rep.hypotheses = {hf1, hf2, hf3, hg1, hg2, hg3};
    return rep;
}

// ---------------------------------------------------------------------------
// Dissipativity of the cubic term

struct DissipativityScan {
    double min_inner_product = std::numeric_limits<double>::infinity();
    SpectralField witness_u, witness_v;
};

/// <(gamma + i beta)(|u|^2 u - |v|^2 v), u - v>
inline double cubic_monotonicity(double gamma, double beta, const SpectralField& u, const SpectralField& v,
                                 Workspace& ws) {
    SpectralField diff = cubic_term(u, ws) - cubic_term(v, ws);
    diff *= Complex(gamma, beta);
    return inner(diff, u - v);
}

/// Minimum of the cubic monotonicity form over n_pairs random band-limited
/// pairs plus directed single-mode pairs u = A e_1, v = u - eta z e_1 where z
/// is the most negative eigenvector of the symmetrized Jacobian at A.
inline DissipativityScan cubic_dissipativity_scan(double gamma, double beta, std::size_t n_pairs,
                                                  const GridPtr& grid = make_grid(1, 16),
                                                  std::uint64_t seed = 7) {
    if (n_pairs < 1) throw InvalidArgument("cubic_dissipativity_scan: n_pairs must be >= 1");
    DissipativityScan scan;
    Workspace ws;
    auto consider = [&](const SpectralField& u, const SpectralField& v) {
        const double val = cubic_monotonicity(gamma, beta, u, v, ws);
        if (val < scan.min_inner_product) {
            scan.min_inner_product = val;
            scan.witness_u = u;
            scan.witness_v = v;
        }
    };

    CounterRng rng(seed, 0xD155ull);
    const std::size_t band = grid->dealiased_mode_count();
    for (std::size_t i = 0; i < n_pairs; ++i) {
        const double nu = std::pow(10.0, -1.0 + 2.0 * rng.uniform());
        const std::size_t modes = 1 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(band));
        SpectralField u = random_field(grid, rng, nu, modes);
        SpectralField v;
        if (i % 2 == 0) {
            v = random_field(grid, rng, std::pow(10.0, -1.0 + 2.0 * rng.uniform()), modes);
        } else {
            // Nearby pair: the form is then governed by the local Jacobian.
            v = u + random_field(grid, rng, nu * std::pow(10.0, -3.0 + 2.0 * rng.uniform()), modes);
        }
        consider(u, v);
    }

    // Directed two-point candidates. At a = (A, 0) the symmetrized Jacobian is
    // A^2 [[3 gamma, beta], [beta, gamma]]; rotation covariance carries its
    // eigenvectors along the single mode e^{ix}.
    const double tr = 4.0 * gamma, det = 3.0 * gamma * gamma - beta * beta;
    const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    const double lam_min = tr / 2.0 - disc;
    // Eigenvector of [[3g, b], [b, g]] for lam_min.
    Complex z = std::abs(beta) > 0.0 ? Complex(beta, lam_min - 3.0 * gamma) : Complex(0.0, 1.0);
    z /= std::abs(z);
    const Wavevector k1{1, 0, 0};
    for (double A : {0.1, 0.5, 1.0, 2.0, 5.0}) {
        for (double eta : {1e-4, 1e-3, 1e-2, 1e-1}) {
            for (double sign : {1.0, -1.0}) {
                const SpectralField u = SpectralField::mode(grid, k1, A);
                const SpectralField v = SpectralField::mode(grid, k1, Complex(A) - sign * eta * A * z);
                consider(u, v);
            }
        }
    }
    return scan;
}

}  // namespace cglavg

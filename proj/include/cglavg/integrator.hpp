#pragma once

// Time stepping of the Galerkin-truncated stochastic CGL system
//   du = [(1 + i alpha) Laplacian u - (gamma(t/eps) + i beta)|u|^2 u + f(t/eps, u)] dt
//        + g(t/eps, u) dW
// plus ensemble, pullback and diagnostic drivers.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "coefficients.hpp"
#include "errors.hpp"
#include "measures.hpp"
#include "noise.hpp"
#include "parallel.hpp"
#include "torus.hpp"

namespace cglavg {

enum class Scheme {
    exponential_euler,    ///< exact linear propagator, explicit nonlinearity
    semi_implicit_euler,  ///< implicit linear part, explicit nonlinearity
    exponential_rk2,      ///< second-order exponential drift (ETD2RK), Euler-Maruyama noise
};

inline std::string to_string(Scheme s) {
    switch (s) {
        case Scheme::exponential_euler: return "exponential_euler";
        case Scheme::semi_implicit_euler: return "semi_implicit_euler";
        case Scheme::exponential_rk2: return "exponential_rk2";
    }
    return "unknown";
}

inline Scheme scheme_from_string(const std::string& s) {
    if (s == "exponential_euler") return Scheme::exponential_euler;
    if (s == "semi_implicit_euler") return Scheme::semi_implicit_euler;
    if (s == "exponential_rk2") return Scheme::exponential_rk2;
    throw InvalidArgument("unknown scheme '" + s + "'");
}

struct IntegratorConfig {
    double dt = 1e-3;
    Scheme scheme = Scheme::exponential_euler;
    /// Retained eigenmodes; 0 selects every mode inside the dealias band.
    std::size_t galerkin_n = 0;
    /// L^2 norm guard.
    double blow_up_threshold = 1e6;
    /// Stored-state stride; 0 selects ceil(steps / 200).
    std::size_t save_stride = 0;
};

namespace detail {

/// e^z - 1 without cancellation for small |z|.
inline Complex expm1_complex(Complex z) {
    const double x = z.real(), y = z.imag();
    const double s = std::sin(0.5 * y);
    return {std::expm1(x) * std::cos(y) - 2.0 * s * s, std::exp(x) * std::sin(y)};
}

}  // namespace detail

/// phi_1(z) = (e^z - 1) / z with a series fallback for |z| < 1e-4.
inline Complex phi1(Complex z) {
    if (std::abs(z) < 1e-4) return 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0;
    return detail::expm1_complex(z) / z;
}

/// phi_2(z) = (e^z - 1 - z) / z^2 with a series fallback for |z| < 1e-2.
inline Complex phi2(Complex z) {
    if (std::abs(z) < 1e-2) {
        Complex term = 0.5, sum = 0.0;
        for (int k = 2; k < 9; ++k) {
            sum += term;
            term *= z / static_cast<double>(k + 1);
        }
        return sum;
    }
    return (detail::expm1_complex(z) - z) / (z * z);
}

/// One-step propagator for a fixed (set, config). Owns precomputed linear
/// factors and the scratch workspace; one Stepper per thread.
class Stepper {
public:
    Stepper(const CoefficientSet& set, const IntegratorConfig& cfg) : set_(set), cfg_(cfg) {
        if (!(cfg.dt > 0.0)) throw InvalidArgument("integrator dt must be positive");
        const TorusGrid& grid = *set.grid;
        const auto order = grid.mode_order();
        const std::size_t n = cfg.galerkin_n == 0 ? grid.dealiased_mode_count() : cfg.galerkin_n;
        if (n > grid.size()) throw InvalidArgument("galerkin_n exceeds the lattice size");
        const std::size_t active = std::min(n, order.size());
        const Complex disp(1.0, set.alpha);
        for (std::size_t j = 0; j < active; ++j) {
            Mode m;
            m.flat = order[j];
            m.lambda = grid.eigenvalue(m.flat);
            const Complex z = -disp * m.lambda * cfg.dt;
            m.propagator = std::exp(z);
            m.phi1_dt = phi1(z) * cfg.dt;
            m.phi2_dt = phi2(z) * cfg.dt;
            m.implicit = 1.0 / (1.0 + disp * m.lambda * cfg.dt);
            modes_.push_back(m);
        }
        inv_sqrt_volume_ = 1.0 / std::sqrt(grid.volume());
        midpoint_ = set.epsilon < 10.0 * cfg.dt && !set.time_independent;
    }

    std::size_t active_modes() const noexcept { return modes_.size(); }
    /// Channel 0 (multiplicative) plus one additive channel per retained mode.
    std::size_t channels() const noexcept { return modes_.size() + 1; }
    const IntegratorConfig& config() const noexcept { return cfg_; }
    const CoefficientSet& coefficients() const noexcept { return set_; }
    /// int |u|^4 at the start of the last step (free by-product of the cubic term).
    double last_l4_power4() const noexcept { return last_l4_; }

    /// True when u has energy outside the retained modes.
    bool outside_span(const SpectralField& u) const {
        std::vector<bool> keep(u.size(), false);
        for (const auto& m : modes_) keep[m.flat] = true;
        for (std::size_t i = 0; i < u.size(); ++i)
            if (!keep[i] && u[i] != Complex{}) return true;
        return false;
    }

    /// Advances u from t to t + dt with Wiener increments dW (size >= channels()
    /// or empty for a deterministic step).
    void advance(SpectralField& u, double t, std::span<const double> dW) {
        const double dt = cfg_.dt;
        const double t_det = midpoint_ ? t + 0.5 * dt : t;
        const SpectralField drift = nonlinear(u, t_det);
        SpectralField next(u.grid_ptr());

        switch (cfg_.scheme) {
            case Scheme::exponential_euler:
                for (const auto& m : modes_)
                    next[m.flat] = m.propagator * u[m.flat] + m.phi1_dt * drift[m.flat];
                break;
            case Scheme::semi_implicit_euler:
                for (const auto& m : modes_) next[m.flat] = (u[m.flat] + dt * drift[m.flat]) * m.implicit;
                break;
            case Scheme::exponential_rk2: {
                const double l4 = last_l4_;
                SpectralField stage(u.grid_ptr());
                for (const auto& m : modes_)
                    stage[m.flat] = m.propagator * u[m.flat] + m.phi1_dt * drift[m.flat];
                const SpectralField drift2 = nonlinear(stage, t_det + dt);
                last_l4_ = l4;
                for (const auto& m : modes_)
                    next[m.flat] = stage[m.flat] + m.phi2_dt * (drift2[m.flat] - drift[m.flat]);
                break;
            }
        }

        if (!dW.empty()) {
            if (dW.size() < channels()) throw InvalidArgument("increment has fewer channels than the stepper");
            const DiffusionOp op = set_.g_at(t);
            if (op.mult_scale != 0.0 && dW[0] != 0.0) {
                const double s = op.mult_scale * dW[0];
                for (const auto& m : modes_) next[m.flat] += s * u[m.flat];
            }
            const std::size_t add = std::min(modes_.size(), op.mode_amplitudes.size());
            for (std::size_t j = 0; j < add; ++j)
                next[modes_[j].flat] += op.mode_amplitudes[j] * dW[j + 1] * inv_sqrt_volume_;
        }

        if (!next.all_finite())
            throw BlowUpError("state became non-finite at t = " + std::to_string(t + dt), t + dt);
        const double nrm = std::sqrt(norm_squared(next));
        if (nrm > cfg_.blow_up_threshold)
            throw BlowUpError("state norm " + std::to_string(nrm) + " exceeded the blow-up threshold at t = " +
                                  std::to_string(t + dt),
                              t + dt);
        u = std::move(next);
    }

private:
    struct Mode {
        std::size_t flat = 0;
        double lambda = 0.0;
        Complex propagator, phi1_dt, phi2_dt, implicit;
    };

    /// N = -(gamma + i beta)|u|^2 u + f, on the retained modes.
    SpectralField nonlinear(const SpectralField& u, double t) {
        SpectralField out(u.grid_ptr());
        if (set_.cubic_enabled) {
            const SpectralField cubic = cubic_term(u, ws_);
            last_l4_ = inner(cubic, u);
            const Complex coef = -Complex(set_.gamma_at(t), set_.beta);
            for (const auto& m : modes_) out[m.flat] = coef * cubic[m.flat];
        } else {
            last_l4_ = 0.0;
        }
        if (set_.f) {
            const SpectralField fx = set_.f_at(t, u);
            for (const auto& m : modes_) out[m.flat] += fx[m.flat];
        }
        return out;
    }

    CoefficientSet set_;
    IntegratorConfig cfg_;
    std::vector<Mode> modes_;
    Workspace ws_;
    double inv_sqrt_volume_ = 1.0;
    double last_l4_ = 0.0;
    bool midpoint_ = false;
};

/// Single step from (state, t) with the given increments. Builds a fresh
/// Stepper; use Stepper directly inside loops.
inline SpectralField step(const SpectralField& state, double t, double dt, const CoefficientSet& set,
                          std::span<const double> increment,
                          Scheme scheme = Scheme::exponential_euler, std::size_t galerkin_n = 0) {
    if (!state.all_finite()) throw InvalidArgument("step: non-finite state");
    IntegratorConfig cfg;
    cfg.dt = dt;
    cfg.scheme = scheme;
    cfg.galerkin_n = galerkin_n;
    Stepper stepper(set, cfg);
    SpectralField u = state;
    stepper.advance(u, t, increment);
    return u;
}

/// Path of one solution: thinned stored states plus the running sup of ||u||.
struct Trajectory {
    std::vector<double> times;
    std::vector<SpectralField> states;
    double running_sup_L2 = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t path = 0;
};

namespace detail {

inline std::size_t step_count(double span, double dt) {
    const double n = span / dt;
    const double r = std::nearbyint(n);
    if (r < 1.0 || std::abs(n - r) > 1e-6 * std::max(1.0, r))
        throw InvalidArgument("time span is not an integer multiple of dt");
    return static_cast<std::size_t>(r);
}

inline void require_gamma_floor(const CoefficientSet& set) {
    if (set.cubic_enabled && gamma_floor_margin(set) < 0.0)
        throw ConditionError("gamma(t) < |beta|/sqrt(3): the cubic term is not dissipative");
}

}  // namespace detail

/// Solves on [s, s + horizon] driven by `sampler`. Deterministic in
/// (sampler seed/path, init, config).
inline Trajectory solve_path(const SpectralField& init, double s, double horizon, const IntegratorConfig& config,
                             const CoefficientSet& set, const WienerSampler& sampler) {
    detail::require_gamma_floor(set);
    Stepper stepper(set, config);
    if (stepper.outside_span(init)) throw InvalidArgument("initial state is not in the span of retained modes");
    if (sampler.channels() < stepper.channels())
        throw InvalidArgument("sampler has fewer channels than the diffusion needs");
    const std::size_t n = detail::step_count(horizon, config.dt);
    const std::size_t stride =
        config.save_stride > 0 ? config.save_stride : std::max<std::size_t>(1, (n + 199) / 200);

    Trajectory tr;
    tr.seed = sampler.seed();
    tr.path = sampler.path();
    SpectralField u = init;
    tr.times.push_back(s);
    tr.states.push_back(u);
    tr.running_sup_L2 = std::sqrt(norm_squared(u));
    std::vector<double> dW(sampler.channels());
    for (std::size_t k = 0; k < n; ++k) {
        const double t = s + static_cast<double>(k) * config.dt;
        sampler.step_increments(t, config.dt, dW);
        stepper.advance(u, t, dW);
        tr.running_sup_L2 = std::max(tr.running_sup_L2, std::sqrt(norm_squared(u)));
        if ((k + 1) % stride == 0 || k + 1 == n) {
            tr.times.push_back(s + static_cast<double>(k + 1) * config.dt);
            tr.states.push_back(u);
        }
    }
    return tr;
}

/// Mean with its standard error over the surviving paths.
struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t count = 0;
};

inline Estimate estimate_of(std::span<const double> xs) {
    Estimate e;
    e.count = xs.size();
    if (xs.empty()) return e;
    double acc = 0.0;
    for (double x : xs) acc += x;
    e.mean = acc / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - e.mean) * (x - e.mean);
        e.std_error = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
    }
    return e;
}

struct MomentTable {
    Estimate sup_l2_p1;         ///< E sup_t ||u||^2
    Estimate sup_l2_p2;         ///< E sup_t ||u||^4
    Estimate int_h1_squared;    ///< E int ||u||_1^2 dt
    Estimate int_gamma_l4;      ///< E int gamma ||u||_{L^4}^4 dt
};

struct EnsembleResult {
    std::vector<double> times;
    std::vector<EmpiricalMeasure> measures;  ///< one per stored time; samples ordered by path
    MomentTable moments;
    std::vector<std::size_t> blown_paths;
    std::vector<double> blow_up_times;
    std::size_t n_paths = 0;
};

using InitSampler = std::function<SpectralField(std::uint64_t path)>;

/// Independent paths keyed by (base_seed, path index). Paths that blow up are
/// dropped from the measures and listed; more than 1% blown paths is an error.
inline EnsembleResult solve_ensemble(const InitSampler& init_sampler, double s, double horizon,
                                     const IntegratorConfig& config, const CoefficientSet& set,
                                     std::size_t n_paths, std::uint64_t base_seed) {
    if (n_paths < 2) throw InvalidArgument("solve_ensemble needs n_paths >= 2");
    detail::require_gamma_floor(set);
    const std::size_t n = detail::step_count(horizon, config.dt);
    const std::size_t stride =
        config.save_stride > 0 ? config.save_stride : std::max<std::size_t>(1, (n + 199) / 200);
    std::vector<double> times{s};
    for (std::size_t k = 0; k < n; ++k)
        if ((k + 1) % stride == 0 || k + 1 == n) times.push_back(s + static_cast<double>(k + 1) * config.dt);

    struct PathOut {
        std::vector<SpectralField> states;
        double sup2 = 0.0, int_h1 = 0.0, int_l4 = 0.0;
        bool blown = false;
        double blow_time = 0.0;
    };
    std::vector<PathOut> out(n_paths);
    const Stepper proto(set, config);
    const WienerSampler base(base_seed, proto.channels(), config.dt);

    parallel_for(n_paths, [&](std::size_t p) {
        Stepper stepper = proto;
        const WienerSampler sampler = base.for_path(p);
        PathOut& po = out[p];
        SpectralField u = init_sampler(p);
        if (stepper.outside_span(u)) throw InvalidArgument("initial state is not in the span of retained modes");
        po.states.reserve(times.size());
        po.states.push_back(u);
        po.sup2 = norm_squared(u);
        std::vector<double> dW(sampler.channels());
        try {
            for (std::size_t k = 0; k < n; ++k) {
                const double t = s + static_cast<double>(k) * config.dt;
                const double h1 = sobolev_norm(u, 1);
                sampler.step_increments(t, config.dt, dW);
                stepper.advance(u, t, dW);
                po.int_h1 += h1 * h1 * config.dt;
                po.int_l4 += set.gamma_at(t) * stepper.last_l4_power4() * config.dt;
                po.sup2 = std::max(po.sup2, norm_squared(u));
                if ((k + 1) % stride == 0 || k + 1 == n) po.states.push_back(u);
            }
        } catch (const BlowUpError& e) {
            po.blown = true;
            po.blow_time = e.time();
        }
    });

    EnsembleResult res;
    res.times = times;
    res.n_paths = n_paths;
    std::vector<double> sup1, sup2, ih1, il4;
    for (std::size_t p = 0; p < n_paths; ++p) {
        if (out[p].blown) {
            res.blown_paths.push_back(p);
            res.blow_up_times.push_back(out[p].blow_time);
            continue;
        }
        sup1.push_back(out[p].sup2);
        sup2.push_back(out[p].sup2 * out[p].sup2);
        ih1.push_back(out[p].int_h1);
        il4.push_back(out[p].int_l4);
    }
    if (static_cast<double>(res.blown_paths.size()) > 0.01 * static_cast<double>(n_paths))
        throw BlowUpError(std::to_string(res.blown_paths.size()) + " of " + std::to_string(n_paths) +
                              " paths blew up (more than 1%)",
                          res.blow_up_times.front());
    res.moments.sup_l2_p1 = estimate_of(sup1);
    res.moments.sup_l2_p2 = estimate_of(sup2);
    res.moments.int_h1_squared = estimate_of(ih1);
    res.moments.int_gamma_l4 = estimate_of(il4);
    for (std::size_t i = 0; i < times.size(); ++i) {
        std::vector<SpectralField> samples;
        for (std::size_t p = 0; p < n_paths; ++p)
            if (!out[p].blown) samples.push_back(out[p].states[i]);
        res.measures.emplace_back(std::move(samples));
    }
    return res;
}

// ---------------------------------------------------------------------------
// Pullback construction of the L^2-bounded solution

struct PullbackResult {
    std::vector<double> eval_times;
    /// Deepest measures per eval time; sample i is path i of the sampler.
    std::vector<EmpiricalMeasure> measures;
    std::vector<double> depths_used;
    /// max over eval times of E||u_n(t) - u_{n_prev}(t)||^2 per consecutive pair.
    std::vector<double> depth_gaps;
    /// e^{-(2 lambda* - 2 lambda_f - L_g^2)(t + n)} sup_t E||u_n(t)||^2 per eval time.
    std::vector<double> a_priori_bound;
    double final_depth = 0.0;
    bool converged = false;
};

/// Start time -n rounded down so that the first eval time is a whole number
/// of steps after it (keeps every step on the sampler lattice).
inline double pullback_start(double first_eval, double depth, double dt) {
    return first_eval - std::ceil((first_eval + depth) / dt - 1e-9) * dt;
}

/// States u(t_j, -n, 0; path p) for every path and eval time, p-major.
/// Eval times must be sorted and lie on the dt lattice.
inline std::vector<std::vector<SpectralField>> pullback_states(const CoefficientSet& set,
                                                               const std::vector<double>& eval_times,
                                                               const IntegratorConfig& config,
                                                               const WienerSampler& sampler,
                                                               std::size_t n_paths, double depth) {
    const Stepper proto(set, config);
    std::vector<std::vector<SpectralField>> states(n_paths);
    parallel_for(n_paths, [&](std::size_t p) {
        Stepper stepper = proto;
        const WienerSampler path_sampler = sampler.for_path(p);
        SpectralField u(set.grid);
        std::vector<double> dW(path_sampler.channels());
        std::size_t k_global = 0;
        const double start = pullback_start(eval_times.front(), depth, config.dt);
        for (double te : eval_times) {
            const std::size_t target = detail::step_count(te - start, config.dt);
            for (; k_global < target; ++k_global) {
                const double t = start + static_cast<double>(k_global) * config.dt;
                path_sampler.step_increments(t, config.dt, dW);
                stepper.advance(u, t, dW);
            }
            states[p].push_back(u);
        }
    });
    return states;
}

/// Pullback limit u(t) = lim_n u(t, -n, 0) over one noise path per ensemble
/// member, with the depth schedule refined until consecutive depths agree in
/// mean square to `tol` at every eval time.
inline PullbackResult pullback_bounded_solution(const CoefficientSet& set, std::vector<double> eval_times,
                                                const IntegratorConfig& config, const WienerSampler& sampler,
                                                std::size_t n_paths, const std::vector<double>& depth_schedule,
                                                double tol) {
    const ConditionReport rep = check_conditions(set);
    if (!rep.gap1.holds)
        throw ConditionError("pullback requires lambda* - lambda_f - L_g^2/2 > 0 (gap1 = " +
                             std::to_string(rep.gap1.value) + ")");
    detail::require_gamma_floor(set);
    if (depth_schedule.empty()) throw InvalidArgument("empty depth schedule");
    for (std::size_t i = 1; i < depth_schedule.size(); ++i)
        if (!(depth_schedule[i] > depth_schedule[i - 1])) throw InvalidArgument("depth schedule must increase");
    std::sort(eval_times.begin(), eval_times.end());
    if (eval_times.empty()) throw InvalidArgument("no eval times");
    if (-depth_schedule.front() >= eval_times.front())
        throw InvalidArgument("every depth must start before the first eval time");

    PullbackResult res;
    res.eval_times = eval_times;
    std::vector<std::vector<SpectralField>> prev;
    for (double depth : depth_schedule) {
        auto cur = pullback_states(set, eval_times, config, sampler, n_paths, depth);
        res.depths_used.push_back(depth);
        res.final_depth = depth;
        if (!prev.empty()) {
            double worst = 0.0;
            for (std::size_t j = 0; j < eval_times.size(); ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < n_paths; ++p) acc += distance_squared(cur[p][j], prev[p][j]);
                worst = std::max(worst, acc / static_cast<double>(n_paths));
            }
            res.depth_gaps.push_back(worst);
            if (worst < tol) {
                res.converged = true;
                prev = std::move(cur);
                break;
            }
        }
        prev = std::move(cur);
    }

    const double rate = 2.0 * rep.lambda_star - 2.0 * rep.constants.lambda_f -
                        rep.constants.L_g * rep.constants.L_g;
    double m2 = 0.0;
    for (std::size_t j = 0; j < eval_times.size(); ++j) {
        std::vector<SpectralField> samples;
        for (std::size_t p = 0; p < n_paths; ++p) samples.push_back(prev[p][j]);
        res.measures.emplace_back(std::move(samples));
        m2 = std::max(m2, second_moment(res.measures.back()));
    }
    for (double t : eval_times) res.a_priori_bound.push_back(std::exp(-rate * (t + res.final_depth)) * m2);

    if (!res.converged) {
        std::ostringstream msg;
        msg << "pullback not converged to tol " << tol << "; depth gaps:";
        for (std::size_t i = 0; i < res.depth_gaps.size(); ++i)
            msg << " [" << res.depths_used[i] << "->" << res.depths_used[i + 1] << "] " << res.depth_gaps[i];
        throw NotConvergedError(msg.str());
    }
    return res;
}

// ---------------------------------------------------------------------------
// Diagnostics

/// Least-squares slope of y against x.
inline double fit_slope(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw InvalidArgument("fit_slope needs >= 2 matching points");
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

struct ContractionResult {
    std::vector<double> times;
    std::vector<double> mean_sq_diff;  ///< E||u1(t) - u2(t)||^2
    double fitted_slope = 0.0;         ///< d/dt log E||u1 - u2||^2
    double predicted_rate = 0.0;       ///< 2 lambda* - 2 lambda_f - L_g^2
    double slack = 0.0;
    double fit_horizon = 0.0;          ///< horizon actually used by the fit
    bool passes = false;               ///< fitted_slope <= -predicted_rate + slack
};

/// Couples the two solutions of each IC pair on one path and fits the decay
/// rate of their mean-square difference.
inline ContractionResult contraction_test(const CoefficientSet& set, const IntegratorConfig& config,
                                          const WienerSampler& sampler,
                                          const std::vector<std::pair<SpectralField, SpectralField>>& ic_pairs,
                                          double horizon, double slack = 0.1) {
    const ConditionReport rep = check_conditions(set);
    if (!rep.gap1.holds) throw ConditionError("contraction test requires gap1 > 0");
    if (ic_pairs.empty()) throw InvalidArgument("contraction test needs at least one IC pair");
    const std::size_t n = detail::step_count(horizon, config.dt);
    const std::size_t stride = std::max<std::size_t>(1, n / 100);
    std::vector<std::size_t> marks;
    for (std::size_t k = 0; k <= n; k += stride) marks.push_back(k);
    if (marks.back() != n) marks.push_back(n);

    const Stepper proto(set, config);
    std::vector<std::vector<double>> diffs(ic_pairs.size());
    parallel_for(ic_pairs.size(), [&](std::size_t p) {
        Stepper s1 = proto, s2 = proto;
        const WienerSampler ps = sampler.for_path(p);
        SpectralField u1 = ic_pairs[p].first, u2 = ic_pairs[p].second;
        std::vector<double> dW(ps.channels());
        std::size_t mi = 0;
        for (std::size_t k = 0; k <= n; ++k) {
            if (mi < marks.size() && marks[mi] == k) {
                diffs[p].push_back(distance_squared(u1, u2));
                ++mi;
            }
            if (k == n) break;
            const double t = static_cast<double>(k) * config.dt;
            ps.step_increments(t, config.dt, dW);
            s1.advance(u1, t, dW);
            s2.advance(u2, t, dW);
        }
    });

    ContractionResult res;
    res.predicted_rate = 2.0 * rep.lambda_star - 2.0 * rep.constants.lambda_f -
                         rep.constants.L_g * rep.constants.L_g;
    res.slack = slack;
    std::vector<double> xs, ys;
    const double first = [&] {
        double acc = 0.0;
        for (const auto& d : diffs) acc += d[0];
        return acc / static_cast<double>(diffs.size());
    }();
    for (std::size_t i = 0; i < marks.size(); ++i) {
        double acc = 0.0;
        for (const auto& d : diffs) acc += d[i];
        const double mean = acc / static_cast<double>(diffs.size());
        const double t = static_cast<double>(marks[i]) * config.dt;
        res.times.push_back(t);
        res.mean_sq_diff.push_back(mean);
        // Stop the fit once the difference reaches round-off level.
        if (mean <= 0.0 || mean < 1e-26 * first) continue;
        if (!ys.empty() && xs.size() != i) continue;
        xs.push_back(t);
        ys.push_back(std::log(mean));
    }
    if (xs.size() < 2) throw Error("contraction test: difference vanished before two fit points");
    res.fit_horizon = xs.back();
    res.fitted_slope = fit_slope(xs, ys);
    res.passes = res.fitted_slope <= -res.predicted_rate + slack;
    return res;
}

struct IncrementModulusRow {
    double delta = 0.0;
    Estimate integral;  ///< E int_s^{s+T} ||u(r) - u~(r)||^2 dr
};

/// E int ||u - u~||^2 for the step process u~(r) = u(s + k delta) on
/// [s + k delta, s + (k+1) delta). Stored states must be uniformly spaced; u is
/// linearly interpolated between them and the integral is exact for the
/// interpolant.
inline std::vector<IncrementModulusRow> time_increment_modulus(const std::vector<Trajectory>& ensemble,
                                                               const std::vector<double>& delta_grid) {
    if (ensemble.empty()) throw InvalidArgument("time_increment_modulus: empty ensemble");
    std::vector<IncrementModulusRow> rows;
    for (double delta : delta_grid) {
        std::vector<double> per_path;
        for (const auto& tr : ensemble) {
            if (tr.times.size() < 2) throw InvalidArgument("trajectory needs at least two states");
            const double h = tr.times[1] - tr.times[0];
            const std::size_t w = detail::step_count(delta, h);
            double acc = 0.0;
            for (std::size_t j = 0; j + 1 < tr.states.size(); ++j) {
                const SpectralField& anchor = tr.states[(j / w) * w];
                const SpectralField a = tr.states[j] - anchor;
                const SpectralField b = tr.states[j + 1] - anchor;
                acc += h * (norm_squared(a) + inner(a, b) + norm_squared(b)) / 3.0;
            }
            per_path.push_back(acc);
        }
        rows.push_back({delta, estimate_of(per_path)});
    }
    return rows;
}

}  // namespace cglavg

#pragma once

// Empirical laws on L^2(T^d) and the quadratic Wasserstein distance between them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "noise.hpp"
#include "parallel.hpp"
#include "torus.hpp"

namespace cglavg {

/// Weighted sample cloud standing in for a law in Pr_2(L^2(T^d)).
class EmpiricalMeasure {
public:
    EmpiricalMeasure() = default;

    explicit EmpiricalMeasure(std::vector<SpectralField> samples)
        : samples_(std::move(samples)),
          weights_(samples_.size(), samples_.empty() ? 0.0 : 1.0 / static_cast<double>(samples_.size())),
          uniform_(true) {
        validate();
    }

    EmpiricalMeasure(std::vector<SpectralField> samples, std::vector<double> weights)
        : samples_(std::move(samples)), weights_(std::move(weights)), uniform_(false) {
        if (weights_.size() != samples_.size()) throw InvalidArgument("measure: weight count mismatch");
        validate();
    }

    /// Dirac mass at x.
    static EmpiricalMeasure point_mass(const SpectralField& x) { return EmpiricalMeasure({x}); }

    std::size_t size() const noexcept { return samples_.size(); }
    const std::vector<SpectralField>& samples() const noexcept { return samples_; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    const SpectralField& sample(std::size_t i) const { return samples_.at(i); }
    double weight(std::size_t i) const { return weights_.at(i); }
    bool uniform() const noexcept { return uniform_; }

private:
    void validate() {
        if (samples_.empty()) throw InvalidArgument("measure needs at least one sample");
        double total = 0.0;
        for (double w : weights_) {
            if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("measure weights must be finite and >= 0");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("measure weights must sum to 1");
        const TorusGrid* g = &samples_.front().grid();
        for (const auto& s : samples_) {
            if (&s.grid() != g &&
                (s.grid().dimension() != g->dimension() || s.grid().modes_per_dim() != g->modes_per_dim() ||
                 s.grid().period() != g->period()))
                throw InvalidArgument("measure samples live on different grids");
            if (!s.all_finite()) throw InvalidArgument("measure sample is not finite");
        }
        if (!uniform_) {
            uniform_ = std::all_of(weights_.begin(), weights_.end(),
                                   [&](double w) { return w == weights_.front(); });
        }
    }

    std::vector<SpectralField> samples_;
    std::vector<double> weights_;
    bool uniform_ = true;
};

/// int ||z||^2 mu(dz)
inline double second_moment(const EmpiricalMeasure& mu) {
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) acc += mu.weight(i) * norm_squared(mu.sample(i));
    return acc;
}

/// Dense row-major cost matrix.
struct CostMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

/// C_ij = ||x_i - y_j||^2, computed in spectral coefficients (Parseval).
inline CostMatrix squared_distance_matrix(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    CostMatrix c{mu.size(), nu.size(), std::vector<double>(mu.size() * nu.size())};
    parallel_for(mu.size(), [&](std::size_t i) {
        for (std::size_t j = 0; j < nu.size(); ++j)
            c.data[i * c.cols + j] = distance_squared(mu.sample(i), nu.sample(j));
    });
    return c;
}

/// Minimum-cost assignment of every row to a distinct column (rows <= cols),
/// shortest augmenting paths with dual potentials. Returns the column of each row.
inline std::vector<std::size_t> solve_assignment(const CostMatrix& c) {
    const std::size_t n = c.rows, m = c.cols;
    if (n > m) throw InvalidArgument("assignment needs rows <= cols");
    constexpr double inf = std::numeric_limits<double>::infinity();
    // 1-based arrays; column 0 is the virtual start.
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
    std::vector<double> minv(m + 1);
    std::vector<char> used(m + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        owner[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = owner[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (owner[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> col_of(n);
    for (std::size_t j = 1; j <= m; ++j)
        if (owner[j] != 0) col_of[owner[j] - 1] = j - 1;
    return col_of;
}

/// Exact discrete optimal transport min sum P_ij C_ij over couplings of a and b
/// (successive shortest paths with potentials on the dense bipartite graph).
inline double solve_transport(const CostMatrix& c, const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = c.rows, m = c.cols, V = n + m;
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> supply = a, demand = b;
    std::vector<double> flow(n * m, 0.0);
    std::vector<double> pot(V, 0.0);
    std::vector<double> dist(V);
    std::vector<std::size_t> prev(V);
    std::vector<char> done(V);
    constexpr double eps = 1e-15;
    double remaining = 0.0;
    for (double s : supply) remaining += s;

    while (remaining > 1e-13) {
        std::fill(dist.begin(), dist.end(), inf);
        std::fill(done.begin(), done.end(), 0);
        const std::size_t none = V;
        std::fill(prev.begin(), prev.end(), none);
        for (std::size_t i = 0; i < n; ++i)
            if (supply[i] > eps) dist[i] = 0.0;
        std::size_t target = none;
        for (;;) {
            std::size_t x = none;
            double best = inf;
            for (std::size_t v = 0; v < V; ++v)
                if (!done[v] && dist[v] < best) {
                    best = dist[v];
                    x = v;
                }
            if (x == none) break;
            done[x] = 1;
            if (x >= n && demand[x - n] > eps) {
                target = x;
                break;
            }
            if (x < n) {
                for (std::size_t j = 0; j < m; ++j) {
                    const std::size_t y = n + j;
                    if (done[y]) continue;
                    const double nd = dist[x] + c(x, j) + pot[x] - pot[y];
                    if (nd < dist[y]) {
                        dist[y] = nd;
                        prev[y] = x;
                    }
                }
            } else {
                const std::size_t j = x - n;
                for (std::size_t i = 0; i < n; ++i) {
                    if (done[i] || flow[i * m + j] <= eps) continue;
                    const double nd = dist[x] - c(i, j) + pot[x] - pot[i];
                    if (nd < dist[i]) {
                        dist[i] = nd;
                        prev[i] = x;
                    }
                }
            }
        }
        if (target == none) throw Error("transport solver: no augmenting path (weights inconsistent)");
        const double dt = dist[target];
        for (std::size_t v = 0; v < V; ++v) pot[v] += std::min(dist[v], dt);

        // Bottleneck along the path.
        double push = demand[target - n];
        std::size_t y = target;
        while (prev[y] != V) {
            const std::size_t x = prev[y];
            if (x >= n) push = std::min(push, flow[y * m + (x - n)]);  // backward edge j -> i
            y = x;
        }
        push = std::min(push, supply[y]);
        y = target;
        while (prev[y] != V) {
            const std::size_t x = prev[y];
            if (x < n)
                flow[x * m + (y - n)] += push;
            else
                flow[y * m + (x - n)] -= push;
            y = x;
        }
        supply[y] -= push;
        demand[target - n] -= push;
        remaining -= push;
    }
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) cost += std::max(0.0, flow[i * m + j]) * c(i, j);
    return cost;
}

inline constexpr std::size_t kExactAssignmentLimit = 4096;
inline constexpr std::size_t kExactTransportLimit = 1000000;

/// Exact empirical W_2. Equal-size uniform measures use the assignment
/// solver; anything else goes through the transportation LP.
inline double wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    const bool assignment = mu.uniform() && nu.uniform() && mu.size() == nu.size();
    if (assignment && mu.size() > kExactAssignmentLimit)
        throw SizeLimitError("wasserstein2: " + std::to_string(mu.size()) +
                             " samples exceed the exact assignment limit " +
                             std::to_string(kExactAssignmentLimit) + "; subsample() first and log its seed");
    if (!assignment && mu.size() * nu.size() > kExactTransportLimit)
        throw SizeLimitError("wasserstein2: transport problem of size " + std::to_string(mu.size()) + "x" +
                             std::to_string(nu.size()) + " exceeds the exact limit; subsample() first");
    const CostMatrix c = squared_distance_matrix(mu, nu);
    double cost = 0.0;
    if (assignment) {
        const auto col = solve_assignment(c);
        for (std::size_t i = 0; i < col.size(); ++i) cost += c(i, col[i]);
        cost /= static_cast<double>(mu.size());
    } else {
        cost = solve_transport(c, mu.weights(), nu.weights());
    }
    return std::sqrt(std::max(0.0, cost));
}

/// Entropic (Sinkhorn, log domain) approximation of W_2. Biased upward by the
/// regularization; exploratory use only.
inline double wasserstein2_entropic(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double reg = 1e-2,
                                    int iterations = 500) {
    const CostMatrix c = squared_distance_matrix(mu, nu);
    const std::size_t n = c.rows, m = c.cols;
    double scale = 0.0;
    for (double x : c.data) scale = std::max(scale, x);
    const double eps = reg * std::max(scale, 1e-300);
    std::vector<double> f(n, 0.0), g(m, 0.0);
    auto lse = [](const std::vector<double>& xs) {
        const double mx = *std::max_element(xs.begin(), xs.end());
        double acc = 0.0;
        for (double x : xs) acc += std::exp(x - mx);
        return mx + std::log(acc);
    };
    std::vector<double> tmp;
    for (int it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            tmp.assign(m, 0.0);
            for (std::size_t j = 0; j < m; ++j) tmp[j] = (g[j] - c(i, j)) / eps + std::log(nu.weight(j));
            f[i] = -eps * lse(tmp);
        }
        for (std::size_t j = 0; j < m; ++j) {
            tmp.assign(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = (f[i] - c(i, j)) / eps + std::log(mu.weight(i));
            g[j] = -eps * lse(tmp);
        }
    }
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            cost += std::exp((f[i] + g[j] - c(i, j)) / eps) * mu.weight(i) * nu.weight(j) * c(i, j);
    return std::sqrt(std::max(0.0, cost));
}

/// Deterministic stride subsample of at most max_size samples; the seed picks
/// the offset. Weights are renormalized.
inline EmpiricalMeasure subsample(const EmpiricalMeasure& mu, std::size_t max_size, std::uint64_t seed) {
    if (max_size == 0) throw InvalidArgument("subsample: max_size must be positive");
    if (mu.size() <= max_size) return mu;
    const std::size_t stride = (mu.size() + max_size - 1) / max_size;
    CounterRng rng(seed, 0x5AB5ull);
    const auto offset = static_cast<std::size_t>(rng.uniform() * static_cast<double>(stride));
    std::vector<SpectralField> s;
    std::vector<double> w;
    double total = 0.0;
    for (std::size_t i = offset; i < mu.size(); i += stride) {
        s.push_back(mu.sample(i));
        w.push_back(mu.weight(i));
        total += mu.weight(i);
    }
    if (mu.uniform()) return EmpiricalMeasure(std::move(s));
    for (double& x : w) x /= total;
    return EmpiricalMeasure(std::move(s), std::move(w));
}

/// sup_{mu in A} inf_{nu in B} W_2(mu, nu)
inline double hausdorff_semidistance(const std::vector<EmpiricalMeasure>& A, const std::vector<EmpiricalMeasure>& B) {
    if (A.empty() || B.empty()) throw InvalidArgument("hausdorff_semidistance: empty set");
    double worst = 0.0;
    for (const auto& mu : A) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& nu : B) best = std::min(best, wasserstein2(mu, nu));
        worst = std::max(worst, best);
    }
    return worst;
}

}  // namespace cglavg

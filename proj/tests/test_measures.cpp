#include <cglavg/coefficients.hpp>
#include <cglavg/measures.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

using namespace cglavg;

namespace {

std::vector<SpectralField> cloud(const GridPtr& g, std::uint64_t seed, std::size_t n, double scale = 1.0) {
    CounterRng rng(seed, 0);
    std::vector<SpectralField> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(random_field(g, rng, scale * (0.5 + rng.uniform()), 6));
    return out;
}

double brute_force_w2(const std::vector<SpectralField>& a, const std::vector<SpectralField>& b) {
    std::vector<std::size_t> perm(a.size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double cost = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) cost += distance_squared(a[i], b[perm[i]]);
        best = std::min(best, cost / static_cast<double>(a.size()));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::sqrt(best);
}

}  // namespace

TEST(EmpiricalMeasure, Validation) {
    const auto g = make_grid(1, 8);
    const auto xs = cloud(g, 1, 3);
    EXPECT_THROW(EmpiricalMeasure(std::vector<SpectralField>{}), InvalidArgument);
    EXPECT_THROW(EmpiricalMeasure(xs, {0.5, 0.5, 0.5}), InvalidArgument);
    EXPECT_THROW(EmpiricalMeasure(xs, {0.5, 0.5}), InvalidArgument);
    EXPECT_THROW(EmpiricalMeasure(xs, {1.5, -0.5, 0.0}), InvalidArgument);
    auto bad = xs;
    bad[1][1] = Complex(std::numeric_limits<double>::quiet_NaN(), 0.0);
    EXPECT_THROW(EmpiricalMeasure{bad}, InvalidArgument);
    std::vector<SpectralField> mixed{xs[0], SpectralField::mode(make_grid(1, 16), {1, 0, 0}, 1.0)};
    EXPECT_THROW(EmpiricalMeasure{mixed}, InvalidArgument);
    const EmpiricalMeasure mu(xs, {0.25, 0.25, 0.5});
    EXPECT_FALSE(mu.uniform());
    EXPECT_TRUE(EmpiricalMeasure(xs, {1.0 / 3, 1.0 / 3, 1.0 / 3}).uniform());
    double m2 = 0.25 * norm_squared(xs[0]) + 0.25 * norm_squared(xs[1]) + 0.5 * norm_squared(xs[2]);
    EXPECT_NEAR(second_moment(mu), m2, 1e-14);
}

TEST(Wasserstein, IdenticalMeasuresAreAtZero) {
    const auto g = make_grid(1, 16);
    const auto xs = cloud(g, 2, 64);
    EXPECT_EQ(wasserstein2(EmpiricalMeasure(xs), EmpiricalMeasure(xs)), 0.0);
    auto shuffled = xs;
    std::reverse(shuffled.begin(), shuffled.end());
    EXPECT_EQ(wasserstein2(EmpiricalMeasure(xs), EmpiricalMeasure(shuffled)), 0.0);
}

TEST(Wasserstein, TwoPointMeasures) {
    const auto g = make_grid(1, 8);
    const auto a = cloud(g, 3, 2), b = cloud(g, 4, 2);
    const double direct = std::sqrt(0.5 * std::min(distance_squared(a[0], b[0]) + distance_squared(a[1], b[1]),
                                                   distance_squared(a[0], b[1]) + distance_squared(a[1], b[0])));
    EXPECT_NEAR(wasserstein2(EmpiricalMeasure(a), EmpiricalMeasure(b)), direct, 1e-14);
}

TEST(Wasserstein, AssignmentMatchesBruteForce) {
    const auto g = make_grid(1, 8);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto a = cloud(g, 10 + s, 6), b = cloud(g, 100 + s, 6, 1.5);
        EXPECT_NEAR(wasserstein2(EmpiricalMeasure(a), EmpiricalMeasure(b)), brute_force_w2(a, b), 1e-12);
    }
}

TEST(Wasserstein, PointMassAgainstWeightedCloud) {
    const auto g = make_grid(1, 8);
    const auto a = cloud(g, 5, 3);
    const SpectralField y = SpectralField::mode(g, {2, 0, 0}, Complex(0.1, 0.2));
    const std::vector<double> w{0.2, 0.3, 0.5};
    double expected = 0.0;
    for (std::size_t i = 0; i < 3; ++i) expected += w[i] * distance_squared(a[i], y);
    EXPECT_NEAR(wasserstein2(EmpiricalMeasure(a, w), EmpiricalMeasure::point_mass(y)), std::sqrt(expected), 1e-13);
}

TEST(Wasserstein, TwoByTwoTransportLinearProgram) {
    // One free variable p = pi_11 in [max(0, a1 - b2), min(a1, b1)]; the cost
    // is linear in p so the optimum sits at an endpoint.
    const auto g = make_grid(1, 8);
    const auto x = cloud(g, 6, 2), y = cloud(g, 7, 2);
    const std::vector<double> a{0.3, 0.7}, b{0.6, 0.4};
    auto cost = [&](double p) {
        const double p12 = a[0] - p, p21 = b[0] - p, p22 = b[1] - p12;
        return p * distance_squared(x[0], y[0]) + p12 * distance_squared(x[0], y[1]) +
               p21 * distance_squared(x[1], y[0]) + p22 * distance_squared(x[1], y[1]);
    };
    const double lo = std::max(0.0, a[0] - b[1]), hi = std::min(a[0], b[0]);
    const double expected = std::sqrt(std::min(cost(lo), cost(hi)));
    EXPECT_NEAR(wasserstein2(EmpiricalMeasure(x, a), EmpiricalMeasure(y, b)), expected, 1e-12);
}

TEST(Wasserstein, TransportSolverAgreesWithAssignment) {
    const auto g = make_grid(1, 8);
    const auto a = cloud(g, 8, 12), b = cloud(g, 9, 12);
    const CostMatrix c = squared_distance_matrix(EmpiricalMeasure(a), EmpiricalMeasure(b));
    const std::vector<double> w(12, 1.0 / 12);
    const auto col = solve_assignment(c);
    double assign = 0.0;
    for (std::size_t i = 0; i < col.size(); ++i) assign += c(i, col[i]);
    EXPECT_NEAR(solve_transport(c, w, w), assign / 12.0, 1e-12);
}

TEST(Wasserstein, MetricProperties) {
    const auto g = make_grid(1, 16);
    const EmpiricalMeasure a(cloud(g, 20, 24)), b(cloud(g, 21, 24, 2.0)), c(cloud(g, 22, 24, 0.5));
    const double ab = wasserstein2(a, b), ba = wasserstein2(b, a);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_LE(ab, wasserstein2(a, c) + wasserstein2(c, b) + 1e-12);
    // Translation by a fixed field moves W_2 by exactly its norm.
    const SpectralField shift = SpectralField::mode(g, {3, 0, 0}, Complex(0.4, -0.1));
    std::vector<SpectralField> moved;
    for (const auto& s : a.samples()) moved.push_back(s + shift);
    EXPECT_NEAR(wasserstein2(a, EmpiricalMeasure(moved)), std::sqrt(norm_squared(shift)), 1e-12);
}

TEST(Wasserstein, SizeLimitAndSubsample) {
    const auto g = make_grid(1, 4);
    std::vector<SpectralField> big(kExactAssignmentLimit + 1, SpectralField::mode(g, {1, 0, 0}, 1.0));
    const EmpiricalMeasure mu(big);
    EXPECT_THROW(wasserstein2(mu, mu), SizeLimitError);
    const EmpiricalMeasure small = subsample(mu, 1000, 3);
    EXPECT_LE(small.size(), 1000u);
    EXPECT_TRUE(small.uniform());
    EXPECT_EQ(subsample(mu, 1000, 3).size(), small.size());
    EXPECT_EQ(wasserstein2(small, small), 0.0);
    EXPECT_THROW(subsample(mu, 0, 1), InvalidArgument);

    const auto xs = cloud(g, 1, 10);
    std::vector<double> w(10);
    for (std::size_t i = 0; i < 10; ++i) w[i] = static_cast<double>(i + 1) / 55.0;
    const EmpiricalMeasure weighted = subsample(EmpiricalMeasure(xs, w), 4, 9);
    double total = 0.0;
    for (double x : weighted.weights()) total += x;
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Wasserstein, EntropicApproximation) {
    const auto g = make_grid(1, 8);
    const EmpiricalMeasure a(cloud(g, 30, 16)), b(cloud(g, 31, 16, 1.5));
    const double exact = wasserstein2(a, b);
    const double approx = wasserstein2_entropic(a, b, 1e-3, 2000);
    EXPECT_NEAR(approx, exact, 0.02 * exact);
}

TEST(Hausdorff, SemidistanceMatchesExhaustiveSearch) {
    const auto g = make_grid(1, 8);
    std::vector<EmpiricalMeasure> A, B;
    for (std::uint64_t i = 0; i < 3; ++i) A.emplace_back(cloud(g, 40 + i, 5));
    for (std::uint64_t i = 0; i < 4; ++i) B.emplace_back(cloud(g, 50 + i, 5, 1.2));
    double expected = 0.0;
    for (const auto& a : A) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& b : B) best = std::min(best, brute_force_w2(a.samples(), b.samples()));
        expected = std::max(expected, best);
    }
    EXPECT_NEAR(hausdorff_semidistance(A, B), expected, 1e-12);
    // A subset of B is at distance zero.
    std::vector<EmpiricalMeasure> sub{B[2], B[0]};
    EXPECT_EQ(hausdorff_semidistance(sub, B), 0.0);
    EXPECT_GT(hausdorff_semidistance(B, sub), 0.0);
    EXPECT_THROW(hausdorff_semidistance({}, B), InvalidArgument);
}

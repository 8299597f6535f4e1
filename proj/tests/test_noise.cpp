#include <cglavg/noise.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace cglavg;

namespace {

struct Moments {
    double mean = 0.0, var = 0.0;
};

Moments moments(const std::vector<double>& xs) {
    Moments m;
    for (double x : xs) m.mean += x;
    m.mean /= static_cast<double>(xs.size());
    for (double x : xs) m.var += (x - m.mean) * (x - m.mean);
    m.var /= static_cast<double>(xs.size() - 1);
    return m;
}

}  // namespace

TEST(CounterRng, NormalAndUniformMoments) {
    CounterRng rng(42, 7);
    std::vector<double> z, u;
    for (int i = 0; i < 40000; ++i) {
        z.push_back(rng.normal());
        u.push_back(rng.uniform());
    }
    const Moments mz = moments(z), mu = moments(u);
    EXPECT_LT(std::abs(mz.mean) / std::sqrt(1.0 / 40000), 4.0);
    EXPECT_LT(std::abs(mz.var - 1.0) / std::sqrt(2.0 / 40000), 5.0);
    EXPECT_LT(std::abs(mu.mean - 0.5) / std::sqrt(1.0 / 12 / 40000), 4.0);
    for (double x : u) {
        EXPECT_GE(x, 0.0);
        EXPECT_LT(x, 1.0);
    }
    CounterRng again(42, 7);
    EXPECT_EQ(again.normal(), z[0]);
    CounterRng other(42, 8);
    EXPECT_NE(other.normal(), z[0]);
}

TEST(WienerSampler, IncrementStatistics) {
    const double h = 0.01;
    const WienerSampler w(2024, 3, h);
    const std::size_t n = 20000;
    const IncrementTable tab = w.increments(-50.0, -50.0 + h * n, n);
    for (std::size_t c = 0; c < 3; ++c) {
        std::vector<double> xs;
        for (std::size_t s = 0; s < n; ++s) xs.push_back(tab(c, s));
        const Moments m = moments(xs);
        EXPECT_LT(std::abs(m.mean) / std::sqrt(h / n), 4.0) << "channel " << c;
        EXPECT_LT(std::abs(m.var - h) / (h * std::sqrt(2.0 / n)), 5.0) << "channel " << c;
    }
    double cross = 0.0, lag = 0.0;
    for (std::size_t s = 0; s + 1 < n; ++s) {
        cross += tab(0, s) * tab(1, s);
        lag += tab(2, s) * tab(2, s + 1);
    }
    EXPECT_LT(std::abs(cross / n / h) * std::sqrt(static_cast<double>(n)), 4.0);
    EXPECT_LT(std::abs(lag / n / h) * std::sqrt(static_cast<double>(n)), 4.0);
}

TEST(WienerSampler, RefinedIncrementStatistics) {
    const double h = 0.5;
    const WienerSampler w(9, 1, h);
    const std::size_t n = 16000;
    const double fine = h / 8.0;
    const IncrementTable tab = w.increments(0.0, fine * n, n);
    std::vector<double> xs;
    for (std::size_t s = 0; s < n; ++s) xs.push_back(tab(0, s));
    const Moments m = moments(xs);
    EXPECT_LT(std::abs(m.var - fine) / (fine * std::sqrt(2.0 / n)), 5.0);
    double lag = 0.0;
    for (std::size_t s = 0; s + 1 < n; s += 2) lag += xs[s] * xs[s + 1];
    EXPECT_LT(std::abs(lag / (n / 2) / fine) * std::sqrt(n / 2.0), 4.0);
}

TEST(WienerSampler, RefinementSumsAreExact) {
    const WienerSampler w(77, 4, 0.1);
    for (double t0 : {-3.0, -0.1, 0.0, 2.5}) {
        const IncrementTable coarse = w.increments(t0, t0 + 0.8, 1);
        for (std::size_t steps : {2u, 8u, 64u, 1024u}) {
            const IncrementTable fine = w.increments(t0, t0 + 0.8, steps);
            for (std::size_t c = 0; c < 4; ++c) {
                double acc = 0.0;
                for (std::size_t s = 0; s < steps; ++s) acc += fine(c, s);
                EXPECT_EQ(acc, coarse(c, 0)) << "t0 " << t0 << " steps " << steps;
            }
        }
    }
}

TEST(WienerSampler, OverlappingQueriesAgree) {
    const WienerSampler w(5, 2, 0.25);
    const IncrementTable a = w.increments(-1.0, 1.0, 16);
    const IncrementTable b = w.increments(0.0, 0.5, 4);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t s = 0; s < 4; ++s) EXPECT_EQ(a(c, 8 + s), b(c, s));
    std::vector<double> dw(2);
    w.step_increments(0.125, 0.125, dw);
    EXPECT_EQ(dw[0], a(0, 9));
    EXPECT_EQ(dw[1], a(1, 9));
}

TEST(WienerSampler, PathsAndSeedsAreIndependentStreams) {
    const WienerSampler w(1, 1, 0.1);
    const WienerSampler p1 = w.for_path(1);
    const WienerSampler w2(2, 1, 0.1);
    const IncrementTable a = w.increments(0.0, 0.1, 1);
    EXPECT_EQ(a(0, 0), WienerSampler(1, 1, 0.1).increments(0.0, 0.1, 1)(0, 0));
    EXPECT_NE(a(0, 0), p1.increments(0.0, 0.1, 1)(0, 0));
    EXPECT_NE(a(0, 0), w2.increments(0.0, 0.1, 1)(0, 0));
    EXPECT_EQ(p1.path(), 1u);
    EXPECT_EQ(p1.seed(), 1u);
    const auto [x, y] = coupled_pair(p1);
    EXPECT_EQ(x.increments(0.0, 1.0, 10)(0, 3), y.increments(0.0, 1.0, 10)(0, 3));
}

TEST(WienerSampler, RejectsBadIntervals) {
    const WienerSampler w(1, 1, 0.1);
    EXPECT_THROW(w.increments(1.0, 1.0, 1), InvalidArgument);
    EXPECT_THROW(w.increments(1.0, 0.0, 1), InvalidArgument);
    EXPECT_THROW(w.increments(0.0, 1.0, 0), InvalidArgument);
    EXPECT_THROW(w.increments(0.0, 0.1 / 3.0, 1), InvalidArgument);
    EXPECT_THROW(WienerSampler(1, 0, 0.1), InvalidArgument);
    EXPECT_THROW(WienerSampler(1, 1, 0.0), InvalidArgument);
}

#include <cglavg/experiments.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <numbers>

using namespace cglavg;

namespace {

ExperimentConfig small() {
    ExperimentConfig c;
    c.modes = 8;
    c.n_paths = 16;
    c.bootstrap_samples = 8;
    c.epsilon_grid = {0.5, 0.25};
    c.horizon = 0.5;
    c.eval_times = {0.0, 0.5};
    c.global_points = 4;
    c.phase_points = 4;
    return c;
}

template <class Fn>
void expect_config_error(Fn&& fn, const std::string& fragment) {
    try {
        fn();
        ADD_FAILURE() << "expected ConfigError containing '" << fragment << "'";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
}

}  // namespace

TEST(ExperimentConfig, Validation) {
    EXPECT_NO_THROW(validate(ExperimentConfig{}));
    auto c = small();
    c.dt = 0.1;
    expect_config_error([&] { validate(c); }, "dt > epsilon/20");
    c = small();
    c.steps_per_epsilon = 10;
    expect_config_error([&] { validate(c); }, "dt > epsilon/20");
    c = small();
    c.epsilon_grid = {0.1, 0.5};
    expect_config_error([&] { validate(c); }, "strictly decreasing");
    c = small();
    c.epsilon_grid = {1.5};
    expect_config_error([&] { validate(c); }, "(0, 1]");
    c = small();
    c.phase_points = 3;
    expect_config_error([&] { validate(c); }, "phase_points");
    c = small();
    c.depth_schedule = {8.0, 4.0};
    expect_config_error([&] { validate(c); }, "depth_schedule");
    c = small();
    c.n_paths = 1;
    expect_config_error([&] { validate(c); }, "paths");
}

TEST(ExperimentHelpers, StepsAndGrids) {
    auto c = small();
    EXPECT_DOUBLE_EQ(step_for(c, 0.5), 0.5 / 40.0);
    c.dt = 0.001;
    EXPECT_DOUBLE_EQ(step_for(c, 0.5), 0.001);
    EXPECT_DOUBLE_EQ(detail::fitting_step(1.0, 0.3), 0.25);
    EXPECT_DOUBLE_EQ(detail::fitting_step(1.0, 0.25), 0.25);

    const auto set = make_family(small()).with_epsilon(0.5);
    const auto [times, dt] = detail::period_grid(set, small(), 0.5);
    ASSERT_EQ(times.size(), 4u);
    EXPECT_NEAR(times[1], std::numbers::pi / 4.0, 1e-15);
    EXPECT_LE(dt, 0.5 / 40.0);
    EXPECT_NEAR(times[1] / dt, std::nearbyint(times[1] / dt), 1e-9);

    auto bad = small();
    bad.family = "quasi";
    EXPECT_THROW(make_family(bad), InvalidArgument);
}

TEST(ExperimentHelpers, BootstrapIsDeterministic) {
    const std::vector<double> xs{1.0, 2.0, 3.0, 4.0, 10.0};
    auto mean = [&](const std::vector<std::size_t>& idx) {
        double a = 0.0;
        for (auto i : idx) a += xs[i];
        return a / static_cast<double>(idx.size());
    };
    const auto a = detail::bootstrap_interval(xs.size(), 200, 7, mean);
    const auto b = detail::bootstrap_interval(xs.size(), 200, 7, mean);
    EXPECT_EQ(a, b);
    EXPECT_LE(a.first, 4.0);
    EXPECT_GE(a.second, 4.0);
    EXPECT_GE(a.first, 1.0);
    EXPECT_LE(a.second, 10.0);
    const auto z = detail::bootstrap_interval(xs.size(), 0, 7, mean);
    EXPECT_EQ(z.first, 4.0);
    EXPECT_EQ(z.second, 4.0);
}

TEST(FirstBogolyubov, ConstantFamilyIsItsOwnAverage) {
    auto c = small();
    c.family = "constant";
    const ConvergenceReport rep = run_first_bogolyubov(c);
    ASSERT_EQ(rep.rows.size(), 2u);
    for (const auto& r : rep.rows) {
        EXPECT_EQ(r.estimate, 0.0);
        EXPECT_TRUE(r.completed);
    }
    EXPECT_FALSE(rep.monotone);
}

TEST(FirstBogolyubov, ReproducibleAndWorkerIndependent) {
    auto c = small();
    setenv("CGL_THREADS", "1", 1);
    const ConvergenceReport a = run_first_bogolyubov(c);
    setenv("CGL_THREADS", "3", 1);
    const ConvergenceReport b = run_first_bogolyubov(c);
    unsetenv("CGL_THREADS");
    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        EXPECT_EQ(a.rows[i].estimate, b.rows[i].estimate);
        EXPECT_EQ(a.rows[i].ci_low, b.rows[i].ci_low);
        EXPECT_EQ(a.rows[i].ci_high, b.rows[i].ci_high);
        EXPECT_GT(a.rows[i].estimate, 0.0);
        EXPECT_LE(a.rows[i].ci_low, a.rows[i].estimate);
        EXPECT_GE(a.rows[i].ci_high, a.rows[i].estimate);
    }
    EXPECT_EQ(a.metadata, b.metadata);
}

TEST(FirstBogolyubov, RefusesBrokenHypotheses) {
    auto c = small();
    c.params.q1 = 0.5;
    EXPECT_THROW(run_first_bogolyubov(c), ConditionError);
    c = small();
    c.params.r = 1.3;
    EXPECT_THROW(run_first_bogolyubov(c), ConditionError);
    c = small();
    c.params.gamma0 = 0.4;
    EXPECT_THROW(run_first_bogolyubov(c), ConditionError);
}

TEST(SecondBogolyubov, ZeroForcingGivesZero) {
    auto c = small();
    c.params.c_f = c.params.b0 = c.params.b1 = 0.0;
    c.params.r = 0.0;
    c.params.sigma_scale = 0.0;
    const ConvergenceReport rep = run_second_bogolyubov(c);
    for (const auto& r : rep.rows) {
        EXPECT_TRUE(r.completed);
        EXPECT_EQ(r.estimate, 0.0);
    }
    for (const auto& tr : rep.time_rows) EXPECT_EQ(tr.size(), 2u);
}

TEST(SecondBogolyubov, NeedsTheStrongerGap) {
    auto c = small();
    c.params.r = 0.5;  // gap1 = 0.675 > 0 but gap2 = -0.325
    EXPECT_THROW(run_second_bogolyubov(c), ConditionError);
    EXPECT_THROW(run_global_averaging(c), ConditionError);
}

TEST(GlobalAveraging, AgreesWithSecondOrderOnThePeriodGrid) {
    auto c = small();
    c.epsilon_grid = {0.5};
    c.eval_over_period = true;
    const ConvergenceReport second = run_second_bogolyubov(c);
    const ConvergenceReport global = run_global_averaging(c);
    ASSERT_EQ(second.rows.size(), 1u);
    ASSERT_EQ(global.time_rows.front().size(), c.global_points);
    // Same paths and phases: each phase's best match is at most its own W2.
    for (std::size_t j = 0; j < c.global_points; ++j)
        EXPECT_LE(global.time_rows[0][j].w2, second.time_rows[0][j].w2 + 1e-15);
    EXPECT_LE(global.rows[0].estimate, second.rows[0].estimate + 1e-15);
    EXPECT_GT(global.rows[0].estimate, 0.0);
}

TEST(Periodicity, PeriodAndControls) {
    auto c = small();
    c.family = "periodic_pair";
    c.params.q1 = 0.5;
    c.n_paths = 24;
    const PeriodicityReport rep = run_periodicity_check(c);
    EXPECT_NEAR(rep.period, 2.0 * std::numbers::pi, 1e-12);
    EXPECT_EQ(rep.rows.size(), 4u);
    EXPECT_GT(rep.floor, 0.0);
    EXPECT_EQ(rep.floor_per_phase.size(), 4u);
    // The pullback law at t and t + P are built from one path each, so the
    // W2 between them sits at sampling noise, not above it.
    EXPECT_TRUE(rep.pass) << rep.max_w2 << " floor " << rep.floor;

    c.probe_period_factor = 0.3;
    EXPECT_THROW(run_periodicity_check(c), ConfigError);
}

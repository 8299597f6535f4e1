#include <cglavg/cli.hpp>
#include <cglavg/config.hpp>
#include <cglavg/io.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace cglavg;

namespace {

std::string config_error(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("cglavg_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Toml, ParsesTheSupportedSubset) {
    const TomlTable t = parse_toml(R"(
# comment
family = "benchmark_A"   # trailing
[family_params]
alpha = -0.25
b0 = 1e-3
[experiment]
epsilon_grid = [0.5, 0.1, 0.02]
eval_over_period = true
paths = 1_024
)");
    EXPECT_EQ(t.at("family").raw, "benchmark_A");
    EXPECT_EQ(t.at("family_params.alpha").number, -0.25);
    EXPECT_EQ(t.at("family_params.b0").number, 1e-3);
    EXPECT_EQ(t.at("experiment.epsilon_grid").items.size(), 3u);
    EXPECT_TRUE(t.at("experiment.eval_over_period").boolean);
    EXPECT_EQ(t.at("experiment.paths").line, 10);
    EXPECT_EQ(t.at("experiment.paths").number, 1024.0);
}

TEST(Toml, ErrorsCarryLineNumbers) {
    EXPECT_NE(config_error("family = \"benchmark_A\"\n[grid\n").find("line 2"), std::string::npos);
    EXPECT_NE(config_error("\n\nx 3\n").find("line 3"), std::string::npos);
    EXPECT_NE(config_error("[grid]\nmodes = 16\nmodes = 32\n").find("line 3: duplicate key"), std::string::npos);
    EXPECT_NE(config_error("[experiment]\nepsilon_grid = [0.5, 0.1\n").find("line 2"), std::string::npos);
    EXPECT_NE(config_error("family = benchmark_A\n").find("line 1"), std::string::npos);
    EXPECT_NE(config_error("[grid]\nmodes = 16.5\n").find("line 2"), std::string::npos);
    EXPECT_NE(config_error("[experiment]\npaths = true\n").find("expects a number"), std::string::npos);
}

TEST(Config, MinimalFileEchoesEveryDefault) {
    const FullConfig cfg = parse_config_text("family = \"benchmark_A\"\n");
    const FullConfig defaults = config_from_table({});
    EXPECT_EQ(config_echo(cfg), config_echo(defaults));
    const auto echo = config_echo(cfg);
    EXPECT_EQ(echo.size(), config_keys().size());
    auto has = [&](const std::string& line) { return std::find(echo.begin(), echo.end(), line) != echo.end(); };
    EXPECT_TRUE(has("family = \"benchmark_A\""));
    EXPECT_TRUE(has("grid.modes = 32"));
    EXPECT_TRUE(has("experiment.epsilon_grid = [0.5, 0.10000000000000001, 0.02]"));
    EXPECT_TRUE(has("experiment.paths = 256"));
    EXPECT_TRUE(has("integrator.scheme = \"exponential_euler\""));
    EXPECT_TRUE(has("family_params.q1 = 0.0"));
    EXPECT_TRUE(has("experiment.eval_over_period = false"));
}

TEST(Config, EchoRoundTrips) {
    FullConfig cfg = parse_config_text(
        "[family_params]\nr = 0.25\n[experiment]\nseed = 18446744073709551615\nepsilon_grid = [0.4, 0.05]\n"
        "[integrator]\nscheme = \"exponential_rk2\"\n");
    EXPECT_EQ(cfg.experiment.seed, 18446744073709551615ull);
    EXPECT_EQ(cfg.experiment.scheme, Scheme::exponential_rk2);
    // Rebuild a file from the echo and parse it again.
    std::string text, section;
    for (const auto& line : config_echo(cfg)) {
        const auto dot = line.find('.');
        const auto eq = line.find(" = ");
        if (dot == std::string::npos || dot > eq) {
            text = line + "\n" + text;
            continue;
        }
        const std::string sec = line.substr(0, dot);
        if (sec != section) text += "[" + sec + "]\n";
        section = sec;
        text += line.substr(dot + 1) + "\n";
    }
    const FullConfig again = parse_config_text(text);
    EXPECT_EQ(config_echo(again), config_echo(cfg));
    EXPECT_EQ(config_hash(again), config_hash(cfg));
}

TEST(Config, RejectsBadSettingsWithNamedErrors) {
    EXPECT_NE(config_error("[integrator]\ndt = 0.1\n").find("dt > epsilon/20"), std::string::npos);
    const std::string unknown = config_error("[experiment]\n\nepsilon_gird = [0.5]\n");
    EXPECT_NE(unknown.find("line 3"), std::string::npos) << unknown;
    EXPECT_NE(unknown.find("did you mean 'experiment.epsilon_grid'"), std::string::npos) << unknown;
    EXPECT_EQ(nearest_key("family_params.gama0"), "family_params.gamma0");
    EXPECT_EQ(nearest_key("modes"), "grid.modes");
    EXPECT_NE(config_error("[integrator]\nscheme = \"rk4\"\n").find("unknown scheme"), std::string::npos);
    EXPECT_NE(config_error("[simulate]\nepsilon = 0\n").find("simulate.epsilon"), std::string::npos);
    EXPECT_THROW(parse_config("/nonexistent/cglavg.toml"), ConfigError);
}

TEST(Config, HashIsStableAndSensitive) {
    const FullConfig a = parse_config_text("");
    const FullConfig b = parse_config_text("# only a comment\n");
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
    const FullConfig c = parse_config_text("[experiment]\nseed = 1\n");
    EXPECT_NE(config_hash(a), config_hash(c));
    EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
}

TEST(Io, ExactTextAndCsv) {
    EXPECT_EQ(exact_text(0.1), "0.1");
    EXPECT_EQ(exact_text(1.0 / 3.0), "0.3333333333333333");
    EXPECT_EQ(std::stod(exact_text(2.0 / 7.0)), 2.0 / 7.0);
    CsvTable t;
    t.metadata = {{"k", "v"}};
    t.header = {"a", "b"};
    t.rows = {{"1", "2"}};
    EXPECT_EQ(t.render(), "# k: v\na,b\n1,2\n");

    ConvergenceReport rep;
    rep.experiment = "x";
    rep.rows.push_back({0.5, 0.25, 0.2, 0.3, 10, 0.0125, 9, true});
    const std::string csv = convergence_csv(rep).render();
    EXPECT_NE(csv.find("epsilon,estimate,ci_low,ci_high,n_paths,dt,seed\n0.5,0.25,0.2,0.3,10,0.0125,9\n"),
              std::string::npos);
    EXPECT_NE(csv.find("# verdict: FAIL"), std::string::npos);
}

TEST(Io, SampleFilesRoundTrip) {
    const auto g = make_grid(2, 4, 3.0);
    CounterRng rng(4, 0);
    std::vector<SpectralField> xs;
    for (int i = 0; i < 3; ++i) xs.push_back(random_field(g, rng, 1.0 + i, 10));
    const std::string bytes = encode_samples(xs);
    EXPECT_EQ(bytes.size(), 32u + 3u * 25u * 16u);
    EXPECT_EQ(bytes.substr(0, 4), "CGLF");
    const auto back = decode_samples(bytes);
    ASSERT_EQ(back.size(), 3u);
    EXPECT_EQ(back[0].grid().period(), 3.0);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(distance_squared(back[i], xs[i]), 0.0);
    EXPECT_THROW(decode_samples(bytes.substr(0, bytes.size() - 1)), Error);
    EXPECT_THROW(decode_samples("XXXX" + bytes.substr(4)), Error);
}

TEST(Cli, OverridesAndQuick) {
    FullConfig cfg;
    CliOverrides o;
    o.seed = 5;
    o.paths = 64;
    o.quick = true;
    apply_overrides(cfg, o);
    EXPECT_EQ(cfg.experiment.seed, 5u);
    EXPECT_EQ(cfg.experiment.n_paths, 16u);
    EXPECT_EQ(cfg.experiment.bootstrap_samples, 10u);
    EXPECT_DOUBLE_EQ(cfg.experiment.horizon, 0.5);
    CliOverrides tiny;
    tiny.paths = 1;
    EXPECT_THROW(apply_overrides(cfg, tiny), ConfigError);
}

TEST(Cli, DispatchExitCodes) {
    const auto dir = scratch_dir("dispatch");
    FullConfig cfg;
    cfg.experiment.modes = 16;
    RunManifest m;
    m.out_dir = dir.string();
    m.config_hash = config_hash(cfg);
    m.timestamp = "2000-01-01T00:00:00Z";
    std::ostringstream out;

    m.subcommand = "check";
    EXPECT_EQ(dispatch(m, cfg, out), exit_pass);
    EXPECT_TRUE(std::filesystem::exists(dir / "check_conditions.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir / "check_kbm_moduli.csv"));
    const std::string check = slurp(dir / "check_conditions.csv");
    EXPECT_NE(check.find("# config: grid.modes = 16"), std::string::npos);
    EXPECT_EQ(check.find("2000-01-01"), std::string::npos);
    EXPECT_NE(slurp(dir / "check_manifest.txt").find("timestamp = 2000-01-01T00:00:00Z"), std::string::npos);

    FullConfig hot = cfg;
    hot.experiment.params.r = 1.3;
    m.subcommand = "bogolyubov1";
    EXPECT_EQ(dispatch(m, hot, out), exit_condition);
    EXPECT_FALSE(std::filesystem::exists(dir / "bogolyubov1.csv"));
    m.subcommand = "check";
    EXPECT_EQ(dispatch(m, hot, out), exit_condition);

    FullConfig sim = cfg;
    sim.experiment.n_paths = 8;
    sim.experiment.horizon = 0.5;
    m.subcommand = "simulate";
    EXPECT_EQ(dispatch(m, sim, out), exit_pass);
    const auto terminal = (dir / "simulate_terminal.cglf").string();
    ASSERT_TRUE(std::filesystem::exists(terminal));
    EXPECT_EQ(read_samples(terminal).size(), 8u);

    m.subcommand = "wasserstein";
    m.positional = {terminal, terminal};
    std::ostringstream w;
    EXPECT_EQ(dispatch(m, cfg, w), exit_pass);
    EXPECT_EQ(w.str(), "0.0\n");

    m.subcommand = "teleport";
    EXPECT_THROW(dispatch(m, cfg, out), InvalidArgument);
    std::filesystem::remove_all(dir);
}

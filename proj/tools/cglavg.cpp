#include <cglavg.hpp>

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Averaging experiments for the stochastic complex Ginzburg-Landau equation"};
    app.require_subcommand(1);
    std::string config_path, out_dir = ".";
    std::uint64_t seed = 0;
    std::size_t paths = 0;
    bool quick = false;
    std::vector<std::string> files;

    std::vector<CLI::App*> subs;
    for (const auto& name : cglavg::subcommands()) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "experiment config (TOML)");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed, "overrides experiment.seed");
        sub->add_option("--paths", paths, "overrides experiment.paths");
        sub->add_flag("--quick", quick, "quarter-size smoke run");
        if (name == "wasserstein") sub->add_option("files", files, "two CGLF sample files")->expected(2)->required();
        subs.push_back(sub);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : cglavg::exit_internal;
    }

    cglavg::RunManifest m;
    for (auto* s : subs)
        if (s->parsed()) m.subcommand = s->get_name();
    m.config_path = config_path;
    m.out_dir = out_dir;
    m.positional = files;
    m.timestamp = cglavg::utc_timestamp();
    try {
        cglavg::FullConfig cfg = config_path.empty() ? cglavg::FullConfig{} : cglavg::parse_config(config_path);
        cglavg::CliOverrides o;
        for (auto* s : subs) {
            if (!s->parsed()) continue;
            if (s->count("--seed")) o.seed = seed;
            if (s->count("--paths")) o.paths = paths;
        }
        o.quick = quick;
        cglavg::apply_overrides(cfg, o);
        m.config_hash = cglavg::config_hash(cfg);
        return cglavg::dispatch(m, cfg, std::cout);
    } catch (const cglavg::ConditionError& e) {
        std::cerr << "CONDITION: " << e.what() << "\n";
        return cglavg::exit_condition;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cglavg::exit_internal;
    }
}

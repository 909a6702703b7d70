#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "epiwane/config.hpp"
#include "epiwane/error.hpp"
#include "epiwane/harness.hpp"
#include "epiwane/log.hpp"
#include "epiwane/parallel.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"epiwane: individual-based epidemic model with varying infectivity and waning immunity"};
    app.require_subcommand(1, 1);

    std::string config_path;
    std::string out;
    std::uint64_t seed = 0;
    std::size_t threads = epiwane::default_threads();

    const std::map<std::string, std::string> about{
        {"simulate", "one population run: trajectory and infection events"},
        {"flln", "limit equations on the config grid"},
        {"fclt", "driver covariance and model fluctuation paths"},
        {"ensemble", "replicated runs for every population size"},
        {"verify", "checks listed under verify in the config"},
        {"compare", "model paths against stored ensemble samples"},
    };
    for (const std::string& name : epiwane::kSubcommands) {
        auto* sub = app.add_subcommand(name, about.at(name));
        sub->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output directory (default: config output_dir)");
        sub->add_option("--seed", seed, "master seed (default: config seed)");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        epiwane::init_logging();
        const std::string command = app.get_subcommands().front()->get_name();
        auto* sub = app.get_subcommand(command);
        const epiwane::ExperimentConfig config = epiwane::parse_config(config_path);

        epiwane::RunOptions opts;
        if (sub->count("--out"))
            opts.out = out;
        if (sub->count("--seed"))
            opts.seed = seed;
        opts.threads = threads;

        const epiwane::RunResult res = epiwane::run_subcommand(command, config, opts);
        if (res.report) {
            for (const auto& m : res.report->metrics)
                std::cout << (m.pass ? "PASS " : "FAIL ") << m.name << " value=" << m.value << " target=" << m.target
                          << " tol=" << m.tol << "\n";
            if (res.report->rate_fit)
                std::cout << "rate_fit slope=" << res.report->rate_fit->slope
                          << " r_squared=" << res.report->rate_fit->r_squared << "\n";
        }
        for (const auto& p : res.artifacts)
            std::cout << p.string() << "\n";
        return res.exit_code;
    }
    catch (const epiwane::Error& e) {
        std::cerr << "epiwane: " << e.what() << "\n";
        return 2;
    }
    catch (const std::exception& e) {
        std::cerr << "epiwane: " << e.what() << "\n";
        return 2;
    }
}

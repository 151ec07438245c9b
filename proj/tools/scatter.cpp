#include <spdlog/sinks/stdout_color_sinks.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "latscat/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Lattice scattering: energy surfaces, Born phases, S-matrices and their checks"};
    app.require_subcommand(1);
    std::string config_path, output;
    int jobs = 1;
    auto add = [&](const char* name, const char* help) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "run configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--output", output, "output directory (overrides run.output)");
        sub->add_option("--jobs", jobs, "worker thread cap")->check(CLI::PositiveNumber);
        return sub;
    };
    auto* surface = add("surface", "extract energy surfaces and run the coarea check");
    auto* phase = add("phase", "tabulate Born phases and the transport residual");
    auto* run = add("run", "full pipeline with kernel export");
    auto* verify = add("verify", "full pipeline, reports only");
    auto* oracle = add("oracle1d", "compare the d=1 solver against the transfer-matrix oracle");
    CLI11_PARSE(app, argc, argv);

    auto logger = spdlog::stderr_color_mt("scatter");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* lvl = std::getenv("SCATTER_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));

    try {
        latscat::RunConfig cfg = latscat::load_config(config_path);
        latscat::PipelineOptions opt{output, jobs};
        if (surface->parsed()) {
            latscat::cmd_surface(cfg, opt);
            return 0;
        }
        if (phase->parsed()) {
            latscat::cmd_phase(cfg, opt);
            return 0;
        }
        if (oracle->parsed()) return latscat::cmd_oracle1d(cfg, opt) ? 0 : 1;
        auto outcome = latscat::cmd_run(cfg, opt, run->parsed());
        (void)verify;
        std::cout << (outcome.pass ? "PASS" : "FAIL") << " report: " << (outcome.dir / "report.json").string()
                  << "\n";
        return outcome.pass ? 0 : 1;
    } catch (const latscat::Error& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 2;
    }
}

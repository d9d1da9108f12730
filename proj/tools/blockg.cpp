#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <iostream>

#include "blockg/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Bayesian model selection under g, hyper-g and block hyper-g priors"};
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<long> budget;
    bool orthogonalize = false;
    app.add_option("--config", config_path, "JSON run configuration")->required();
    app.add_option("--seed", seed, "override the config seed");
    app.add_flag("--orthogonalize", orthogonalize, "block-orthogonalize a non-orthogonal design");
    app.add_option("--budget", budget, "integrand evaluation budget per model");
    app.set_version_flag("--version", std::string(blockg::kVersion));
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "blockg: error=ConfigError kind=config message=" << e.what() << "\n";
        return 2;
    }
    try {
        blockg::cli::RunConfig cfg = blockg::cli::load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (orthogonalize) cfg.orthogonalize = true;
        if (budget) {
            if (*budget < 1) throw blockg::ConfigError("--budget must be positive");
            cfg.integration.max_evals = *budget;
        }
        std::filesystem::path out = cfg.output_dir;
        if (out.is_relative()) out = std::filesystem::path(cfg.base_dir) / out;
        const blockg::cli::Report report = blockg::cli::run(cfg);
        blockg::cli::write_report(report, out.string());
        for (const auto& [name, _] : report.files) std::cout << (out / name).string() << "\n";
        return report.exit_code;
    } catch (const blockg::Error& e) {
        std::cerr << blockg::cli::error_line(e) << "\n";
        return blockg::cli::exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "blockg: error=Internal kind=numerical message=" << e.what() << "\n";
        return 4;
    }
}

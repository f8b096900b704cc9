// fedmmx: deterministic federated multi-modal NAM simulator.
//
// Subcommands: generate | train | ablate | compare. See README.md for the
// config file format; FEDMMX_LOG_LEVEL=error|info|debug controls logging.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedmmx/config.hpp"
#include "fedmmx/harness.hpp"
#include "fedmmx/logging.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::string seeds;
    int parallel = 1;
};

fedmmx::ExperimentConfig load_with_overrides(const CommonOpts& opts) {
    fedmmx::ExperimentConfig cfg = fedmmx::load_config(opts.config_path);
    if (!opts.seeds.empty()) {
        cfg.seeds.clear();
        std::string current;
        for (const char ch : opts.seeds + ",") {
            if (ch == ',') {
                if (!current.empty()) cfg.seeds.push_back(std::stoull(current));
                current.clear();
            } else if (!std::isspace(static_cast<unsigned char>(ch))) {
                current += ch;
            }
        }
        if (cfg.seeds.empty()) throw std::invalid_argument("--seeds: no seeds given");
    }
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_parallel = true) {
    cmd->add_option("--config", opts.config_path, "experiment config file")->required();
    cmd->add_option("--out", opts.out_dir, "output directory (overrides run.out_dir)");
    cmd->add_option("--seeds", opts.seeds, "comma-separated seed list (overrides run.seeds)");
    if (with_parallel) {
        cmd->add_option("--parallel", opts.parallel, "seeds to run concurrently")
            ->check(CLI::PositiveNumber);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fedmmx - trust-weighted federated multi-modal NAM simulator"};
    app.require_subcommand(1);

    CommonOpts generate_opts, train_opts, ablate_opts;
    std::vector<std::string> compare_dirs;
    std::string compare_out = ".";

    auto* generate = app.add_subcommand("generate", "generate and export a federated dataset");
    add_common(generate, generate_opts, false);

    auto* train = app.add_subcommand("train", "run the federated simulation per seed");
    add_common(train, train_opts);

    auto* ablate = app.add_subcommand("ablate", "run the component-removal variants");
    add_common(ablate, ablate_opts);

    auto* compare = app.add_subcommand("compare", "compare run directories");
    compare->add_option("dirs", compare_dirs, "run directories")->required();
    compare->add_option("--out", compare_out, "output directory for curve CSVs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) {
            const auto cfg = load_with_overrides(generate_opts);
            return fedmmx::run_generate(cfg, cfg.out_dir);
        }
        if (train->parsed()) {
            const auto cfg = load_with_overrides(train_opts);
            return fedmmx::run_train(cfg, cfg.out_dir, train_opts.parallel);
        }
        if (ablate->parsed()) {
            const auto cfg = load_with_overrides(ablate_opts);
            return fedmmx::run_ablate(cfg, cfg.out_dir, ablate_opts.parallel);
        }
        if (compare->parsed()) {
            return fedmmx::run_compare(compare_dirs, compare_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedmmx/federation.hpp"

namespace fedmmx {

// Full experiment description, parsed from a key-value config file with
// [data] / [model] / [trust] / [attack] / [run] blocks. Every default below is
// the config-file default.
struct ExperimentConfig {
    SyntheticSpec data;
    Hyperparams hyper;
    int hidden = 8;
    TrustConfig trust;
    std::optional<AttackSpec> attack;
    int rounds = 30;
    double participation = 1.0;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::string out_dir = "runs/out";
    double val_fraction = 0.2;
    EvalOptions eval;
    int client_threads = 1;

    SimulationConfig simulation() const;
    void validate() const;
};

// Parses config text; throws std::invalid_argument naming the offending
// section/key on malformed input.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Default-populated config (same as parsing an empty file plus the default
// data block).
ExperimentConfig default_config();

// Round-trippable echo of a config, used for run manifests.
std::string config_to_json(const ExperimentConfig& cfg);

}  // namespace fedmmx

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedmmx/config.hpp"
#include "fedmmx/federation.hpp"

namespace fedmmx {

// Shortest round-trip decimal text for a double (deterministic output files).
std::string format_double(double v);

// One NDJSON round-log line:
//   {"round":..,"participants":[..],
//    "clients":[{"id","ec","calib","hist","trust"},..],
//    "global":{"accuracy","ec","fs","ece"}}
std::string round_log_line(const RoundLog& log);

// Metrics CSV (schema fedmmx.metrics.v1): one row per (seed, round) with
// columns seed, round, accuracy, ec, fs, ece, mean_trust_honest,
// mean_trust_adversarial.
std::string metrics_csv(const std::vector<std::pair<std::uint64_t, SimulationResult>>& runs);

// Mean trust over the round's participants restricted to `ids` (empty result
// when no participant is in `ids`).
std::optional<double> mean_trust_over(const RoundLog& log, const std::vector<int>& ids,
                                      bool invert);

// `fedmmx generate`: writes <out_dir>/dataset.json, prints the per-client
// summary. Returns a process exit code.
int run_generate(const ExperimentConfig& cfg, const std::string& out_dir);

// `fedmmx train`: one simulation per seed (up to `parallel` in flight), writes
// metrics.csv, rounds_seed<S>.ndjson, params_seed<S>.nam and
// run_manifest.json into the run directory. Exit code 0 iff all seeds
// completed.
int run_train(const ExperimentConfig& cfg, const std::string& out_dir, int parallel);

// `fedmmx ablate`: runs the four variants {full, no-trust, no-consistency,
// no-interp} over shared seeds (clean plus attacked condition when an attack
// is configured), writes ablation.csv and prints direction flags.
int run_ablate(const ExperimentConfig& cfg, const std::string& out_dir, int parallel);

// `fedmmx compare`: reads run directories produced by run_train and emits
// trust_curves.csv and accuracy_curves.csv plus a text summary table.
int run_compare(const std::vector<std::string>& run_dirs, const std::string& out_dir);

}  // namespace fedmmx

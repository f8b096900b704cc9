#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedmmx/adversary.hpp"
#include "fedmmx/dataset.hpp"
#include "fedmmx/metrics.hpp"
#include "fedmmx/nam.hpp"
#include "fedmmx/rng.hpp"

namespace fedmmx {

enum class TrustMode { fedmmx, uniform, off };

TrustMode trust_mode_from_string(const std::string& name);
std::string to_string(TrustMode mode);

struct TrustConfig {
    TrustMode mode = TrustMode::fedmmx;
    double alpha = 1.0 / 3.0;  // EC component weight
    double beta = 1.0 / 3.0;   // calibration component weight
    double gamma = 1.0 / 3.0;  // history component weight
    double mu = 0.9;           // history EMA decay
    double floor = 0.01;       // trust floor epsilon
    double neutral_ec = 0.5;   // EC component when a client's EC is undefined
    double hist_init = 0.5;

    void validate() const;
};

struct ClientState {
    int id = 0;
    std::vector<int> modalities;
    std::vector<Sample> train;
    std::vector<Sample> validation;
    std::size_t n_k = 0;  // |D_k| = train + validation
    double history = 0.5;
    bool adversarial = false;
};

struct ClientUpdate {
    int client_id = 0;
    std::vector<int> modalities;                      // trained modalities, ascending
    std::vector<std::vector<double>> segments;        // parallel to modalities
    std::size_t n_k = 0;
    LossBreakdown local_loss;                         // mean over the last epoch
    double val_accuracy = 0.0;
    std::optional<double> val_ec;                     // empty for single-modality clients
    double val_ece = 0.0;
};

struct TrustEntry {
    int client_id = 0;
    double ec_component = 0.0;
    double calib_component = 0.0;
    double hist_component = 0.0;
    double raw_score = 0.0;
    double trust = 0.0;  // normalized T_k, sums to 1 over participants
};

struct TrustReport {
    std::vector<TrustEntry> entries;  // ascending client id
};

struct RoundLog {
    int round = 0;
    std::vector<int> participants;
    TrustReport trust;
    MetricReport global;
    double duration_seconds = 0.0;  // informational; not part of the NDJSON schema
};

// Splits a client's data into train/validation (deterministic shuffle) and
// seeds the state. val_fraction of the samples (at least 1 when n_k >= 2) go
// to validation.
ClientState make_client_state(const ClientData& data, double val_fraction,
                              double hist_init, Rng& rng);

// Copies the global parameters, runs local mini-batch SGD restricted to the
// client's modalities, evaluates on the validation split (train split when
// validation is empty), and returns only the trained segments.
ClientUpdate local_train(const ClientState& client, const NamParams& global_params,
                         const Hyperparams& hyper, const EvalOptions& eval, Rng& rng);

// s_k = alpha*ec + beta*calib + gamma*hist; T_k = n_k s_k / sum_j n_j s_j,
// floored at cfg.floor and renormalized (iterative clipping, so the floor and
// the unit sum both hold exactly). All-zero raw scores fall back to uniform.
// histories[i] is the current history of updates[i]'s client.
TrustReport compute_trust(const std::vector<ClientUpdate>& updates,
                          std::span<const double> histories, const TrustConfig& cfg);

// mu * hist + (1 - mu) * round_accuracy. Inputs must lie in [0,1].
double update_history(double hist, double round_accuracy, double mu);

// Per-modality trust-weighted mean of the participating clients' segments;
// weights renormalize over the clients that carry the modality. Modalities
// carried by no participant keep the global segment.
NamParams aggregate(const NamParams& global_params, const std::vector<ClientUpdate>& updates,
                    const TrustReport& trust);

// ceil(fraction * clients) distinct ids, uniform without replacement, sorted.
std::vector<int> sample_participants(int clients, double fraction, Rng& rng);

struct SimulationConfig {
    SyntheticSpec data;
    Hyperparams hyper;
    int hidden = 8;
    TrustConfig trust;
    std::optional<AttackSpec> attack;
    int rounds = 30;
    double participation = 1.0;
    double val_fraction = 0.2;
    EvalOptions eval;
    int client_threads = 1;

    void validate() const;
};

struct SimulationResult {
    std::vector<RoundLog> rounds;
    NamParams final_params;
    std::vector<int> adversaries;  // empty when no attack configured
};

// One federation round: sample participants, train each locally (possibly on
// worker threads; results are consumed in ascending client order regardless),
// apply update-level attacks, compute trust, aggregate, evaluate on `test`.
RoundLog run_round(NamParams& global_params, std::vector<ClientState>& clients,
                   std::span<const Sample> test, const SimulationConfig& cfg,
                   const std::optional<AttackSpec>& update_attack,
                   std::uint64_t master_seed, int round);

// Full simulation: dataset generation, adversary setup, model init, cfg.rounds
// federation rounds. Deterministic in master_seed under any thread count.
SimulationResult run_simulation(const SimulationConfig& cfg, std::uint64_t master_seed);

}  // namespace fedmmx

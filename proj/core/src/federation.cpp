#include "fedmmx/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "fedmmx/logging.hpp"
#include "fedmmx/numeric.hpp"

namespace fedmmx {

TrustMode trust_mode_from_string(const std::string& name) {
    if (name == "fedmmx") return TrustMode::fedmmx;
    if (name == "uniform") return TrustMode::uniform;
    if (name == "off") return TrustMode::off;
    throw std::invalid_argument("trust.mode: unknown mode '" + name + "'");
}

std::string to_string(TrustMode mode) {
    switch (mode) {
        case TrustMode::fedmmx: return "fedmmx";
        case TrustMode::uniform: return "uniform";
        case TrustMode::off: return "off";
    }
    return "unknown";
}

void TrustConfig::validate() const {
    if (alpha < 0.0 || beta < 0.0 || gamma < 0.0)
        throw std::invalid_argument("trust: component weights must be >= 0");
    if (std::abs(alpha + beta + gamma - 1.0) > 1e-9)
        throw std::invalid_argument("trust: alpha + beta + gamma must sum to 1");
    if (mu < 0.0 || mu >= 1.0) throw std::invalid_argument("trust.mu: must be in [0,1)");
    if (floor < 0.0 || floor >= 1.0) throw std::invalid_argument("trust.floor: must be in [0,1)");
    if (neutral_ec < 0.0 || neutral_ec > 1.0)
        throw std::invalid_argument("trust.neutral_ec: must be in [0,1]");
    if (hist_init < 0.0 || hist_init > 1.0)
        throw std::invalid_argument("trust.hist_init: must be in [0,1]");
}

void SimulationConfig::validate() const {
    data.validate();
    hyper.validate();
    trust.validate();
    if (attack.has_value()) attack->validate();
    if (hidden < 1) throw std::invalid_argument("model.hidden: must be >= 1");
    if (rounds < 0) throw std::invalid_argument("run.rounds: must be >= 0");
    if (participation <= 0.0 || participation > 1.0)
        throw std::invalid_argument("run.participation: must be in (0,1]");
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw std::invalid_argument("run.val_fraction: must be in [0,1)");
    if (eval.mask_fraction <= 0.0 || eval.mask_fraction > 1.0)
        throw std::invalid_argument("run.mask_fraction: must be in (0,1]");
    if (eval.ece_bins < 1) throw std::invalid_argument("run.ece_bins: must be >= 1");
    if (client_threads < 1) throw std::invalid_argument("run.client_threads: must be >= 1");
    if (trust.floor * data.clients > 1.0)
        throw std::invalid_argument("trust.floor: floor * clients must be <= 1");
}

ClientState make_client_state(const ClientData& data, double val_fraction,
                              double hist_init, Rng& rng) {
    ClientState state;
    state.id = data.id;
    state.modalities = data.modalities;
    state.n_k = data.samples.size();
    state.history = hist_init;

    std::vector<int> order(data.samples.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::size_t val_count = static_cast<std::size_t>(val_fraction * data.samples.size());
    if (val_count == 0 && val_fraction > 0.0 && data.samples.size() >= 2) val_count = 1;
    if (val_count >= data.samples.size()) val_count = data.samples.size() - 1;

    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& sample = data.samples[order[i]];
        if (i < val_count) {
            state.validation.push_back(sample);
        } else {
            state.train.push_back(sample);
        }
    }
    return state;
}

ClientUpdate local_train(const ClientState& client, const NamParams& global_params,
                         const Hyperparams& hyper, const EvalOptions& eval, Rng& rng) {
    hyper.validate();
    if (client.train.empty()) throw std::invalid_argument("local_train: client has no train samples");
    for (const int m : client.modalities) {
        if (m < 0 || m >= static_cast<int>(global_params.layout().modalities.size()))
            throw std::invalid_argument("local_train: client modality outside global layout");
    }

    NamParams params = global_params;
    std::vector<int> order(client.train.size());
    std::iota(order.begin(), order.end(), 0);

    LossBreakdown last_epoch_loss;
    for (int epoch = 0; epoch < hyper.local_epochs; ++epoch) {
        rng.shuffle(order);
        double pred = 0.0, modal = 0.0, intp = 0.0, total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
            const std::size_t len = std::min<std::size_t>(hyper.batch_size, order.size() - start);
            const std::span<const int> batch(order.data() + start, len);
            const auto lg = loss_and_grad(params, client.train, batch, client.modalities, hyper);
            sgd_step(params, lg.grad, hyper.lr, client.modalities);
            pred += lg.loss.pred;
            modal += lg.loss.modal;
            intp += lg.loss.intp;
            total += lg.loss.total;
            ++batches;
        }
        last_epoch_loss = {pred / batches, modal / batches, intp / batches, total / batches};
    }

    ClientUpdate update;
    update.client_id = client.id;
    update.modalities = client.modalities;
    update.segments.reserve(client.modalities.size());
    for (const int m : client.modalities) {
        const auto segment = params.segment(m);
        update.segments.emplace_back(segment.begin(), segment.end());
    }
    update.n_k = client.n_k;
    update.local_loss = last_epoch_loss;

    // Validation metrics (train split when the validation split is empty).
    const auto& eval_set = client.validation.empty() ? client.train : client.validation;
    std::vector<double> confidences;
    std::vector<bool> correct;
    std::size_t hits = 0;
    for (const auto& sample : eval_set) {
        const auto fwd = forward(params, sample, client.modalities);
        const auto p = softmax(fwd.fused);
        const std::size_t predicted = argmax(p);
        const bool hit = static_cast<int>(predicted) == sample.label;
        hits += hit ? 1 : 0;
        confidences.push_back(p[predicted]);
        correct.push_back(hit);
    }
    update.val_accuracy = static_cast<double>(hits) / static_cast<double>(eval_set.size());
    update.val_ece = ece(confidences, correct, eval.ece_bins);
    if (client.modalities.size() >= 2) {
        update.val_ec = dataset_ec(params, eval_set).mean;
    }
    return update;
}

double update_history(double hist, double round_accuracy, double mu) {
    if (hist < 0.0 || hist > 1.0) throw std::invalid_argument("update_history: hist outside [0,1]");
    if (round_accuracy < 0.0 || round_accuracy > 1.0)
        throw std::invalid_argument("update_history: accuracy outside [0,1]");
    if (mu < 0.0 || mu >= 1.0) throw std::invalid_argument("update_history: mu outside [0,1)");
    return mu * hist + (1.0 - mu) * round_accuracy;
}

TrustReport compute_trust(const std::vector<ClientUpdate>& updates,
                          std::span<const double> histories, const TrustConfig& cfg) {
    cfg.validate();
    if (updates.empty()) throw std::invalid_argument("compute_trust: no updates");
    if (histories.size() != updates.size())
        throw std::invalid_argument("compute_trust: histories/updates size mismatch");
    const std::size_t n = updates.size();
    if (cfg.floor * static_cast<double>(n) > 1.0)
        throw std::invalid_argument("compute_trust: floor * participants exceeds 1");

    TrustReport report;
    report.entries.resize(n);
    double weighted_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        auto& e = report.entries[i];
        e.client_id = updates[i].client_id;
        if (cfg.mode == TrustMode::fedmmx) {
            e.ec_component =
                updates[i].val_ec.has_value() ? rescale_ec(*updates[i].val_ec) : cfg.neutral_ec;
            e.calib_component = clamp01(1.0 - updates[i].val_ece);
            e.hist_component = histories[i];
            e.raw_score = cfg.alpha * e.ec_component + cfg.beta * e.calib_component +
                          cfg.gamma * e.hist_component;
        } else {
            // uniform / off: equal component scores -> n_k-proportional weights.
            e.ec_component = 0.5;
            e.calib_component = 0.5;
            e.hist_component = 0.5;
            e.raw_score = 0.5;
        }
        weighted_sum += static_cast<double>(updates[i].n_k) * e.raw_score;
    }

    if (weighted_sum <= 0.0) {
        for (auto& e : report.entries) e.trust = 1.0 / static_cast<double>(n);
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            report.entries[i].trust =
                static_cast<double>(updates[i].n_k) * report.entries[i].raw_score / weighted_sum;
        }
    }

    // Floor + renormalize by iterative clipping: clipped entries sit exactly at
    // the floor, the rest scale to keep the sum at 1.
    if (cfg.floor > 0.0) {
        std::vector<bool> clipped(n, false);
        for (;;) {
            double clipped_mass = 0.0;
            double unclipped_sum = 0.0;
            std::size_t clipped_count = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (clipped[i]) {
                    clipped_mass += cfg.floor;
                    ++clipped_count;
                } else {
                    unclipped_sum += report.entries[i].trust;
                }
            }
            if (clipped_count == n) {
                // Unreachable when floor * n <= 1; uniform keeps both invariants.
                for (auto& e : report.entries) e.trust = 1.0 / static_cast<double>(n);
                break;
            }
            const double scale = (1.0 - clipped_mass) / unclipped_sum;
            bool changed = false;
            for (std::size_t i = 0; i < n; ++i) {
                if (!clipped[i] && report.entries[i].trust * scale < cfg.floor) {
                    clipped[i] = true;
                    changed = true;
                }
            }
            if (!changed) {
                for (std::size_t i = 0; i < n; ++i) {
                    if (clipped[i]) {
                        report.entries[i].trust = cfg.floor;
                    } else {
                        report.entries[i].trust *= scale;
                    }
                }
                break;
            }
        }
    }
    return report;
}

NamParams aggregate(const NamParams& global_params, const std::vector<ClientUpdate>& updates,
                    const TrustReport& trust) {
    if (trust.entries.size() != updates.size())
        throw std::invalid_argument("aggregate: trust/updates size mismatch");
    NamParams result = global_params;
    const auto& layout = global_params.layout();
    for (std::size_t m = 0; m < layout.modalities.size(); ++m) {
        double trust_sum = 0.0;
        for (std::size_t i = 0; i < updates.size(); ++i) {
            const auto& mods = updates[i].modalities;
            if (std::find(mods.begin(), mods.end(), static_cast<int>(m)) != mods.end()) {
                trust_sum += trust.entries[i].trust;
            }
        }
        if (trust_sum <= 0.0) continue;  // no participant carries this modality

        auto out = result.segment(m);
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < updates.size(); ++i) {
            const auto& mods = updates[i].modalities;
            const auto it = std::find(mods.begin(), mods.end(), static_cast<int>(m));
            if (it == mods.end()) continue;
            const auto& segment = updates[i].segments[it - mods.begin()];
            if (segment.size() != out.size())
                throw std::invalid_argument("aggregate: segment layout mismatch");
            const double w = trust.entries[i].trust / trust_sum;
            for (std::size_t k = 0; k < out.size(); ++k) out[k] += w * segment[k];
        }
    }
    return result;
}

std::vector<int> sample_participants(int clients, double fraction, Rng& rng) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw std::invalid_argument("sample_participants: fraction must be in (0,1]");
    const int count = std::min(clients, std::max(1, guarded_ceil(fraction * clients)));
    std::vector<int> pool(clients);
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < count; ++i) {
        const std::size_t j = i + rng.below(clients - i);
        std::swap(pool[i], pool[j]);
    }
    std::vector<int> ids(pool.begin(), pool.begin() + count);
    std::sort(ids.begin(), ids.end());
    return ids;
}

RoundLog run_round(NamParams& global_params, std::vector<ClientState>& clients,
                   std::span<const Sample> test, const SimulationConfig& cfg,
                   const std::optional<AttackSpec>& update_attack,
                   std::uint64_t master_seed, int round) {
    const auto started = std::chrono::steady_clock::now();

    Rng sampling_rng(derive_seed(master_seed, stream::participant_sampling, 0, round));
    const auto participants =
        sample_participants(static_cast<int>(clients.size()), cfg.participation, sampling_rng);

    std::vector<ClientUpdate> updates(participants.size());
    auto train_one = [&](std::size_t i) {
        const int id = participants[i];
        const ClientState& client = clients[id];
        Rng rng(derive_seed(master_seed, stream::client_round, id, round));
        updates[i] = local_train(client, global_params, cfg.hyper, cfg.eval, rng);
        if (update_attack.has_value() && client.adversarial) {
            Rng attack_rng(derive_seed(master_seed + update_attack->seed_offset,
                                       stream::update_corruption, id, round));
            corrupt_update(updates[i], global_params, *update_attack, attack_rng);
        }
    };

    if (cfg.client_threads <= 1 || participants.size() <= 1) {
        for (std::size_t i = 0; i < participants.size(); ++i) train_one(i);
    } else {
        // Static round-robin split; every client's randomness is derived from
        // (seed, id, round), so the schedule cannot affect results.
        const int workers =
            std::min<int>(cfg.client_threads, static_cast<int>(participants.size()));
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < participants.size(); i += workers) train_one(i);
            });
        }
        for (auto& t : pool) t.join();
    }

    std::vector<double> histories(participants.size());
    for (std::size_t i = 0; i < participants.size(); ++i) {
        histories[i] = clients[participants[i]].history;
    }

    RoundLog log;
    log.round = round;
    log.participants = participants;
    log.trust = compute_trust(updates, histories, cfg.trust);
    global_params = aggregate(global_params, updates, log.trust);

    for (std::size_t i = 0; i < participants.size(); ++i) {
        auto& client = clients[participants[i]];
        client.history = update_history(client.history, updates[i].val_accuracy, cfg.trust.mu);
    }

    log.global = evaluate(global_params, test, cfg.eval);
    log.duration_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return log;
}

SimulationResult run_simulation(const SimulationConfig& cfg, std::uint64_t master_seed) {
    cfg.validate();

    SyntheticSpec spec = cfg.data;
    spec.seed = derive_seed(master_seed, stream::data_gen);
    FederatedSplit split = generate_dataset(spec);

    SimulationResult result;
    std::optional<AttackSpec> update_attack;
    if (cfg.attack.has_value()) {
        const AttackSpec& attack = *cfg.attack;
        Rng select_rng(derive_seed(master_seed + attack.seed_offset, stream::adversary_select));
        result.adversaries = select_adversaries(spec.clients, attack.fraction, select_rng);
        if (attack.kind == AttackKind::label_flip) {
            for (const int id : result.adversaries) {
                Rng rng(derive_seed(master_seed + attack.seed_offset, stream::label_corruption, id));
                corrupt_labels(split.clients[id].samples, attack.intensity, spec.classes, rng);
            }
        } else {
            update_attack = attack;
        }
    }

    std::vector<ClientState> clients;
    clients.reserve(split.clients.size());
    for (const auto& data : split.clients) {
        Rng rng(derive_seed(master_seed, stream::train_val_split, data.id));
        clients.push_back(make_client_state(data, cfg.val_fraction, cfg.trust.hist_init, rng));
        clients.back().adversarial =
            std::find(result.adversaries.begin(), result.adversaries.end(), data.id) !=
            result.adversaries.end();
    }

    NamLayout layout;
    layout.modalities = spec.modalities;
    layout.hidden = cfg.hidden;
    layout.classes = spec.classes;
    Rng init_rng(derive_seed(master_seed, stream::model_init));
    NamParams params = NamParams::random_init(layout, init_rng);

    result.rounds.reserve(cfg.rounds);
    for (int round = 0; round < cfg.rounds; ++round) {
        try {
            result.rounds.push_back(
                run_round(params, clients, split.test, cfg, update_attack, master_seed, round));
        } catch (const std::exception& e) {
            throw std::runtime_error("round " + std::to_string(round) + ": " + e.what());
        }
        log_debug("round " + std::to_string(round) + " accuracy " +
                  std::to_string(result.rounds.back().global.accuracy));
    }
    result.final_params = std::move(params);
    return result;
}

}  // namespace fedmmx

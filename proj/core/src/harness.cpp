#include "fedmmx/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fedmmx/logging.hpp"
#include "fedmmx/snapshot.hpp"

namespace fedmmx {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string format_double(double v) {
    char buffer[32];
    const auto result = std::to_chars(buffer, buffer + sizeof(buffer), v);
    return std::string(buffer, result.ptr);
}

std::string round_log_line(const RoundLog& log) {
    ordered_json j;
    j["round"] = log.round;
    j["participants"] = log.participants;
    j["clients"] = ordered_json::array();
    for (const auto& e : log.trust.entries) {
        j["clients"].push_back({{"id", e.client_id},
                                {"ec", e.ec_component},
                                {"calib", e.calib_component},
                                {"hist", e.hist_component},
                                {"trust", e.trust}});
    }
    j["global"]["accuracy"] = log.global.accuracy;
    if (log.global.ec.has_value()) {
        j["global"]["ec"] = *log.global.ec;
    } else {
        j["global"]["ec"] = nullptr;
    }
    j["global"]["fs"] = log.global.fs;
    j["global"]["ece"] = log.global.ece;
    return j.dump();
}

std::optional<double> mean_trust_over(const RoundLog& log, const std::vector<int>& ids,
                                      bool invert) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& e : log.trust.entries) {
        const bool in_set = std::find(ids.begin(), ids.end(), e.client_id) != ids.end();
        if (in_set != invert) {
            sum += e.trust;
            ++count;
        }
    }
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
}

namespace {

constexpr const char* kMetricsSchema = "# schema: fedmmx.metrics.v1";
constexpr const char* kAblationSchema = "# schema: fedmmx.ablation.v1";
constexpr const char* kTrustCurveSchema = "# schema: fedmmx.trust-curve.v1";
constexpr const char* kAccuracyCurveSchema = "# schema: fedmmx.accuracy-curve.v1";

std::string opt_cell(const std::optional<double>& v) {
    return v.has_value() ? format_double(*v) : std::string();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

struct SeedOutcome {
    std::uint64_t seed = 0;
    SimulationResult result;
    std::string error;  // nonempty on failure
};

// Runs one simulation per seed, at most `parallel` concurrently. Results come
// back in config seed order; failures are captured per seed.
std::vector<SeedOutcome> run_seeds(const SimulationConfig& sim,
                                   const std::vector<std::uint64_t>& seeds, int parallel) {
    std::vector<SeedOutcome> outcomes(seeds.size());
    for (std::size_t i = 0; i < seeds.size(); ++i) outcomes[i].seed = seeds[i];

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= seeds.size()) return;
            try {
                outcomes[i].result = run_simulation(sim, seeds[i]);
            } catch (const std::exception& e) {
                outcomes[i].error = e.what();
            }
        }
    };

    const int workers = std::max(1, std::min<int>(parallel, static_cast<int>(seeds.size())));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return outcomes;
}

}  // namespace

std::string metrics_csv(const std::vector<std::pair<std::uint64_t, SimulationResult>>& runs) {
    std::ostringstream out;
    out << kMetricsSchema << '\n';
    out << "seed,round,accuracy,ec,fs,ece,mean_trust_honest,mean_trust_adversarial\n";
    for (const auto& [seed, result] : runs) {
        for (const auto& log : result.rounds) {
            out << seed << ',' << log.round << ',' << format_double(log.global.accuracy) << ','
                << opt_cell(log.global.ec) << ',' << format_double(log.global.fs) << ','
                << format_double(log.global.ece) << ','
                << opt_cell(mean_trust_over(log, result.adversaries, true)) << ','
                << opt_cell(mean_trust_over(log, result.adversaries, false)) << '\n';
        }
    }
    return out.str();
}

int run_generate(const ExperimentConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const FederatedSplit split = generate_dataset(cfg.data);
    const std::string path = (fs::path(out_dir) / "dataset.json").string();
    save_dataset(split, path);

    std::cout << "dataset written to " << path << '\n';
    for (const auto& note : split.repairs) std::cout << "profile repair: " << note << '\n';
    std::cout << "client  n_k  modalities  label_histogram\n";
    for (const auto& client : split.clients) {
        std::vector<int> histogram(split.spec.classes, 0);
        for (const auto& s : client.samples) ++histogram[s.label];
        std::cout << client.id << "  " << client.samples.size() << "  ";
        for (std::size_t i = 0; i < client.modalities.size(); ++i) {
            std::cout << (i > 0 ? "+" : "") << split.spec.modalities[client.modalities[i]].id;
        }
        std::cout << "  [";
        for (int c = 0; c < split.spec.classes; ++c) {
            std::cout << (c > 0 ? " " : "") << histogram[c];
        }
        std::cout << "]\n";
    }
    return 0;
}

int run_train(const ExperimentConfig& cfg, const std::string& out_dir, int parallel) {
    cfg.validate();
    fs::create_directories(out_dir);
    const auto outcomes = run_seeds(cfg.simulation(), cfg.seeds, parallel);

    bool all_ok = true;
    std::vector<std::pair<std::uint64_t, SimulationResult>> completed;
    ordered_json manifest_runs = ordered_json::array();
    for (const auto& outcome : outcomes) {
        if (!outcome.error.empty()) {
            all_ok = false;
            std::cerr << "seed " << outcome.seed << " failed: " << outcome.error << '\n';
            continue;
        }
        completed.emplace_back(outcome.seed, outcome.result);
        manifest_runs.push_back(
            {{"seed", outcome.seed}, {"adversaries", outcome.result.adversaries}});

        std::ostringstream ndjson;
        for (const auto& log : outcome.result.rounds) ndjson << round_log_line(log) << '\n';
        const std::string stem = "seed" + std::to_string(outcome.seed);
        write_text_file((fs::path(out_dir) / ("rounds_" + stem + ".ndjson")).string(),
                        ndjson.str());
        save_params(outcome.result.final_params,
                    (fs::path(out_dir) / ("params_" + stem + ".nam")).string());

        if (!outcome.result.rounds.empty()) {
            const auto& last = outcome.result.rounds.back().global;
            std::cout << "seed " << outcome.seed << ": accuracy " << format_double(last.accuracy)
                      << " ec " << opt_cell(last.ec) << " (pct "
                      << (last.ec.has_value() ? format_double(100.0 * rescale_ec(*last.ec))
                                              : std::string())
                      << ") fs " << format_double(last.fs) << " ece " << format_double(last.ece)
                      << '\n';
        } else {
            std::cout << "seed " << outcome.seed << ": 0 rounds (initialization only)\n";
        }
    }

    write_text_file((fs::path(out_dir) / "metrics.csv").string(), metrics_csv(completed));

    ordered_json manifest;
    manifest["format"] = "fedmmx-run";
    manifest["version"] = 1;
    manifest["config"] = nlohmann::ordered_json::parse(config_to_json(cfg));
    manifest["runs"] = manifest_runs;
    write_text_file((fs::path(out_dir) / "run_manifest.json").string(), manifest.dump(2) + "\n");

    if (!completed.empty()) {
        double sum = 0.0;
        std::size_t counted = 0;
        for (const auto& [seed, result] : completed) {
            if (!result.rounds.empty()) {
                sum += result.rounds.back().global.accuracy;
                ++counted;
            }
        }
        if (counted > 0) {
            std::cout << "mean final accuracy over " << counted << " seeds: "
                      << format_double(sum / static_cast<double>(counted)) << '\n';
        }
    }
    return all_ok ? 0 : 1;
}

namespace {

struct VariantResult {
    std::string name;
    // Per seed, in config order.
    std::vector<MetricReport> clean_final;
    std::vector<MetricReport> attacked_final;   // empty when no attack configured
    std::vector<double> retained;               // attacked/clean accuracy, per seed
};

MetricReport final_report(const SimulationResult& result) {
    if (result.rounds.empty()) return {};
    return result.rounds.back().global;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (const double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_stddev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (const double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

int run_ablate(const ExperimentConfig& cfg, const std::string& out_dir, int parallel) {
    cfg.validate();
    fs::create_directories(out_dir);
    const bool attacked = cfg.attack.has_value();

    struct Variant {
        std::string name;
        SimulationConfig sim;
    };
    std::vector<Variant> variants;
    {
        Variant full{"full", cfg.simulation()};
        Variant no_trust{"no-trust", cfg.simulation()};
        no_trust.sim.trust.mode = TrustMode::off;
        Variant no_consistency{"no-consistency", cfg.simulation()};
        no_consistency.sim.hyper.lambda1 = 0.0;
        Variant no_interp{"no-interp", cfg.simulation()};
        no_interp.sim.hyper.lambda2 = 0.0;
        variants = {full, no_trust, no_consistency, no_interp};
    }

    std::vector<VariantResult> results;
    for (const auto& variant : variants) {
        VariantResult vr;
        vr.name = variant.name;

        SimulationConfig clean_sim = variant.sim;
        clean_sim.attack.reset();
        const auto clean = run_seeds(clean_sim, cfg.seeds, parallel);
        for (const auto& outcome : clean) {
            if (!outcome.error.empty()) {
                std::cerr << "ablate " << variant.name << " clean seed " << outcome.seed
                          << " failed: " << outcome.error << '\n';
                return 1;
            }
            vr.clean_final.push_back(final_report(outcome.result));
        }

        if (attacked) {
            const auto att = run_seeds(variant.sim, cfg.seeds, parallel);
            for (std::size_t i = 0; i < att.size(); ++i) {
                if (!att[i].error.empty()) {
                    std::cerr << "ablate " << variant.name << " attacked seed " << att[i].seed
                              << " failed: " << att[i].error << '\n';
                    return 1;
                }
                vr.attacked_final.push_back(final_report(att[i].result));
                const double clean_acc = vr.clean_final[i].accuracy;
                vr.retained.push_back(clean_acc > 0.0
                                          ? vr.attacked_final[i].accuracy / clean_acc
                                          : 0.0);
            }
        }
        results.push_back(std::move(vr));
    }

    std::ostringstream csv;
    csv << kAblationSchema << '\n';
    csv << "variant,seed,clean_accuracy,clean_ec,clean_ec_pct,clean_fs,clean_ece,"
           "attacked_accuracy,attacked_ec,attacked_fs,attacked_ece,retained_accuracy\n";
    auto report_cells = [&](const MetricReport& r, bool with_pct) {
        std::string cells = format_double(r.accuracy) + "," + opt_cell(r.ec) + ",";
        if (with_pct) {
            cells += (r.ec.has_value() ? format_double(100.0 * rescale_ec(*r.ec)) : "");
            cells += ",";
        }
        cells += format_double(r.fs) + "," + format_double(r.ece);
        return cells;
    };
    for (const auto& vr : results) {
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
            csv << vr.name << ',' << cfg.seeds[i] << ',' << report_cells(vr.clean_final[i], true);
            if (attacked) {
                csv << ',' << report_cells(vr.attacked_final[i], false) << ','
                    << format_double(vr.retained[i]);
            } else {
                csv << ",,,,,";
            }
            csv << '\n';
        }
        auto column = [&](auto getter) {
            std::vector<double> v;
            for (std::size_t i = 0; i < cfg.seeds.size(); ++i) v.push_back(getter(i));
            return v;
        };
        const auto clean_acc = column([&](std::size_t i) { return vr.clean_final[i].accuracy; });
        csv << vr.name << ",mean," << format_double(mean_of(clean_acc)) << ",,,,,";
        if (attacked) {
            const auto att_acc =
                column([&](std::size_t i) { return vr.attacked_final[i].accuracy; });
            csv << format_double(mean_of(att_acc)) << ",,,," << format_double(mean_of(vr.retained));
        } else {
            csv << ",,,,";
        }
        csv << '\n';
        csv << vr.name << ",stddev," << format_double(sample_stddev(clean_acc)) << ",,,,,";
        if (attacked) {
            const auto att_acc =
                column([&](std::size_t i) { return vr.attacked_final[i].accuracy; });
            csv << format_double(sample_stddev(att_acc)) << ",,,,"
                << format_double(sample_stddev(vr.retained));
        } else {
            csv << ",,,,";
        }
        csv << '\n';
    }
    write_text_file((fs::path(out_dir) / "ablation.csv").string(), csv.str());

    // Direction flags (clean EC for the consistency ablation; retained
    // accuracy for the trust ablation).
    auto mean_clean_ec = [&](const VariantResult& vr) {
        std::vector<double> v;
        for (const auto& r : vr.clean_final) {
            if (r.ec.has_value()) v.push_back(*r.ec);
        }
        return mean_of(v);
    };
    const double ec_full = mean_clean_ec(results[0]);
    const double ec_nocons = mean_clean_ec(results[2]);
    std::cout << "EC direction (full > no-consistency): "
              << (ec_full > ec_nocons ? "OK" : "VIOLATED") << " (" << format_double(ec_full)
              << " vs " << format_double(ec_nocons) << ")\n";
    if (attacked) {
        const double ra_full = mean_of(results[0].retained);
        const double ra_notrust = mean_of(results[1].retained);
        std::cout << "retained-accuracy direction (full > no-trust): "
                  << (ra_full > ra_notrust ? "OK" : "VIOLATED") << " (" << format_double(ra_full)
                  << " vs " << format_double(ra_notrust) << ")\n";
    }
    std::cout << "ablation table written to " << (fs::path(out_dir) / "ablation.csv").string()
              << '\n';
    return 0;
}

namespace {

struct LoadedRun {
    std::string name;
    std::vector<std::uint64_t> seeds;
    std::map<std::uint64_t, std::vector<int>> adversaries;
    // [seed index][round]
    std::vector<std::vector<RoundLog>> rounds;
};

RoundLog parse_round_line(const std::string& line) {
    const auto j = nlohmann::json::parse(line);
    RoundLog log;
    log.round = j.at("round").get<int>();
    log.participants = j.at("participants").get<std::vector<int>>();
    for (const auto& jc : j.at("clients")) {
        TrustEntry e;
        e.client_id = jc.at("id").get<int>();
        e.ec_component = jc.at("ec").get<double>();
        e.calib_component = jc.at("calib").get<double>();
        e.hist_component = jc.at("hist").get<double>();
        e.trust = jc.at("trust").get<double>();
        log.trust.entries.push_back(e);
    }
    log.global.accuracy = j.at("global").at("accuracy").get<double>();
    if (!j.at("global").at("ec").is_null()) {
        log.global.ec = j.at("global").at("ec").get<double>();
    }
    log.global.fs = j.at("global").at("fs").get<double>();
    log.global.ece = j.at("global").at("ece").get<double>();
    return log;
}

LoadedRun load_run_dir(const std::string& dir) {
    LoadedRun run;
    run.name = fs::path(dir).filename().string();
    if (run.name.empty()) run.name = dir;

    const auto manifest_path = fs::path(dir) / "run_manifest.json";
    std::ifstream manifest_in(manifest_path);
    if (!manifest_in)
        throw std::runtime_error("compare: missing manifest '" + manifest_path.string() + "'");
    nlohmann::json manifest;
    try {
        manifest_in >> manifest;
    } catch (const std::exception& e) {
        throw std::runtime_error("compare: corrupt manifest '" + manifest_path.string() +
                                 "': " + e.what());
    }
    for (const auto& entry : manifest.at("runs")) {
        const auto seed = entry.at("seed").get<std::uint64_t>();
        run.seeds.push_back(seed);
        run.adversaries[seed] = entry.at("adversaries").get<std::vector<int>>();
    }

    for (const auto seed : run.seeds) {
        const auto path = fs::path(dir) / ("rounds_seed" + std::to_string(seed) + ".ndjson");
        std::ifstream in(path);
        if (!in) throw std::runtime_error("compare: missing round log '" + path.string() + "'");
        std::vector<RoundLog> logs;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                logs.push_back(parse_round_line(line));
            } catch (const std::exception& e) {
                throw std::runtime_error("compare: corrupt round log '" + path.string() +
                                         "': " + e.what());
            }
        }
        run.rounds.push_back(std::move(logs));
    }
    return run;
}

}  // namespace

int run_compare(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    if (run_dirs.empty()) {
        std::cerr << "compare: at least one run directory required\n";
        return 1;
    }
    std::vector<LoadedRun> runs;
    try {
        for (const auto& dir : run_dirs) runs.push_back(load_run_dir(dir));
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return 1;
    }
    fs::create_directories(out_dir);

    std::ostringstream trust_csv, acc_csv;
    trust_csv << kTrustCurveSchema << '\n'
              << "run,round,mean_trust_honest,mean_trust_adversarial\n";
    acc_csv << kAccuracyCurveSchema << '\n' << "run,round,accuracy\n";

    for (const auto& run : runs) {
        std::size_t max_rounds = 0;
        for (const auto& logs : run.rounds) max_rounds = std::max(max_rounds, logs.size());
        for (std::size_t r = 0; r < max_rounds; ++r) {
            double acc_sum = 0.0, honest_sum = 0.0, adv_sum = 0.0;
            std::size_t acc_n = 0, honest_n = 0, adv_n = 0;
            for (std::size_t s = 0; s < run.rounds.size(); ++s) {
                if (r >= run.rounds[s].size()) continue;
                const auto& log = run.rounds[s][r];
                acc_sum += log.global.accuracy;
                ++acc_n;
                const auto& adversaries = run.adversaries.at(run.seeds[s]);
                if (const auto h = mean_trust_over(log, adversaries, true)) {
                    honest_sum += *h;
                    ++honest_n;
                }
                if (const auto a = mean_trust_over(log, adversaries, false)) {
                    adv_sum += *a;
                    ++adv_n;
                }
            }
            trust_csv << run.name << ',' << r << ','
                      << (honest_n ? format_double(honest_sum / honest_n) : "") << ','
                      << (adv_n ? format_double(adv_sum / adv_n) : "") << '\n';
            acc_csv << run.name << ',' << r << ','
                    << (acc_n ? format_double(acc_sum / acc_n) : "") << '\n';
        }
    }
    write_text_file((fs::path(out_dir) / "trust_curves.csv").string(), trust_csv.str());
    write_text_file((fs::path(out_dir) / "accuracy_curves.csv").string(), acc_csv.str());

    std::cout << "run  seeds  rounds  final_accuracy  final_trust_honest  final_trust_adv\n";
    for (const auto& run : runs) {
        double acc_sum = 0.0, honest_sum = 0.0, adv_sum = 0.0;
        std::size_t acc_n = 0, honest_n = 0, adv_n = 0, rounds = 0;
        for (std::size_t s = 0; s < run.rounds.size(); ++s) {
            if (run.rounds[s].empty()) continue;
            rounds = std::max(rounds, run.rounds[s].size());
            const auto& log = run.rounds[s].back();
            acc_sum += log.global.accuracy;
            ++acc_n;
            const auto& adversaries = run.adversaries.at(run.seeds[s]);
            if (const auto h = mean_trust_over(log, adversaries, true)) {
                honest_sum += *h;
                ++honest_n;
            }
            if (const auto a = mean_trust_over(log, adversaries, false)) {
                adv_sum += *a;
                ++adv_n;
            }
        }
        std::cout << run.name << "  " << run.seeds.size() << "  " << rounds << "  "
                  << (acc_n ? format_double(acc_sum / acc_n) : "-") << "  "
                  << (honest_n ? format_double(honest_sum / honest_n) : "-") << "  "
                  << (adv_n ? format_double(adv_sum / adv_n) : "-") << '\n';
    }
    std::cout << "curves written to " << out_dir << '\n';
    return 0;
}

}  // namespace fedmmx

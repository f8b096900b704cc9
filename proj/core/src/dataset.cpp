#include "fedmmx/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fedmmx/numeric.hpp"

namespace fedmmx {

namespace {

using nlohmann::ordered_json;

// Gaussian class prototypes with normalized worst-case geometry: entries are
// standard normal, then every prototype is rescaled so the closest class pair
// (distance summed over modalities) sits exactly class_separation apart.
// Consumes one normal draw per prototype entry.
std::vector<std::vector<std::vector<double>>> draw_prototypes(const SyntheticSpec& spec,
                                                              Rng& rng) {
    std::vector<std::vector<std::vector<double>>> protos(spec.modalities.size());
    for (std::size_t m = 0; m < spec.modalities.size(); ++m) {
        protos[m].resize(spec.classes);
        for (int c = 0; c < spec.classes; ++c) {
            auto& mu = protos[m][c];
            mu.resize(spec.modalities[m].dim);
            for (auto& v : mu) v = rng.normal();
        }
    }
    double min_dist2 = std::numeric_limits<double>::infinity();
    for (int c = 0; c < spec.classes; ++c) {
        for (int other = c + 1; other < spec.classes; ++other) {
            double dist2 = 0.0;
            for (std::size_t m = 0; m < spec.modalities.size(); ++m) {
                for (std::size_t j = 0; j < protos[m][c].size(); ++j) {
                    const double d = protos[m][c][j] - protos[m][other][j];
                    dist2 += d * d;
                }
            }
            min_dist2 = std::min(min_dist2, dist2);
        }
    }
    if (min_dist2 > 0.0 && std::isfinite(min_dist2)) {
        const double scale = spec.class_separation / std::sqrt(min_dist2);
        for (auto& modality : protos) {
            for (auto& mu : modality) {
                for (auto& v : mu) v *= scale;
            }
        }
    }
    return protos;
}

}  // namespace

void SyntheticSpec::validate() const {
    if (classes < 2) throw std::invalid_argument("spec.classes: must be >= 2");
    if (modalities.empty()) throw std::invalid_argument("spec.modalities: must be nonempty");
    std::set<std::string> ids;
    for (const auto& m : modalities) {
        if (m.dim < 1) throw std::invalid_argument("spec.modalities: dim of '" + m.id + "' must be >= 1");
        if (m.id.empty()) throw std::invalid_argument("spec.modalities: empty modality id");
        if (!ids.insert(m.id).second)
            throw std::invalid_argument("spec.modalities: duplicate id '" + m.id + "'");
    }
    if (noise_std < 0.0) throw std::invalid_argument("spec.noise_std: must be >= 0");
    if (class_separation <= 0.0)
        throw std::invalid_argument("spec.class_separation: must be > 0");
    if (clients < 1) throw std::invalid_argument("spec.clients: must be >= 1");
    if (dirichlet_alpha <= 0.0) throw std::invalid_argument("spec.dirichlet_alpha: must be > 0");
    if (samples_per_client < 1) throw std::invalid_argument("spec.samples_per_client: must be >= 1");
    if (test_samples < 1) throw std::invalid_argument("spec.test_samples: must be >= 1");
    if (profile.empty()) throw std::invalid_argument("spec.profile: must be nonempty");
    double fraction_sum = 0.0;
    bool any_nonempty = false;
    for (const auto& entry : profile) {
        if (entry.fraction < 0.0) throw std::invalid_argument("spec.profile: negative fraction");
        fraction_sum += entry.fraction;
        if (!entry.modalities.empty()) any_nonempty = true;
        for (const int m : entry.modalities) {
            if (m < 0 || m >= static_cast<int>(modalities.size()))
                throw std::invalid_argument("spec.profile: modality index out of range");
        }
    }
    if (std::abs(fraction_sum - 1.0) > 1e-9)
        throw std::invalid_argument("spec.profile: fractions must sum to 1");
    if (!any_nonempty) throw std::invalid_argument("spec.profile: all subsets empty");
}

std::vector<int> Sample::available_modalities() const {
    std::vector<int> out;
    for (std::size_t m = 0; m < features.size(); ++m) {
        if (!features[m].empty()) out.push_back(static_cast<int>(m));
    }
    return out;
}

std::vector<std::vector<std::vector<double>>> class_prototypes(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    return draw_prototypes(spec, rng);
}

std::vector<std::vector<int>> dirichlet_partition(const std::vector<int>& labels,
                                                  int clients, double alpha, Rng& rng) {
    if (clients < 1) throw std::invalid_argument("dirichlet_partition: clients must be >= 1");
    if (alpha <= 0.0) throw std::invalid_argument("dirichlet_partition: alpha must be > 0");
    if (static_cast<int>(labels.size()) < clients)
        throw std::invalid_argument("dirichlet_partition: fewer samples than clients");

    int num_classes = 0;
    for (const int y : labels) num_classes = std::max(num_classes, y + 1);

    std::vector<std::vector<int>> by_class(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));

    std::vector<std::vector<int>> partition(clients);
    for (auto& indices : by_class) {
        if (indices.empty()) continue;
        rng.shuffle(indices);
        const std::vector<double> proportions = rng.dirichlet(alpha, clients);
        const std::size_t n = indices.size();
        double cumulative = 0.0;
        std::size_t start = 0;
        for (int k = 0; k < clients; ++k) {
            cumulative += proportions[k];
            std::size_t end = (k == clients - 1)
                                  ? n
                                  : std::min<std::size_t>(n, static_cast<std::size_t>(
                                        std::llround(cumulative * static_cast<double>(n))));
            if (end < start) end = start;
            for (std::size_t i = start; i < end; ++i) partition[k].push_back(indices[i]);
            start = end;
        }
    }

    // Empty-client repair: move one sample from the largest client.
    for (int k = 0; k < clients; ++k) {
        while (partition[k].empty()) {
            int donor = -1;
            std::size_t donor_size = 1;  // need a donor with >= 2 samples
            for (int j = 0; j < clients; ++j) {
                if (partition[j].size() > donor_size) {
                    donor = j;
                    donor_size = partition[j].size();
                }
            }
            if (donor < 0) throw std::runtime_error("dirichlet_partition: cannot repair empty client");
            partition[k].push_back(partition[donor].back());
            partition[donor].pop_back();
        }
    }

    for (auto& indices : partition) std::sort(indices.begin(), indices.end());
    return partition;
}

std::vector<std::vector<int>> assign_modalities(int clients,
                                                const std::vector<ProfileEntry>& profile,
                                                int num_modalities, Rng& rng,
                                                std::vector<std::string>* repairs) {
    if (clients < 1) throw std::invalid_argument("assign_modalities: clients must be >= 1");
    if (profile.empty()) throw std::invalid_argument("assign_modalities: empty profile");
    double fraction_sum = 0.0;
    bool any_nonempty = false;
    for (const auto& entry : profile) {
        fraction_sum += entry.fraction;
        if (!entry.modalities.empty()) any_nonempty = true;
    }
    if (std::abs(fraction_sum - 1.0) > 1e-9)
        throw std::invalid_argument("assign_modalities: fractions must sum to 1");
    if (!any_nonempty) throw std::invalid_argument("assign_modalities: all-empty profile");

    // Largest-remainder apportionment of clients to profile entries.
    const std::size_t entries = profile.size();
    std::vector<int> counts(entries);
    std::vector<std::pair<double, std::size_t>> remainders(entries);
    int assigned = 0;
    for (std::size_t i = 0; i < entries; ++i) {
        const double exact = profile[i].fraction * clients;
        counts[i] = guarded_floor(exact);
        remainders[i] = {exact - counts[i], i};
        assigned += counts[i];
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int r = 0; r < clients - assigned; ++r) counts[remainders[r % entries].second] += 1;

    std::vector<int> order(clients);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    std::vector<std::vector<int>> sets(clients);
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < entries; ++i) {
        for (int c = 0; c < counts[i]; ++c) {
            sets[order[cursor++]] = profile[i].modalities;
        }
    }

    // Repair: every modality must appear on at least one client. The modality
    // goes to the client with the smallest set (ties: lowest id).
    for (int m = 0; m < num_modalities; ++m) {
        bool covered = false;
        for (const auto& set : sets) {
            if (std::find(set.begin(), set.end(), m) != set.end()) {
                covered = true;
                break;
            }
        }
        if (covered) continue;
        int target = 0;
        for (int k = 1; k < clients; ++k) {
            if (sets[k].size() < sets[target].size()) target = k;
        }
        sets[target].push_back(m);
        if (repairs != nullptr) {
            repairs->push_back("modality " + std::to_string(m) + " missing from profile; assigned to client " +
                               std::to_string(target));
        }
    }

    for (auto& set : sets) {
        std::sort(set.begin(), set.end());
        set.erase(std::unique(set.begin(), set.end()), set.end());
    }
    return sets;
}

FederatedSplit generate_dataset(const SyntheticSpec& spec) {
    spec.validate();
    // Stream order (fixed contract): prototypes, train labels, train features,
    // dirichlet partition, modality assignment, test labels+features.
    Rng rng(spec.seed);

    const std::size_t num_modalities = spec.modalities.size();
    const auto protos = draw_prototypes(spec, rng);

    const std::size_t total = static_cast<std::size_t>(spec.clients) * spec.samples_per_client;
    std::vector<int> labels(total);
    for (auto& y : labels) y = static_cast<int>(rng.below(spec.classes));

    std::vector<Sample> pool(total);
    for (std::size_t i = 0; i < total; ++i) {
        pool[i].label = labels[i];
        pool[i].features.resize(num_modalities);
        for (std::size_t m = 0; m < num_modalities; ++m) {
            const auto& mu = protos[m][labels[i]];
            auto& x = pool[i].features[m];
            x.resize(mu.size());
            for (std::size_t j = 0; j < mu.size(); ++j) x[j] = mu[j] + spec.noise_std * rng.normal();
        }
    }

    const auto partition = dirichlet_partition(labels, spec.clients, spec.dirichlet_alpha, rng);

    FederatedSplit split;
    split.spec = spec;
    const auto modality_sets =
        assign_modalities(spec.clients, spec.profile, static_cast<int>(num_modalities), rng, &split.repairs);

    split.clients.resize(spec.clients);
    for (int k = 0; k < spec.clients; ++k) {
        auto& client = split.clients[k];
        client.id = k;
        client.modalities = modality_sets[k];
        client.samples.reserve(partition[k].size());
        for (const int idx : partition[k]) {
            Sample s;
            s.label = pool[idx].label;
            s.features.resize(num_modalities);
            for (const int m : client.modalities) s.features[m] = pool[idx].features[m];
            client.samples.push_back(std::move(s));
        }
    }

    split.test.resize(spec.test_samples);
    for (auto& s : split.test) {
        s.label = static_cast<int>(rng.below(spec.classes));
        s.features.resize(num_modalities);
        for (std::size_t m = 0; m < num_modalities; ++m) {
            const auto& mu = protos[m][s.label];
            auto& x = s.features[m];
            x.resize(mu.size());
            for (std::size_t j = 0; j < mu.size(); ++j) x[j] = mu[j] + spec.noise_std * rng.normal();
        }
    }
    return split;
}

namespace {

ordered_json spec_to_json(const SyntheticSpec& spec) {
    ordered_json j;
    j["classes"] = spec.classes;
    j["modalities"] = ordered_json::array();
    for (const auto& m : spec.modalities) j["modalities"].push_back({{"id", m.id}, {"dim", m.dim}});
    j["noise_std"] = spec.noise_std;
    j["class_separation"] = spec.class_separation;
    j["clients"] = spec.clients;
    j["dirichlet_alpha"] = spec.dirichlet_alpha;
    j["samples_per_client"] = spec.samples_per_client;
    j["test_samples"] = spec.test_samples;
    j["profile"] = ordered_json::array();
    for (const auto& entry : spec.profile) {
        ordered_json names = ordered_json::array();
        for (const int m : entry.modalities) names.push_back(spec.modalities[m].id);
        j["profile"].push_back({{"modalities", names}, {"fraction", entry.fraction}});
    }
    j["seed"] = spec.seed;
    return j;
}

SyntheticSpec spec_from_json(const nlohmann::json& j) {
    SyntheticSpec spec;
    spec.classes = j.at("classes").get<int>();
    spec.modalities.clear();
    for (const auto& m : j.at("modalities")) {
        spec.modalities.push_back({m.at("id").get<std::string>(), m.at("dim").get<int>()});
    }
    spec.noise_std = j.at("noise_std").get<double>();
    spec.class_separation = j.at("class_separation").get<double>();
    spec.clients = j.at("clients").get<int>();
    spec.dirichlet_alpha = j.at("dirichlet_alpha").get<double>();
    spec.samples_per_client = j.at("samples_per_client").get<int>();
    spec.test_samples = j.at("test_samples").get<int>();
    spec.profile.clear();
    auto index_of = [&](const std::string& id) {
        for (std::size_t m = 0; m < spec.modalities.size(); ++m) {
            if (spec.modalities[m].id == id) return static_cast<int>(m);
        }
        throw std::invalid_argument("dataset json: unknown modality id '" + id + "' in profile");
    };
    for (const auto& entry : j.at("profile")) {
        ProfileEntry p;
        for (const auto& name : entry.at("modalities")) p.modalities.push_back(index_of(name.get<std::string>()));
        p.fraction = entry.at("fraction").get<double>();
        spec.profile.push_back(std::move(p));
    }
    spec.seed = j.at("seed").get<std::uint64_t>();
    return spec;
}

ordered_json sample_to_json(const SyntheticSpec& spec, const Sample& s) {
    ordered_json features = ordered_json::object();
    for (std::size_t m = 0; m < s.features.size(); ++m) {
        if (!s.features[m].empty()) features[spec.modalities[m].id] = s.features[m];
    }
    return ordered_json{{"features", std::move(features)}, {"label", s.label}};
}

Sample sample_from_json(const SyntheticSpec& spec, const nlohmann::json& j) {
    Sample s;
    s.features.resize(spec.modalities.size());
    for (const auto& [id, values] : j.at("features").items()) {
        int index = -1;
        for (std::size_t m = 0; m < spec.modalities.size(); ++m) {
            if (spec.modalities[m].id == id) index = static_cast<int>(m);
        }
        if (index < 0) throw std::invalid_argument("dataset json: unknown modality id '" + id + "'");
        s.features[index] = values.get<std::vector<double>>();
    }
    s.label = j.at("label").get<int>();
    return s;
}

}  // namespace

std::string dataset_to_json(const FederatedSplit& split) {
    ordered_json j;
    j["format"] = "fedmmx-dataset";
    j["version"] = 1;
    j["spec"] = spec_to_json(split.spec);
    j["repairs"] = split.repairs;
    j["clients"] = ordered_json::array();
    for (const auto& client : split.clients) {
        ordered_json jc;
        jc["id"] = client.id;
        ordered_json names = ordered_json::array();
        for (const int m : client.modalities) names.push_back(split.spec.modalities[m].id);
        jc["modalities"] = std::move(names);
        jc["samples"] = ordered_json::array();
        for (const auto& s : client.samples) jc["samples"].push_back(sample_to_json(split.spec, s));
        j["clients"].push_back(std::move(jc));
    }
    j["test"] = ordered_json::array();
    for (const auto& s : split.test) j["test"].push_back(sample_to_json(split.spec, s));
    return j.dump();
}

FederatedSplit dataset_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != "fedmmx-dataset")
        throw std::invalid_argument("dataset json: unexpected format tag");
    if (j.at("version").get<int>() != 1)
        throw std::invalid_argument("dataset json: unsupported version");

    FederatedSplit split;
    split.spec = spec_from_json(j.at("spec"));
    split.repairs = j.at("repairs").get<std::vector<std::string>>();
    auto index_of = [&](const std::string& id) {
        for (std::size_t m = 0; m < split.spec.modalities.size(); ++m) {
            if (split.spec.modalities[m].id == id) return static_cast<int>(m);
        }
        throw std::invalid_argument("dataset json: unknown modality id '" + id + "'");
    };
    for (const auto& jc : j.at("clients")) {
        ClientData client;
        client.id = jc.at("id").get<int>();
        for (const auto& name : jc.at("modalities")) client.modalities.push_back(index_of(name.get<std::string>()));
        for (const auto& js : jc.at("samples")) client.samples.push_back(sample_from_json(split.spec, js));
        split.clients.push_back(std::move(client));
    }
    for (const auto& js : j.at("test")) split.test.push_back(sample_from_json(split.spec, js));
    return split;
}

void save_dataset(const FederatedSplit& split, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_dataset: cannot open '" + path + "'");
    out << dataset_to_json(split) << '\n';
    if (!out) throw std::runtime_error("save_dataset: write failed for '" + path + "'");
}

FederatedSplit load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_dataset: cannot open '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return dataset_from_json(buffer.str());
}

}  // namespace fedmmx

#include "fedmmx/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fedmmx {

namespace {

std::string trim(const std::string& s) {
    std::size_t begin = 0;
    std::size_t end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    return s.substr(begin, end - begin);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream stream(s);
    std::string item;
    while (std::getline(stream, item, sep)) parts.push_back(trim(item));
    if (!s.empty() && s.back() == sep) parts.push_back("");
    return parts;
}

[[noreturn]] void bad_value(const std::string& section, const std::string& key,
                            const std::string& why) {
    throw std::invalid_argument("config [" + section + "] " + key + ": " + why);
}

double parse_double(const std::string& section, const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) bad_value(section, key, "invalid number '" + v + "'");
        return d;
    } catch (const std::invalid_argument&) {
        bad_value(section, key, "invalid number '" + v + "'");
    } catch (const std::out_of_range&) {
        bad_value(section, key, "number out of range '" + v + "'");
    }
}

int parse_int(const std::string& section, const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long n = std::stol(v, &pos);
        if (pos != v.size()) bad_value(section, key, "invalid integer '" + v + "'");
        return static_cast<int>(n);
    } catch (const std::invalid_argument&) {
        bad_value(section, key, "invalid integer '" + v + "'");
    } catch (const std::out_of_range&) {
        bad_value(section, key, "integer out of range '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& section, const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long n = std::stoull(v, &pos);
        if (pos != v.size()) bad_value(section, key, "invalid integer '" + v + "'");
        return n;
    } catch (const std::invalid_argument&) {
        bad_value(section, key, "invalid integer '" + v + "'");
    } catch (const std::out_of_range&) {
        bad_value(section, key, "integer out of range '" + v + "'");
    }
}

// "vision:8, text:6" -> modality definitions.
std::vector<ModalityDef> parse_modalities(const std::string& v) {
    std::vector<ModalityDef> out;
    for (const auto& part : split(v, ',')) {
        if (part.empty()) continue;
        const auto colon = part.find(':');
        if (colon == std::string::npos)
            bad_value("data", "modalities", "expected 'id:dim' in '" + part + "'");
        ModalityDef def;
        def.id = trim(part.substr(0, colon));
        def.dim = parse_int("data", "modalities", trim(part.substr(colon + 1)));
        out.push_back(std::move(def));
    }
    if (out.empty()) bad_value("data", "modalities", "no modalities given");
    return out;
}

// "vision:0.25, text:0.25, vision+text:0.5" -> profile entries. Modality ids
// must already be known.
std::vector<ProfileEntry> parse_profile(const std::string& v,
                                        const std::vector<ModalityDef>& modalities) {
    auto index_of = [&](const std::string& id) {
        for (std::size_t m = 0; m < modalities.size(); ++m) {
            if (modalities[m].id == id) return static_cast<int>(m);
        }
        bad_value("data", "profile", "unknown modality id '" + id + "'");
    };
    std::vector<ProfileEntry> out;
    for (const auto& part : split(v, ',')) {
        if (part.empty()) continue;
        const auto colon = part.rfind(':');
        if (colon == std::string::npos)
            bad_value("data", "profile", "expected 'subset:fraction' in '" + part + "'");
        ProfileEntry entry;
        const std::string subset = trim(part.substr(0, colon));
        if (subset != "none") {
            for (const auto& id : split(subset, '+')) entry.modalities.push_back(index_of(id));
            std::sort(entry.modalities.begin(), entry.modalities.end());
        }
        entry.fraction = parse_double("data", "profile", trim(part.substr(colon + 1)));
        out.push_back(std::move(entry));
    }
    if (out.empty()) bad_value("data", "profile", "no profile entries given");
    return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& section, const std::string& v) {
    std::vector<std::uint64_t> out;
    for (const auto& part : split(v, ',')) {
        if (part.empty()) continue;
        out.push_back(parse_u64(section, "seeds", part));
    }
    if (out.empty()) bad_value(section, "seeds", "no seeds given");
    return out;
}

using SectionMap = std::map<std::string, std::map<std::string, std::string>>;

SectionMap tokenize(const std::string& text) {
    SectionMap sections;
    std::string current = "";
    std::istringstream stream(text);
    std::string line;
    int line_no = 0;
    while (std::getline(stream, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(line_no) +
                                            ": malformed section header '" + line + "'");
            current = trim(line.substr(1, line.size() - 2));
            sections[current];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected key = value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
        sections[current][key] = value;
    }
    return sections;
}

}  // namespace

SimulationConfig ExperimentConfig::simulation() const {
    SimulationConfig sim;
    sim.data = data;
    sim.hyper = hyper;
    sim.hidden = hidden;
    sim.trust = trust;
    sim.attack = attack;
    sim.rounds = rounds;
    sim.participation = participation;
    sim.val_fraction = val_fraction;
    sim.eval = eval;
    sim.client_threads = client_threads;
    return sim;
}

void ExperimentConfig::validate() const {
    simulation().validate();
    if (seeds.empty()) throw std::invalid_argument("run.seeds: must be nonempty");
    if (out_dir.empty()) throw std::invalid_argument("run.out_dir: must be nonempty");
}

ExperimentConfig default_config() {
    ExperimentConfig cfg;
    cfg.data.modalities = {{"vision", 8}, {"text", 6}};
    cfg.data.profile = {{{0}, 0.25}, {{1}, 0.25}, {{0, 1}, 0.5}};
    return cfg;
}

ExperimentConfig parse_config(const std::string& text) {
    const auto sections = tokenize(text);
    for (const auto& [name, _] : sections) {
        if (name != "data" && name != "model" && name != "trust" && name != "attack" &&
            name != "run") {
            throw std::invalid_argument("config: unknown section [" + name + "]");
        }
    }

    ExperimentConfig cfg = default_config();

    if (const auto it = sections.find("data"); it != sections.end()) {
        const auto& kv = it->second;
        // modalities must be parsed before profile references them.
        if (const auto m = kv.find("modalities"); m != kv.end()) {
            cfg.data.modalities = parse_modalities(m->second);
            cfg.data.profile = {{{}, 1.0}};
            std::vector<int> all(cfg.data.modalities.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
            cfg.data.profile = {{all, 1.0}};
        }
        for (const auto& [key, value] : kv) {
            if (key == "classes") cfg.data.classes = parse_int("data", key, value);
            else if (key == "modalities") continue;
            else if (key == "noise_std") cfg.data.noise_std = parse_double("data", key, value);
            else if (key == "class_separation") cfg.data.class_separation = parse_double("data", key, value);
            else if (key == "clients") cfg.data.clients = parse_int("data", key, value);
            else if (key == "dirichlet_alpha") cfg.data.dirichlet_alpha = parse_double("data", key, value);
            else if (key == "samples_per_client") cfg.data.samples_per_client = parse_int("data", key, value);
            else if (key == "test_samples") cfg.data.test_samples = parse_int("data", key, value);
            else if (key == "profile") cfg.data.profile = parse_profile(value, cfg.data.modalities);
            else if (key == "seed") cfg.data.seed = parse_u64("data", key, value);
            else bad_value("data", key, "unknown key");
        }
    }

    if (const auto it = sections.find("model"); it != sections.end()) {
        for (const auto& [key, value] : it->second) {
            if (key == "hidden") cfg.hidden = parse_int("model", key, value);
            else if (key == "lambda1") cfg.hyper.lambda1 = parse_double("model", key, value);
            else if (key == "lambda2") cfg.hyper.lambda2 = parse_double("model", key, value);
            else if (key == "temperature") cfg.hyper.tau = parse_double("model", key, value);
            else if (key == "lr") cfg.hyper.lr = parse_double("model", key, value);
            else if (key == "local_epochs") cfg.hyper.local_epochs = parse_int("model", key, value);
            else if (key == "batch_size") cfg.hyper.batch_size = parse_int("model", key, value);
            else bad_value("model", key, "unknown key");
        }
    }

    if (const auto it = sections.find("trust"); it != sections.end()) {
        for (const auto& [key, value] : it->second) {
            if (key == "mode") cfg.trust.mode = trust_mode_from_string(value);
            else if (key == "alpha") cfg.trust.alpha = parse_double("trust", key, value);
            else if (key == "beta") cfg.trust.beta = parse_double("trust", key, value);
            else if (key == "gamma") cfg.trust.gamma = parse_double("trust", key, value);
            else if (key == "mu") cfg.trust.mu = parse_double("trust", key, value);
            else if (key == "floor") cfg.trust.floor = parse_double("trust", key, value);
            else if (key == "neutral_ec") cfg.trust.neutral_ec = parse_double("trust", key, value);
            else if (key == "hist_init") cfg.trust.hist_init = parse_double("trust", key, value);
            else bad_value("trust", key, "unknown key");
        }
    }

    if (const auto it = sections.find("attack"); it != sections.end()) {
        AttackSpec attack;
        for (const auto& [key, value] : it->second) {
            if (key == "kind") attack.kind = attack_kind_from_string(value);
            else if (key == "intensity") attack.intensity = parse_double("attack", key, value);
            else if (key == "fraction") attack.fraction = parse_double("attack", key, value);
            else if (key == "seed_offset") attack.seed_offset = parse_u64("attack", key, value);
            else bad_value("attack", key, "unknown key");
        }
        cfg.attack = attack;
    }

    if (const auto it = sections.find("run"); it != sections.end()) {
        for (const auto& [key, value] : it->second) {
            if (key == "rounds") cfg.rounds = parse_int("run", key, value);
            else if (key == "participation") cfg.participation = parse_double("run", key, value);
            else if (key == "seeds") cfg.seeds = parse_seeds("run", value);
            else if (key == "out_dir") cfg.out_dir = value;
            else if (key == "val_fraction") cfg.val_fraction = parse_double("run", key, value);
            else if (key == "mask_fraction") cfg.eval.mask_fraction = parse_double("run", key, value);
            else if (key == "mask_value") cfg.eval.mask_value = parse_double("run", key, value);
            else if (key == "ece_bins") cfg.eval.ece_bins = parse_int("run", key, value);
            else if (key == "client_threads") cfg.client_threads = parse_int("run", key, value);
            else bad_value("run", key, "unknown key");
        }
    }

    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_config: cannot open '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
    nlohmann::ordered_json j;
    j["data"]["classes"] = cfg.data.classes;
    j["data"]["modalities"] = nlohmann::ordered_json::array();
    for (const auto& m : cfg.data.modalities) {
        j["data"]["modalities"].push_back({{"id", m.id}, {"dim", m.dim}});
    }
    j["data"]["noise_std"] = cfg.data.noise_std;
    j["data"]["class_separation"] = cfg.data.class_separation;
    j["data"]["clients"] = cfg.data.clients;
    j["data"]["dirichlet_alpha"] = cfg.data.dirichlet_alpha;
    j["data"]["samples_per_client"] = cfg.data.samples_per_client;
    j["data"]["test_samples"] = cfg.data.test_samples;
    j["data"]["profile"] = nlohmann::ordered_json::array();
    for (const auto& p : cfg.data.profile) {
        nlohmann::ordered_json names = nlohmann::ordered_json::array();
        for (const int m : p.modalities) names.push_back(cfg.data.modalities[m].id);
        j["data"]["profile"].push_back({{"modalities", names}, {"fraction", p.fraction}});
    }
    j["data"]["seed"] = cfg.data.seed;
    j["model"] = {{"hidden", cfg.hidden},       {"lambda1", cfg.hyper.lambda1},
                  {"lambda2", cfg.hyper.lambda2}, {"temperature", cfg.hyper.tau},
                  {"lr", cfg.hyper.lr},         {"local_epochs", cfg.hyper.local_epochs},
                  {"batch_size", cfg.hyper.batch_size}};
    j["trust"] = {{"mode", to_string(cfg.trust.mode)}, {"alpha", cfg.trust.alpha},
                  {"beta", cfg.trust.beta},            {"gamma", cfg.trust.gamma},
                  {"mu", cfg.trust.mu},                {"floor", cfg.trust.floor},
                  {"neutral_ec", cfg.trust.neutral_ec}, {"hist_init", cfg.trust.hist_init}};
    if (cfg.attack.has_value()) {
        j["attack"] = {{"kind", to_string(cfg.attack->kind)},
                       {"intensity", cfg.attack->intensity},
                       {"fraction", cfg.attack->fraction},
                       {"seed_offset", cfg.attack->seed_offset}};
    }
    j["run"] = {{"rounds", cfg.rounds},
                {"participation", cfg.participation},
                {"seeds", cfg.seeds},
                {"out_dir", cfg.out_dir},
                {"val_fraction", cfg.val_fraction},
                {"mask_fraction", cfg.eval.mask_fraction},
                {"mask_value", cfg.eval.mask_value},
                {"ece_bins", cfg.eval.ece_bins},
                {"client_threads", cfg.client_threads}};
    return j.dump(2);
}

}  // namespace fedmmx

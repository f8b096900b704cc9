#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedmmx/rng.hpp"

namespace fedmmx {

struct ModalityDef {
    std::string id;
    int dim = 1;
    bool operator==(const ModalityDef&) const = default;
};

// One entry of the modality profile: `fraction` of clients receive exactly the
// modalities listed in `modalities` (indices into SyntheticSpec::modalities).
struct ProfileEntry {
    std::vector<int> modalities;
    double fraction = 0.0;
    bool operator==(const ProfileEntry&) const = default;
};

struct SyntheticSpec {
    int classes = 4;
    std::vector<ModalityDef> modalities;
    double noise_std = 0.5;
    double class_separation = 3.0;  // closest inter-class prototype distance (joint)
    int clients = 10;
    double dirichlet_alpha = 0.5;
    int samples_per_client = 50;
    int test_samples = 500;
    std::vector<ProfileEntry> profile;
    std::uint64_t seed = 1;

    // Throws std::invalid_argument naming the violated field.
    void validate() const;

    bool operator==(const SyntheticSpec&) const = default;
};

// features[m] is the feature vector for modality index m; an empty vector
// means the modality is absent on this sample.
struct Sample {
    std::vector<std::vector<double>> features;
    int label = 0;

    bool has_modality(std::size_t m) const {
        return m < features.size() && !features[m].empty();
    }
    std::vector<int> available_modalities() const;

    bool operator==(const Sample&) const = default;
};

struct ClientData {
    int id = 0;
    std::vector<int> modalities;  // sorted modality indices
    std::vector<Sample> samples;

    bool operator==(const ClientData&) const = default;
};

struct FederatedSplit {
    SyntheticSpec spec;
    std::vector<ClientData> clients;
    std::vector<Sample> test;            // all modalities present, generated independently
    std::vector<std::string> repairs;    // human-readable notes from profile repair

    bool operator==(const FederatedSplit&) const = default;
};

// Class prototypes mu[modality][class][dim], reproducing exactly the draws
// generate_dataset makes first from Rng(spec.seed).
std::vector<std::vector<std::vector<double>>> class_prototypes(const SyntheticSpec& spec);

// Seeded synthetic generation: per-class/per-modality Gaussian prototypes,
// Dirichlet label partition, profile-driven modality assignment. Pure function
// of the spec (bit-exact replay).
FederatedSplit generate_dataset(const SyntheticSpec& spec);

// Assigns every index to exactly one client; per-class client proportions are
// Dirichlet(alpha). Empty clients are repaired by moving one sample from the
// largest client. Throws if labels.size() < clients.
std::vector<std::vector<int>> dirichlet_partition(const std::vector<int>& labels,
                                                  int clients, double alpha, Rng& rng);

// Client counts per profile entry follow largest-remainder rounding; a repair
// pass guarantees every modality lands on at least one client (notes appended
// to `repairs` when non-null).
std::vector<std::vector<int>> assign_modalities(int clients,
                                                const std::vector<ProfileEntry>& profile,
                                                int num_modalities, Rng& rng,
                                                std::vector<std::string>* repairs = nullptr);

// Versioned JSON dataset document (schema fedmmx-dataset v1).
void save_dataset(const FederatedSplit& split, const std::string& path);
FederatedSplit load_dataset(const std::string& path);
std::string dataset_to_json(const FederatedSplit& split);
FederatedSplit dataset_from_json(const std::string& text);

}  // namespace fedmmx

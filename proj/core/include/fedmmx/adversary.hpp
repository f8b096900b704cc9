#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedmmx/dataset.hpp"
#include "fedmmx/nam.hpp"
#include "fedmmx/rng.hpp"

namespace fedmmx {

struct ClientUpdate;  // federation.hpp

enum class AttackKind { label_flip, sign_flip, gauss_noise };

AttackKind attack_kind_from_string(const std::string& name);
std::string to_string(AttackKind kind);

struct AttackSpec {
    AttackKind kind = AttackKind::label_flip;
    double intensity = 1.0;          // flip probability / noise scale multiplier
    double fraction = 0.2;           // adversarial fraction of clients
    std::uint64_t seed_offset = 0;

    void validate() const;
};

// floor(fraction * clients) distinct ids, sorted ascending; fixed for a whole
// simulation.
std::vector<int> select_adversaries(int clients, double fraction, Rng& rng);

// Each label is independently replaced with probability `intensity` by a
// uniformly drawn different class.
void corrupt_labels(std::vector<Sample>& samples, double intensity, int classes, Rng& rng);

// Update-level attacks. sign_flip scales the transmitted delta (p - global) by
// (1 - 2*intensity): identity at intensity 0, full reflection about the global
// at intensity 1 (an involution); gauss_noise adds intensity * N(0,1) per
// coordinate. label_flip is a no-op here (it poisons data at setup).
void corrupt_update(ClientUpdate& update, const NamParams& global_params,
                    const AttackSpec& spec, Rng& rng);

}  // namespace fedmmx

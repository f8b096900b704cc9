#include "fedmmx/adversary.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "fedmmx/federation.hpp"
#include "fedmmx/numeric.hpp"

namespace fedmmx {

AttackKind attack_kind_from_string(const std::string& name) {
    if (name == "label_flip") return AttackKind::label_flip;
    if (name == "sign_flip") return AttackKind::sign_flip;
    if (name == "gauss_noise") return AttackKind::gauss_noise;
    throw std::invalid_argument("attack.kind: unknown kind '" + name + "'");
}

std::string to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::label_flip: return "label_flip";
        case AttackKind::sign_flip: return "sign_flip";
        case AttackKind::gauss_noise: return "gauss_noise";
    }
    return "unknown";
}

void AttackSpec::validate() const {
    if (intensity < 0.0 || intensity > 1.0)
        throw std::invalid_argument("attack.intensity: must be in [0,1]");
    if (fraction < 0.0 || fraction > 1.0)
        throw std::invalid_argument("attack.fraction: must be in [0,1]");
}

std::vector<int> select_adversaries(int clients, double fraction, Rng& rng) {
    if (fraction < 0.0 || fraction > 1.0)
        throw std::invalid_argument("select_adversaries: fraction must be in [0,1]");
    const int count = std::min(clients, guarded_floor(fraction * clients));
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

void corrupt_labels(std::vector<Sample>& samples, double intensity, int classes, Rng& rng) {
    if (classes < 2) throw std::invalid_argument("corrupt_labels: classes must be >= 2");
    if (intensity < 0.0 || intensity > 1.0)
        throw std::invalid_argument("corrupt_labels: intensity must be in [0,1]");
    for (auto& sample : samples) {
        if (rng.uniform01() < intensity) {
            // (y + 1 + u) mod C with u in [0, C-1) is guaranteed != y.
            const int u = static_cast<int>(rng.below(classes - 1));
            sample.label = (sample.label + 1 + u) % classes;
        }
    }
}

void corrupt_update(ClientUpdate& update, const NamParams& global_params,
                    const AttackSpec& spec, Rng& rng) {
    spec.validate();
    if (spec.intensity == 0.0) return;  // exact identity for every kind
    switch (spec.kind) {
        case AttackKind::label_flip:
            return;  // data-level attack, applied at simulation setup
        case AttackKind::sign_flip: {
            // Transmitted delta scaled by (1 - 2*intensity): untouched at
            // intensity 0, fully reflected about the global at intensity 1.
            const double delta_scale = 1.0 - 2.0 * spec.intensity;
            for (std::size_t i = 0; i < update.modalities.size(); ++i) {
                const auto global = global_params.segment(update.modalities[i]);
                auto& segment = update.segments[i];
                if (segment.size() != global.size())
                    throw std::invalid_argument("corrupt_update: segment size mismatch");
                for (std::size_t k = 0; k < segment.size(); ++k) {
                    segment[k] = global[k] + delta_scale * (segment[k] - global[k]);
                }
            }
            return;
        }
        case AttackKind::gauss_noise:
            for (auto& segment : update.segments) {
                for (auto& v : segment) v += spec.intensity * rng.normal();
            }
            return;
    }
    throw std::invalid_argument("corrupt_update: unknown attack kind");
}

}  // namespace fedmmx

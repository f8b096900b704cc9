#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace fedmmx {

// Stable log-softmax (max subtraction).
inline std::vector<double> log_softmax(std::span<const double> logits) {
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (const double v : logits) sum += std::exp(v - max_logit);
    const double log_norm = max_logit + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_norm;
    return out;
}

inline std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out = log_softmax(logits);
    for (auto& v : out) v = std::exp(v);
    return out;
}

// Ties resolve to the lowest index.
inline std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// ceil/floor of fraction*count with an epsilon guard against cases like
// 0.2*10 = 2.0000000000000004.
inline int guarded_ceil(double x) { return static_cast<int>(std::ceil(x - 1e-9)); }
inline int guarded_floor(double x) { return static_cast<int>(std::floor(x + 1e-9)); }

}  // namespace fedmmx

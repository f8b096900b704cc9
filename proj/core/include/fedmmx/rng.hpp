#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace fedmmx {

// splitmix64 finalizer; used for seed expansion and stream derivation.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Independent sub-stream seed from (master, tag, a, b). Every random draw in a
// simulation comes from a stream derived this way, so results do not depend on
// thread scheduling or call order across clients/rounds.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t s = mix64(master);
    s = mix64(s ^ mix64(tag));
    s = mix64(s ^ mix64(a));
    s = mix64(s ^ mix64(b));
    return s;
}

// Stream tags. Values are part of the reproducibility contract: changing them
// changes every derived stream.
namespace stream {
inline constexpr std::uint64_t data_gen = 0x01;
inline constexpr std::uint64_t model_init = 0x02;
inline constexpr std::uint64_t client_round = 0x03;
inline constexpr std::uint64_t participant_sampling = 0x04;
inline constexpr std::uint64_t train_val_split = 0x05;
inline constexpr std::uint64_t adversary_select = 0x06;
inline constexpr std::uint64_t label_corruption = 0x07;
inline constexpr std::uint64_t update_corruption = 0x08;
}  // namespace stream

// xoshiro256++ with hand-rolled samplers. std::mt19937_64 is portable but the
// standard distributions are not; everything here produces the same bits on
// every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) {
        std::uint64_t s = seed;
        for (auto& word : state_) {
            s = mix64(s);
            word = s;
        }
        has_spare_ = false;
        spare_ = 0.0;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1).
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform double in (0, 1]; safe as a log/pow argument.
    double uniform01_open() { return 1.0 - uniform01(); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller; the spare half of each pair is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform01_open();
        const double u2 = uniform01();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * kPi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    // Gamma(shape, 1) via Marsaglia-Tsang, with the shape<1 boost.
    double gamma(double shape) {
        if (shape <= 0.0) throw std::invalid_argument("Rng::gamma: shape must be positive");
        if (shape < 1.0) {
            const double u = uniform01_open();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = 0.0;
            double v = 0.0;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform01_open();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    // Symmetric Dirichlet(alpha, ..., alpha) over k components.
    std::vector<double> dirichlet(double alpha, std::size_t k) {
        std::vector<double> draws(k);
        double total = 0.0;
        for (auto& g : draws) {
            g = gamma(alpha);
            total += g;
        }
        if (total <= 0.0) {
            // All gammas underflowed (only reachable for absurdly small alpha);
            // fall back to a point mass on one uniformly drawn component.
            std::fill(draws.begin(), draws.end(), 0.0);
            draws[below(k)] = 1.0;
            return draws;
        }
        for (auto& g : draws) g /= total;
        return draws;
    }

    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(values[i - 1], values[j]);
        }
    }

private:
    static constexpr double kPi = 3.14159265358979323846;

    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4];
    bool has_spare_;
    double spare_;
};

}  // namespace fedmmx

#include <benchmark/benchmark.h>

#include <numeric>

#include "fedmmx/config.hpp"
#include "fedmmx/federation.hpp"
#include "fedmmx/nam.hpp"

using namespace fedmmx;

namespace {

NamLayout bench_layout() {
    NamLayout layout;
    layout.modalities = {{"vision", 8}, {"text", 6}};
    layout.hidden = 8;
    layout.classes = 4;
    return layout;
}

std::vector<Sample> bench_samples(const NamLayout& layout, int count) {
    Rng rng(1);
    std::vector<Sample> samples(count);
    for (auto& s : samples) {
        s.label = static_cast<int>(rng.below(layout.classes));
        s.features.resize(layout.modalities.size());
        for (std::size_t m = 0; m < layout.modalities.size(); ++m) {
            s.features[m].resize(layout.modalities[m].dim);
            for (auto& x : s.features[m]) x = rng.normal();
        }
    }
    return samples;
}

void BM_Forward(benchmark::State& state) {
    const auto layout = bench_layout();
    Rng rng(2);
    const auto params = NamParams::random_init(layout, rng);
    const auto samples = bench_samples(layout, 1);
    const std::vector<int> both = {0, 1};
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward(params, samples[0], both));
    }
}
BENCHMARK(BM_Forward);

void BM_LossAndGrad(benchmark::State& state) {
    const auto layout = bench_layout();
    Rng rng(3);
    const auto params = NamParams::random_init(layout, rng);
    const auto samples = bench_samples(layout, static_cast<int>(state.range(0)));
    std::vector<int> batch(samples.size());
    std::iota(batch.begin(), batch.end(), 0);
    const std::vector<int> both = {0, 1};
    Hyperparams hyper;
    for (auto _ : state) {
        benchmark::DoNotOptimize(loss_and_grad(params, samples, batch, both, hyper));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LossAndGrad)->Arg(8)->Arg(32)->Arg(128);

void BM_Aggregate(benchmark::State& state) {
    const auto layout = bench_layout();
    Rng rng(4);
    const auto global = NamParams::random_init(layout, rng);
    const int clients = static_cast<int>(state.range(0));
    std::vector<ClientUpdate> updates;
    TrustReport trust;
    for (int id = 0; id < clients; ++id) {
        ClientUpdate u;
        u.client_id = id;
        u.modalities = {0, 1};
        auto params = NamParams::random_init(layout, rng);
        for (const int m : u.modalities) {
            const auto seg = params.segment(m);
            u.segments.emplace_back(seg.begin(), seg.end());
        }
        u.n_k = 100;
        updates.push_back(std::move(u));
        trust.entries.push_back({id, 0.5, 0.5, 0.5, 0.5, 1.0 / clients});
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(aggregate(global, updates, trust));
    }
}
BENCHMARK(BM_Aggregate)->Arg(10)->Arg(50);

void BM_SimulationRound(benchmark::State& state) {
    SimulationConfig cfg = default_config().simulation();
    cfg.rounds = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_simulation(cfg, 7));
    }
}
BENCHMARK(BM_SimulationRound)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

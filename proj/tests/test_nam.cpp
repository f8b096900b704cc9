#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fedmmx/metrics.hpp"
#include "fedmmx/nam.hpp"
#include "fedmmx/numeric.hpp"
#include "support/oracles.hpp"

using namespace fedmmx;

namespace {

NamLayout tiny_layout() {
    NamLayout layout;
    layout.modalities = {{"a", 2}, {"b", 2}};
    layout.hidden = 4;
    layout.classes = 3;
    return layout;
}

Sample sample_for(const NamLayout& layout, std::vector<std::vector<double>> features, int label) {
    Sample s;
    s.features = std::move(features);
    s.label = label;
    (void)layout;
    return s;
}

const std::vector<int> kBoth = {0, 1};

}  // namespace

TEST_CASE("zero model predicts the uniform distribution") {
    NamParams params(tiny_layout());
    const auto s = sample_for(tiny_layout(), {{0.3, -0.7}, {1.1, 0.2}}, 0);
    const auto fwd = forward(params, s, kBoth);
    for (const auto& z : fwd.modality_logits) {
        for (const double v : z) CHECK(v == 0.0);
    }
    const auto p = softmax(fwd.fused);
    for (const double v : p) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("single available modality fuses to itself") {
    const auto layout = tiny_layout();
    auto params = oracles::random_params(layout, 5);
    const auto s = sample_for(layout, {{0.3, -0.7}, {}}, 1);
    const std::vector<int> only_a = {0};
    const auto fwd = forward(params, s, only_a);
    CHECK(fwd.fused == fwd.modality_logits[0]);
}

TEST_CASE("hand-evaluated H=1 perceptron") {
    // One modality, one feature, H=1, C=2: w_in=1, b_hidden=0, w_out=[1,-1],
    // bias=0, x=2 -> relu(2)=2 -> z = [2, -2].
    NamLayout layout;
    layout.modalities = {{"m", 1}};
    layout.hidden = 1;
    layout.classes = 2;
    NamParams params(layout);
    params.w_in(0, 0)[0] = 1.0;
    params.w_out(0, 0)[0] = 1.0;
    params.w_out(0, 0)[1] = -1.0;

    Sample s;
    s.features = {{2.0}};
    s.label = 0;
    const std::vector<int> avail = {0};
    const auto fwd = forward(params, s, avail);
    CHECK(fwd.fused == std::vector<double>{2.0, -2.0});

    const auto attr = attribution(params, s, avail);
    CHECK(attr.contributions[0] == std::vector<double>{2.0, -2.0});
    CHECK(attr.class_totals[0] == std::vector<double>{2.0, -2.0});
}

TEST_CASE("forward rejects bad inputs") {
    NamParams params(tiny_layout());
    const auto s = sample_for(tiny_layout(), {{0.1, 0.2}, {0.3, 0.4}}, 0);
    const std::vector<int> unknown = {5};
    CHECK_THROWS_AS(forward(params, s, unknown), std::invalid_argument);

    Sample bad = s;
    bad.features[1] = {1.0};  // wrong dimension
    CHECK_THROWS_AS(forward(params, bad, kBoth), std::invalid_argument);

    Sample missing = s;
    missing.features[1].clear();
    CHECK_THROWS_AS(forward(params, missing, kBoth), std::invalid_argument);
}

TEST_CASE("attribution of the zero model is zero") {
    NamParams params(tiny_layout());
    const auto s = sample_for(tiny_layout(), {{0.3, -0.7}, {1.1, 0.2}}, 0);
    const auto attr = attribution(params, s, kBoth);
    for (const auto& contrib : attr.contributions) {
        for (const double v : contrib) CHECK(v == 0.0);
    }
    for (const auto& totals : attr.class_totals) {
        for (const double v : totals) CHECK(v == 0.0);
    }
}

TEST_CASE("additivity identity over 100 random models") {
    const auto layout = tiny_layout();
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const auto params = oracles::random_params(layout, seed);
        const auto samples = oracles::random_samples(layout, 1, layout.classes, seed + 1000);
        const auto fwd = forward(params, samples[0], kBoth);
        const auto attr = attribution(params, samples[0], kBoth);
        for (std::size_t i = 0; i < attr.modalities.size(); ++i) {
            const auto bias = params.bias(attr.modalities[i]);
            for (int c = 0; c < layout.classes; ++c) {
                CHECK(std::abs(bias[c] + attr.class_totals[i][c] - fwd.modality_logits[i][c]) <=
                      1e-10);
            }
        }
        for (int c = 0; c < layout.classes; ++c) {
            const double mean =
                (fwd.modality_logits[0][c] + fwd.modality_logits[1][c]) / 2.0;
            CHECK(std::abs(mean - fwd.fused[c]) <= 1e-10);
        }
    }
}

TEST_CASE("modal loss vanishes where the distillation target is trivial") {
    const auto layout = tiny_layout();
    Hyperparams hyper;
    const std::vector<int> batch = {0};

    SUBCASE("single modality") {
        const auto params = oracles::random_params(layout, 3);
        const auto samples = oracles::random_samples(layout, 1, layout.classes, 4);
        const std::vector<int> only_a = {0};
        const auto loss = loss_only(params, samples, batch, only_a, hyper);
        CHECK(loss.modal == 0.0);
    }

    SUBCASE("identical per-modality logits") {
        // Same shape functions and same inputs on both modalities.
        auto params = oracles::random_params(layout, 5);
        const auto seg = params.segment(0);
        std::copy(seg.begin(), seg.end(), params.segment(1).begin());
        Sample s;
        s.features = {{0.4, -1.2}, {0.4, -1.2}};
        s.label = 1;
        const std::vector<Sample> data = {s};
        const auto loss = loss_only(params, data, batch, kBoth, hyper);
        CHECK(loss.modal == doctest::Approx(0.0).epsilon(1e-15));
    }
}

TEST_CASE("loss components are nonnegative and total reconstructs") {
    const auto layout = tiny_layout();
    Hyperparams hyper;
    hyper.lambda1 = 0.7;
    hyper.lambda2 = 0.3;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto params = oracles::random_params(layout, seed);
        const auto samples = oracles::random_samples(layout, 5, layout.classes, seed + 50);
        std::vector<int> batch(samples.size());
        std::iota(batch.begin(), batch.end(), 0);
        const auto loss = loss_only(params, samples, batch, kBoth, hyper);
        CHECK(loss.pred >= 0.0);
        CHECK(loss.modal >= 0.0);
        CHECK(loss.intp >= 0.0);
        CHECK(std::abs(loss.total - (loss.pred + hyper.lambda1 * loss.modal +
                                     hyper.lambda2 * loss.intp)) <= 1e-12);
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    const auto layout = tiny_layout();
    Hyperparams hyper;
    hyper.lambda1 = 0.5;
    hyper.lambda2 = 0.1;
    for (std::uint64_t seed : {21u, 22u, 23u}) {
        const auto params = oracles::random_params(layout, seed);
        const auto samples = oracles::random_samples(layout, 4, layout.classes, seed + 7);
        std::vector<int> batch(samples.size());
        std::iota(batch.begin(), batch.end(), 0);
        const auto lg = loss_and_grad(params, samples, batch, kBoth, hyper);
        const auto fd =
            oracles::finite_difference_grad(params, samples, batch, kBoth, hyper, 1e-5);
        CHECK(oracles::max_relative_error(lg.grad.flatten(), fd) < 1e-4);
    }
}

TEST_CASE("gradient entries for unavailable modalities are zero") {
    const auto layout = tiny_layout();
    Hyperparams hyper;
    const auto params = oracles::random_params(layout, 31);
    const auto samples = oracles::random_samples(layout, 3, layout.classes, 32);
    std::vector<int> batch(samples.size());
    std::iota(batch.begin(), batch.end(), 0);
    const std::vector<int> only_b = {1};
    const auto lg = loss_and_grad(params, samples, batch, only_b, hyper);
    for (const double g : lg.grad.segment(0)) CHECK(g == 0.0);
}

TEST_CASE("sgd_step arithmetic") {
    NamLayout layout;
    layout.modalities = {{"m", 1}};
    layout.hidden = 1;
    layout.classes = 2;
    NamParams params(layout);
    params.fill(1.0);
    NamParams grads(layout);
    grads.fill(0.5);

    SUBCASE("lr = 0 leaves params unchanged") {
        auto p = params;
        sgd_step(p, grads, 0.0);
        CHECK(p == params);
    }
    SUBCASE("zero gradient leaves params unchanged") {
        auto p = params;
        NamParams zero(layout);
        sgd_step(p, zero, 0.1);
        CHECK(p == params);
    }
    SUBCASE("p=1, g=0.5, lr=0.1 -> 0.95") {
        auto p = params;
        sgd_step(p, grads, 0.1);
        for (const double v : p.segment(0)) CHECK(v == doctest::Approx(0.95).epsilon(1e-15));
    }
    SUBCASE("layout mismatch is an error") {
        auto p = params;
        NamParams other(tiny_layout());
        CHECK_THROWS_AS(sgd_step(p, other, 0.1), std::invalid_argument);
    }
}

TEST_CASE("flatten/unflatten round trip and layout bookkeeping") {
    const auto layout = tiny_layout();
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const auto params = oracles::random_params(layout, seed);
        const auto flat = params.flatten();
        CHECK(NamParams::unflatten(layout, flat) == params);
    }

    const auto params = oracles::random_params(layout, 1);
    const auto flat = params.flatten();
    // sum_m (d_m * (H + H + H*C)) + sum_m C
    const std::size_t expected = 2 * (2 * (4 + 4 + 4 * 3)) + 2 * 3;
    CHECK(flat.size() == expected);
    CHECK(layout.total_size() == expected);

    const auto bounds = NamParams::segment_bounds(layout);
    REQUIRE(bounds.size() == 2);
    CHECK(bounds[0].first == 0);
    CHECK(bounds[0].second == bounds[1].first);
    CHECK(bounds[1].second == expected);

    std::vector<double> short_flat(expected - 1);
    CHECK_THROWS_AS(NamParams::unflatten(layout, short_flat), std::invalid_argument);
}

TEST_CASE("empty batch and bad labels are errors") {
    const auto layout = tiny_layout();
    const auto params = oracles::random_params(layout, 9);
    auto samples = oracles::random_samples(layout, 2, layout.classes, 10);
    Hyperparams hyper;
    const std::vector<int> empty;
    CHECK_THROWS_AS(loss_and_grad(params, samples, empty, kBoth, hyper), std::invalid_argument);

    samples[0].label = layout.classes;
    const std::vector<int> batch = {0};
    CHECK_THROWS_AS(loss_and_grad(params, samples, batch, kBoth, hyper), std::invalid_argument);
}

TEST_CASE("full-batch SGD decreases the loss on separable data") {
    // sigma = 0 prototype data; 50 full-batch steps must decrease total loss in
    // at least 45 of them.
    SyntheticSpec spec;
    spec.classes = 3;
    spec.modalities = {{"a", 3}, {"b", 2}};
    spec.noise_std = 0.0;
    spec.clients = 1;
    spec.dirichlet_alpha = 10.0;
    spec.samples_per_client = 60;
    spec.test_samples = 10;
    spec.profile = {{{0, 1}, 1.0}};
    spec.seed = 33;
    const auto split = generate_dataset(spec);

    NamLayout layout;
    layout.modalities = spec.modalities;
    layout.hidden = 8;
    layout.classes = spec.classes;
    Rng rng(44);
    auto params = NamParams::random_init(layout, rng);

    Hyperparams hyper;
    hyper.lr = 0.2;
    const auto& data = split.clients[0].samples;
    std::vector<int> batch(data.size());
    std::iota(batch.begin(), batch.end(), 0);

    int decreases = 0;
    double prev = loss_only(params, data, batch, kBoth, hyper).total;
    for (int step = 0; step < 50; ++step) {
        const auto lg = loss_and_grad(params, data, batch, kBoth, hyper);
        sgd_step(params, lg.grad, hyper.lr);
        const double now = lg.loss.total;  // loss before this step
        (void)now;
        const double current = loss_only(params, data, batch, kBoth, hyper).total;
        if (current < prev) ++decreases;
        prev = current;
    }
    CHECK(decreases >= 45);
    CHECK(params.all_finite());
}

TEST_CASE("softmax is a distribution") {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        Rng rng(seed);
        std::vector<double> logits(5);
        for (auto& v : logits) v = rng.uniform(-30.0, 30.0);
        const auto p = softmax(logits);
        double sum = 0.0;
        for (const double v : p) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fedmmx/rng.hpp"

using namespace fedmmx;

TEST_CASE("identical seeds replay identical streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("derive_seed separates streams") {
    CHECK(derive_seed(1, stream::data_gen) != derive_seed(1, stream::model_init));
    CHECK(derive_seed(1, stream::client_round, 0, 0) != derive_seed(1, stream::client_round, 1, 0));
    CHECK(derive_seed(1, stream::client_round, 0, 0) != derive_seed(1, stream::client_round, 0, 1));
    CHECK(derive_seed(1, stream::client_round, 3, 7) == derive_seed(1, stream::client_round, 3, 7));
}

TEST_CASE("uniform01 stays in [0,1) and has a sane mean") {
    Rng rng(7);
    double sum = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform01();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("below is bounded and roughly uniform") {
    Rng rng(9);
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) {
        const auto v = rng.below(7);
        REQUIRE(v < 7);
        ++counts[v];
    }
    for (const int c : counts) CHECK(std::abs(c - n / 7) < 600);
    CHECK_THROWS_AS(rng.below(0), std::invalid_argument);
}

TEST_CASE("normal moments") {
    Rng rng(11);
    double sum = 0.0, sq = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.02);
    CHECK(std::abs(sq / n - 1.0) < 0.03);
}

TEST_CASE("gamma mean matches shape") {
    Rng rng(13);
    for (const double shape : {0.4, 1.0, 2.5, 10.0}) {
        double sum = 0.0;
        const int n = 20000;
        for (int i = 0; i < n; ++i) sum += rng.gamma(shape);
        CHECK(std::abs(sum / n - shape) < 0.15 * shape + 0.02);
    }
    CHECK_THROWS_AS(rng.gamma(0.0), std::invalid_argument);
}

TEST_CASE("dirichlet draws live on the simplex") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const auto p = rng.dirichlet(0.3, 6);
        double sum = 0.0;
        for (const double v : p) {
            REQUIRE(v >= 0.0);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("shuffle is a permutation") {
    Rng rng(19);
    std::vector<int> v(100);
    std::iota(v.begin(), v.end(), 0);
    auto shuffled = v;
    rng.shuffle(shuffled);
    CHECK(shuffled != v);  // astronomically unlikely to be identity
    auto sorted = shuffled;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == v);
}

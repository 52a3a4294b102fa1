#include <catch2/catch.hpp>

#include <cmath>
#include <vector>

#include "fairfed/fairness.hpp"
#include "fairfed/rng.hpp"

using namespace fairfed;

TEST_CASE("lambda initializes to the group priors") {
    const auto state = init_lambda({0.3, 0.7});
    REQUIRE(state.lambda == std::vector<double>{0.3, 0.7});
    const auto uniform = init_lambda({0.25, 0.25, 0.25, 0.25});
    for (double v : uniform.lambda) REQUIRE(v == 0.25);
}

TEST_CASE("lambda initialization rejects bad priors") {
    REQUIRE_THROWS_AS(init_lambda({0.5, 0.5, 0.1}), ConfigError);
    REQUIRE_THROWS_WITH(init_lambda({0.0, 1.0}), Catch::Contains("group 0"));
    REQUIRE_THROWS_AS(init_lambda({}), ConfigError);
}

TEST_CASE("importance at the initialization fixed point is uniform") {
    const auto w = compute_importance({{0.3, 0.7}}, {0.3, 0.7});
    REQUIRE(w.raw[0] == Approx(1.0).epsilon(1e-15));
    REQUIRE(w.raw[1] == Approx(1.0).epsilon(1e-15));
    REQUIRE(w.normalized[0] == Approx(0.5).epsilon(1e-15));
    REQUIRE(w.normalized[1] == Approx(0.5).epsilon(1e-15));
}

TEST_CASE("importance divides lambda by the mixture and normalizes") {
    const auto w = compute_importance({{0.2, 0.8}}, {0.5, 0.5});
    REQUIRE(w.raw[0] == Approx(0.4).epsilon(1e-15));
    REQUIRE(w.raw[1] == Approx(1.6).epsilon(1e-15));
    REQUIRE(w.normalized[0] == Approx(0.2).epsilon(1e-15));
    REQUIRE(w.normalized[1] == Approx(0.8).epsilon(1e-15));
}

TEST_CASE("normalized importance is invariant to lambda rescaling") {
    Rng rng(51);
    for (int trial = 0; trial < 200; ++trial) {
        const int groups = 2 + static_cast<int>(rng.uniform_int(5));
        std::vector<double> lambda, mixture;
        for (int g = 0; g < groups; ++g) {
            lambda.push_back(0.01 + rng.uniform());
            mixture.push_back(0.01 + rng.uniform());
        }
        const double c = 0.001 + 1000.0 * rng.uniform();
        std::vector<double> scaled = lambda;
        for (auto& v : scaled) v *= c;
        const auto w1 = compute_importance({lambda}, mixture);
        const auto w2 = compute_importance({scaled}, mixture);
        for (int g = 0; g < groups; ++g)
            REQUIRE(w1.normalized[static_cast<std::size_t>(g)] ==
                    Approx(w2.normalized[static_cast<std::size_t>(g)]).margin(1e-12));
    }
}

TEST_CASE("importance rejects non-positive mixture components") {
    REQUIRE_THROWS_WITH(compute_importance({{0.5, 0.5}}, {0.5, 0.0}),
                        Catch::Contains("group 1"));
}

TEST_CASE("mw update with zero rate is the identity") {
    const LambdaState state{{0.25, 0.75}};
    const auto next = mw_update(state, std::vector<double>{1.0, 2.0}, 0.0);
    REQUIRE(next.lambda == state.lambda);
}

TEST_CASE("mw update matches the high-precision scalar oracle") {
    // Spot value: 0.25 * exp(-0.01 * 2.0).
    const auto next = mw_update({{0.25}}, std::vector<double>{2.0}, 0.01);
    REQUIRE(next.lambda[0] == Approx(0.2450497).margin(1e-7));
    const long double oracle = 0.25L * std::exp(-0.01L * 2.0L);
    REQUIRE(std::abs(next.lambda[0] - static_cast<double>(oracle)) <=
            1e-12 * static_cast<double>(oracle));

    Rng rng(53);
    for (int trial = 0; trial < 1000; ++trial) {
        const double lambda = 1e-6 + rng.uniform();
        const double risk = 20.0 * rng.uniform();
        const double eta = (rng.uniform() - 0.5) * 2.0;
        const auto got = mw_update({{lambda}}, std::vector<double>{risk}, eta).lambda[0];
        const long double want = static_cast<long double>(lambda) *
                                 std::exp(-static_cast<long double>(eta) * risk);
        REQUIRE(std::abs(got - static_cast<double>(want)) <=
                1e-12 * std::abs(static_cast<double>(want)));
    }
}

TEST_CASE("a negative rate up-weights the worse group") {
    const auto next = mw_update({{0.5, 0.5}}, std::vector<double>{1.0, 3.0}, -0.003);
    const double ratio = next.lambda[1] / next.lambda[0];
    REQUIRE(ratio == Approx(std::exp(0.006)).epsilon(1e-12));
    REQUIRE(ratio > 1.0);
}

TEST_CASE("lambda stays strictly positive through extreme updates") {
    LambdaState state{{0.5, 0.5}};
    for (int i = 0; i < 10; ++i)
        state = mw_update(state, std::vector<double>{1e6, 0.0}, 1.0);
    REQUIRE(state.lambda[0] > 0.0);
    REQUIRE(state.lambda[0] == lambda_floor);
    REQUIRE(state.lambda[1] == Approx(0.5));
}

TEST_CASE("mw update orders growth factors by loss under a negative rate") {
    Rng rng(59);
    for (int trial = 0; trial < 100; ++trial) {
        const int groups = 2 + static_cast<int>(rng.uniform_int(4));
        std::vector<double> lambda, risks;
        for (int g = 0; g < groups; ++g) {
            lambda.push_back(0.1 + rng.uniform());
            risks.push_back(5.0 * rng.uniform());
        }
        const auto next = mw_update({lambda}, risks, -0.1);
        for (int a = 0; a < groups; ++a)
            for (int b = 0; b < groups; ++b) {
                if (risks[static_cast<std::size_t>(a)] <= risks[static_cast<std::size_t>(b)]) continue;
                const double growth_a = next.lambda[static_cast<std::size_t>(a)] /
                                        lambda[static_cast<std::size_t>(a)];
                const double growth_b = next.lambda[static_cast<std::size_t>(b)] /
                                        lambda[static_cast<std::size_t>(b)];
                REQUIRE(growth_a > growth_b);
            }
    }
}

TEST_CASE("mw update rejects non-finite risks") {
    REQUIRE_THROWS_AS(mw_update({{0.5}}, std::vector<double>{std::nan("")}, 0.1), NumericError);
}

TEST_CASE("per-sample weight normalization follows the group sums") {
    const auto w = normalize_weights({1.0, 2.0, 3.0}, {0, 0, 1});
    REQUIRE(w[0] == Approx(0.5).epsilon(1e-15));
    REQUIRE(w[1] == Approx(0.5).epsilon(1e-15));
}

TEST_CASE("equal sample weights normalize to group proportions") {
    const auto w = normalize_weights({2.0, 2.0, 2.0, 2.0}, {0, 1, 1, 1});
    REQUIRE(w[0] == Approx(0.25).epsilon(1e-15));
    REQUIRE(w[1] == Approx(0.75).epsilon(1e-15));
    const auto single = normalize_weights({3.0, 1.0}, {0, 0});
    REQUIRE(single == std::vector<double>{1.0});
}

TEST_CASE("normalized weights sum to one and respect permutations") {
    Rng rng(61);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_int(20));
        const int groups = 1 + static_cast<int>(rng.uniform_int(4));
        std::vector<double> weights;
        std::vector<int> ids;
        for (int i = 0; i < n; ++i) {
            weights.push_back(rng.uniform() + 1e-3);
            ids.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(groups))));
        }
        ids[0] = groups - 1; // keep both endpoint groups inhabited
        ids[1] = 0;
        const auto w = normalize_weights(weights, ids);
        double sum = 0.0;
        for (double v : w) sum += v;
        REQUIRE(std::abs(sum - 1.0) <= 1e-12);

        // Swapping two group identities permutes the output.
        std::vector<int> swapped = ids;
        for (auto& g : swapped) g = g == 0 ? groups - 1 : (g == groups - 1 ? 0 : g);
        const auto w2 = normalize_weights(weights, swapped);
        REQUIRE(w2[static_cast<std::size_t>(groups - 1)] == Approx(w[0]).margin(1e-15));
        REQUIRE(w2[0] == Approx(w[static_cast<std::size_t>(groups - 1)]).margin(1e-15));
    }
}

TEST_CASE("all-zero weights cannot be normalized") {
    REQUIRE_THROWS_AS(normalize_weights({0.0, 0.0}, {0, 1}), ContractError);
}

TEST_CASE("threshold arithmetic follows btpr - eta (btpr - wtpr)") {
    const auto v = evaluate_threshold(0.92, 0.64, 0.5);
    REQUIRE(v.threshold == Approx(0.78).epsilon(1e-15));
    REQUIRE(v.satisfied);

    REQUIRE(evaluate_threshold(0.9, 0.5, 0.0).threshold == 0.9);
    REQUIRE(evaluate_threshold(0.9, 0.5, 1.0).threshold == Approx(0.5).epsilon(1e-15));
}

TEST_CASE("threshold recomputation from the verdict is bit-exact") {
    Rng rng(67);
    for (int trial = 0; trial < 500; ++trial) {
        const double wtpr = rng.uniform();
        const double btpr = wtpr + (1.0 - wtpr) * rng.uniform();
        const double eta = rng.uniform();
        const auto v = evaluate_threshold(btpr, wtpr, eta);
        REQUIRE(v.threshold == v.btpr - v.eta_mu * (v.btpr - v.wtpr));
        REQUIRE(v.satisfied == (v.btpr >= v.threshold));
    }
}

TEST_CASE("threshold evaluation rejects inverted inputs") {
    REQUIRE_THROWS_AS(evaluate_threshold(0.5, 0.9, 0.5), ContractError);
    REQUIRE_THROWS_AS(evaluate_threshold(0.9, 0.5, 1.5), ContractError);
}

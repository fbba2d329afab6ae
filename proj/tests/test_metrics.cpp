#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "hyperpoison/metrics.hpp"
#include "test_support.hpp"

using namespace hyperpoison;

namespace {

FeatureSet fs(std::vector<std::size_t> idx, std::size_t d) { return {std::move(idx), d}; }

} // namespace

TEST(TestError, PerfectZeroWeightsAndHandCount) {
    const auto spec = ModelSpec::logistic(1);
    Dataset d;
    d.X = Matrix{{-2.0}, {-1.0}, {1.0}, {2.0}};
    d.y = {0, 0, 1, 1};
    EXPECT_EQ(test_error(spec, ParamVector{1.0, 0.0}, d), 0.0);
    EXPECT_EQ(test_error(spec, ParamVector{0.0, 0.0}, d), 0.5);
    d.y = {0, 1, 1, 1}; // row 1 sits on the negative side
    EXPECT_EQ(test_error(spec, ParamVector{1.0, 0.0}, d), 0.25);
    Dataset empty;
    empty.X = Matrix(0, 1);
    EXPECT_THROW(test_error(spec, ParamVector{1.0, 0.0}, empty), std::invalid_argument);
}

TEST(TestError, InvariantUnderRowPermutation) {
    Rng rng(1);
    const auto spec = ModelSpec::mlp({3, 4, 1});
    const auto d = hyperpoison::testing::random_dataset(rng, 30, 3);
    const auto w = init_params(spec, InitScheme::Xavier, &rng);
    std::vector<std::size_t> perm(30);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    Dataset p = d;
    for (std::size_t r = 0; r < 30; ++r) {
        for (std::size_t k = 0; k < 3; ++k) p.X(r, k) = d.X(perm[r], k);
        p.y[r] = d.y[perm[r]];
    }
    EXPECT_EQ(test_error(spec, w, d), test_error(spec, w, p));
}

TEST(TopK, MagnitudeOrderAndTies) {
    EXPECT_EQ(top_k_features(Vector{0.1, -5, 3}, 2).indices, (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(top_k_features(Vector{1, 1, 1, 1}, 2).indices, (std::vector<std::size_t>{0, 1}));
    EXPECT_THROW(top_k_features(Vector{1, 2}, 2), std::invalid_argument);
    EXPECT_THROW(top_k_features(Vector{1, 2}, 0), std::invalid_argument);
}

TEST(TopK, MatchesFullSortOracleAndScaleInvariant) {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        Vector w(40);
        for (double& x : w) x = std::round(rng.uniform(-5, 5)); // coarse values force ties
        std::vector<std::size_t> order(40);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return std::abs(w[a]) > std::abs(w[b]); });
        std::vector<std::size_t> ref(order.begin(), order.begin() + 7);
        std::sort(ref.begin(), ref.end());
        EXPECT_EQ(top_k_features(w, 7).indices, ref);
        Vector scaled = w;
        for (double& x : scaled) x *= 3.5;
        EXPECT_EQ(top_k_features(scaled, 7).indices, ref);
    }
}

TEST(TopK, LogisticUsesWeightsAndSkipsBias) {
    const auto spec = ModelSpec::logistic(3);
    EXPECT_EQ(top_k_features(spec, ParamVector{0.1, -2.0, 0.5, 100.0}, 1).indices, (std::vector<std::size_t>{1}));
}

TEST(TopK, MlpRanksInputsByOutgoingWeightNorm) {
    const auto spec = ModelSpec::mlp({3, 2, 1});
    // W0 rows: [1, 0, 3], [1, 4, 0]  -> column norms sqrt2, 4, 3
    ParamVector w{1, 0, 3, 1, 4, 0, 0, 0, 9, 9, 0};
    const auto imp = feature_importance(spec, w);
    EXPECT_NEAR(imp[0], std::sqrt(2.0), 1e-15);
    EXPECT_EQ(imp[1], 4.0);
    EXPECT_EQ(top_k_features(spec, w, 2).indices, (std::vector<std::size_t>{1, 2}));
}

TEST(Kuncheva, IdentityHandValueAndChance) {
    const auto a = fs({0, 1, 2}, 10);
    EXPECT_EQ(kuncheva_index(a, a), 1.0);
    EXPECT_NEAR(kuncheva_index(a, fs({1, 2, 7}, 10)), 11.0 / 21.0, 1e-12);
    EXPECT_EQ(kuncheva_index(fs({0, 1, 2, 3}, 8), fs({2, 3, 4, 5}, 8)), 0.0);
}

TEST(Kuncheva, Errors) {
    EXPECT_THROW(kuncheva_index(fs({0, 1}, 10), fs({0}, 10)), std::invalid_argument);
    EXPECT_THROW(kuncheva_index(fs({0}, 10), fs({0}, 9)), std::invalid_argument);
    EXPECT_THROW(kuncheva_index(fs({0, 1}, 2), fs({0, 1}, 2)), std::invalid_argument);
}

TEST(Kuncheva, SymmetricAndSelfOneOnRandomSets) {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t d = 5 + rng.below(40);
        const std::size_t k = 1 + rng.below(d - 1);
        auto ia = rng.sample_without_replacement(d, k);
        auto ib = rng.sample_without_replacement(d, k);
        std::sort(ia.begin(), ia.end());
        std::sort(ib.begin(), ib.end());
        const auto a = fs(ia, d);
        const auto b = fs(ib, d);
        EXPECT_EQ(kuncheva_index(a, b), kuncheva_index(b, a));
        EXPECT_EQ(kuncheva_index(a, a), 1.0);
    }
}

TEST(WeightNorms, ExamplesAndPartitionIdentity) {
    const auto lr = ModelSpec::logistic(1);
    const auto n0 = weight_norms(lr, ParamVector{3, 4});
    EXPECT_EQ(n0.per_layer[0], 12.5);
    EXPECT_EQ(n0.total, 12.5);
    const auto mlp = ModelSpec::mlp({4, 3, 2, 1});
    EXPECT_EQ(weight_norms(mlp, ParamVector(mlp.param_count(), 0.0)).total, 0.0);
    Rng rng(4);
    const auto w = init_params(mlp, InitScheme::Xavier, &rng);
    const auto n = weight_norms(mlp, w);
    double acc = 0;
    const auto layout = param_layout(mlp);
    for (std::size_t l = 0; l < layout.size(); ++l) acc += n.per_layer[l] * static_cast<double>(layout[l].end() - layout[l].weight_offset);
    EXPECT_NEAR(acc, n.total * static_cast<double>(w.size()), 1e-12);
}

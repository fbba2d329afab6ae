#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "hyperpoison/attack.hpp"
#include "hyperpoison/data.hpp"
#include "test_support.hpp"
#include "toy_problems.hpp"

using namespace hyperpoison;
using hyperpoison::testing::random_dataset;
using hyperpoison::testing::ScalarQuadratic;

namespace {

AttackConfig small_config() {
    AttackConfig c;
    c.T_mul = 4;
    c.alpha = 0.3;
    c.T = 20;
    c.eta = 0.5;
    c.seed = 11;
    return c;
}

} // namespace

TEST(InitPoison, EmptyBatchLeavesDataUntouched) {
    Rng rng(1);
    const auto d = random_dataset(rng, 10, 3);
    Dataset copy = d;
    const auto p = init_poison(copy, 0, rng);
    EXPECT_EQ(p.size(), 0u);
    apply_poison(copy, p);
    EXPECT_EQ(copy.X, d.X);
    EXPECT_EQ(copy.y, d.y);
}

TEST(InitPoison, ClonesRowsAndFlipsLabels) {
    Rng rng(2);
    const auto d = random_dataset(rng, 12, 4);
    const auto p = init_poison(d, 5, rng);
    ASSERT_EQ(p.size(), 5u);
    for (std::size_t r = 0; r < 5; ++r) {
        const auto i = p.indices[r];
        EXPECT_EQ(p.yp[r], 1.0 - d.y[i]);
        for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(p.Xp(r, k), d.X(i, k));
    }
}

TEST(InitPoison, ProjectsIntoFeasibleDomain) {
    Rng rng(3);
    auto d = random_dataset(rng, 6, 2, -2.0, 2.0);
    d.bounds = Box::scalar(-1.0, 1.0);
    const auto p = init_poison(d, 6, rng);
    EXPECT_TRUE(p.domain.contains(p.Xp.flat()));
}

TEST(InitPoison, AllSubsetsOccurWithoutDuplicates) {
    Rng rng(4);
    const auto d = random_dataset(rng, 10, 1);
    std::set<std::vector<std::size_t>> seen;
    for (int trial = 0; trial < 1000; ++trial) {
        auto p = init_poison(d, 3, rng);
        auto idx = p.indices;
        std::sort(idx.begin(), idx.end());
        ASSERT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
        seen.insert(idx);
    }
    EXPECT_EQ(seen.size(), 120u); // C(10, 3)
}

TEST(InitPoison, TooManyPointsThrows) {
    Rng rng(5);
    const auto d = random_dataset(rng, 4, 2);
    EXPECT_THROW(init_poison(d, 5, rng), std::invalid_argument);
    const std::vector<std::size_t> used{0, 1};
    EXPECT_THROW(init_poison(d, 3, rng, used), std::invalid_argument);
    const auto p = init_poison(d, 2, rng, used);
    for (auto i : p.indices) EXPECT_GE(i, 2u);
}

TEST(Project, ClipsToBoundsAndIsIdempotent) {
    const Box phi = Box::scalar(-std::numeric_limits<double>::infinity(), std::log(5e3));
    const Vector lam{10.0, -40.0, 1.0};
    const Vector once = project(lam, phi);
    EXPECT_EQ(once[0], std::log(5e3));
    EXPECT_EQ(once[1], -40.0);
    EXPECT_EQ(project(once, phi), once);
    const Matrix x{{1.4, -0.2}, {0.3, 0.7}};
    EXPECT_EQ(project(x, Box::scalar(0, 1)), (Matrix{{1.0, 0.0}, {0.3, 0.7}}));
}

TEST(AttackStep, ScalarToyPlugIn) {
    ScalarQuadratic p(2.0, false);
    AttackConfig c;
    c.alpha = 0.4;
    c.eta = 0.5;
    c.T = 1;
    c.normalize_xp_grad = false;
    attack_step(p, c, Box::scalar(-10, 10), ParamVector{0.0});
    EXPECT_NEAR(p.poison()(0, 0), 2.2, 1e-12);
}

TEST(AttackStep, LandsOnBoundaryWhenLeavingDomain) {
    ScalarQuadratic p(2.0, false);
    AttackConfig c;
    c.alpha = 1.0;
    c.eta = 0.5;
    c.T = 1;
    attack_step(p, c, Box::scalar(-2.5, 2.5), ParamVector{0.0});
    EXPECT_EQ(p.poison()(0, 0), 2.5);
}

TEST(AttackStep, ZeroHypergradientIsAFixedPoint) {
    ScalarQuadratic p(0.0, true, 0.7);
    AttackConfig c;
    c.T = 5;
    c.eta = 0.5;
    const auto diag = attack_step(p, c, Box::scalar(-10, 10), ParamVector{0.0});
    EXPECT_TRUE(diag.xp_skipped);
    EXPECT_EQ(p.poison()(0, 0), 0.0);
    EXPECT_EQ(p.lambda()[0], 0.7);
}

TEST(AttackStep, LambdaSignStepDescends) {
    // dA/dlambda < 0 at lambda = ln 0.5 for the toy, so lambda moves up by alpha
    ScalarQuadratic p(1.0, true, std::log(0.5));
    AttackConfig c;
    c.alpha = 0.25;
    c.eta = 1.0;
    c.T = 2;
    c.lambda_hi = 10.0;
    attack_step(p, c, Box::scalar(-10, 10), ParamVector{0.0}, StepMode::LambdaOnly);
    EXPECT_NEAR(p.lambda()[0], std::log(0.5) + 0.25, 1e-15);
    EXPECT_EQ(p.poison()(0, 0), 1.0);
}

TEST(AttackStep, NormalizedPoisonStepHasLengthAlpha) {
    Rng rng(6);
    const auto spec = ModelSpec::logistic(3);
    auto train = random_dataset(rng, 20, 3, 0.2, 0.8);
    auto val = random_dataset(rng, 10, 3);
    ClassifierProblem prob(spec, train, {1, 2}, RegSpec::l2(-1.0), val);
    const Matrix before = prob.poison();
    AttackConfig c = small_config();
    c.alpha = 0.05;
    attack_step(prob, c, Box::scalar(0, 1), ParamVector(spec.param_count(), 0.0), StepMode::PoisonOnly);
    Matrix diff = prob.poison();
    axpy(-1.0, before.flat(), diff.flat());
    EXPECT_NEAR(norm(diff.flat(), NormKind::L2), 0.05, 1e-12);
    EXPECT_EQ(prob.lambda()[0], -1.0);
}

TEST(RunAttack, ZeroScheduleIsCleanBaseline) {
    Rng rng(7);
    const auto spec = ModelSpec::logistic(3);
    const auto train = random_dataset(rng, 20, 3);
    const auto val = random_dataset(rng, 10, 3);
    auto c = small_config();
    c.learn_lambda = false;
    const auto res = run_attack(train, val, spec, RegSpec::none(), c);
    ASSERT_EQ(res.fractions.size(), 1u);
    EXPECT_EQ(res.poisoned.X, train.X);
    EXPECT_EQ(res.poisoned.y, train.y);
}

TEST(RunAttack, CumulativeBookkeepingAndInvariants) {
    Rng rng(8);
    const auto spec = ModelSpec::logistic(3);
    const auto train = random_dataset(rng, 100, 3);
    const auto val = random_dataset(rng, 20, 3);
    auto c = small_config();
    c.fraction_schedule = {0.0, 0.1, 0.2};
    c.lambda_hi = 3.0;
    std::size_t events = 0;
    const auto res = run_attack(train, val, spec, RegSpec::l2(0.0), c, [&](const HyperiterationEvent& e) {
        ++events;
        EXPECT_TRUE(train.bounds.contains(e.poison.flat()));
        EXPECT_LE(e.lambda[0], 3.0);
    });
    EXPECT_EQ(events, 2 * c.T_mul);
    std::set<std::size_t> poisoned_rows;
    for (const auto& fr : res.fractions) {
        for (const auto& b : fr.batches) {
            poisoned_rows.insert(b.indices.begin(), b.indices.end());
            for (std::size_t r = 0; r < b.size(); ++r) {
                EXPECT_EQ(res.poisoned.y[b.indices[r]], 1.0 - train.y[b.indices[r]]);
            }
        }
    }
    EXPECT_EQ(poisoned_rows.size(), 20u);
    EXPECT_EQ(res.poisoned.n(), train.n());
    for (std::size_t i = 0; i < train.n(); ++i) {
        if (poisoned_rows.count(i)) continue;
        for (std::size_t k = 0; k < 3; ++k) ASSERT_EQ(res.poisoned.X(i, k), train.X(i, k));
        ASSERT_EQ(res.poisoned.y[i], train.y[i]);
    }
    const Dataset at1 = res.dataset_at(train, 1);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < train.n(); ++i) changed += at1.y[i] != train.y[i];
    EXPECT_EQ(changed, 10u);
}

TEST(RunAttack, DeterministicForFixedSeed) {
    Rng rng(9);
    const auto spec = ModelSpec::mlp({3, 4, 1});
    const auto train = random_dataset(rng, 30, 3);
    const auto val = random_dataset(rng, 10, 3);
    auto c = small_config();
    c.fraction_schedule = {0.0, 0.1};
    const auto a = run_attack(train, val, spec, RegSpec::l2(0.0), c);
    const auto b = run_attack(train, val, spec, RegSpec::l2(0.0), c);
    EXPECT_EQ(a.poisoned.X, b.poisoned.X);
    EXPECT_EQ(a.fractions.back().lambda, b.fractions.back().lambda);
    EXPECT_EQ(a.fractions.back().val_loss, b.fractions.back().val_loss);
}

TEST(RunAttack, RaisesValidationLossOnLogistic) {
    Rng rng(10);
    Rng task_rng(10);
    const auto task = gen_synthetic_gaussians(task_rng);
    const auto spec = ModelSpec::logistic(2);
    auto c = small_config();
    c.T_mul = 15;
    c.eta = 0.2;
    c.T = 60;
    c.fraction_schedule = {0.0, 0.1};
    c.learn_lambda = false;
    const auto res = run_attack(task.train, task.val, spec, RegSpec::none(), c);
    const auto& vl = res.fractions.back().val_loss;
    EXPECT_GT(vl.back(), vl.front());
}

TEST(RunAttack, RejectsBadSchedules) {
    Rng rng(12);
    const auto spec = ModelSpec::logistic(2);
    const auto train = random_dataset(rng, 10, 2);
    auto c = small_config();
    c.fraction_schedule = {0.1};
    EXPECT_THROW(run_attack(train, train, spec, RegSpec::none(), c), std::invalid_argument);
    c.fraction_schedule = {0.0, 0.3, 0.2};
    EXPECT_THROW(run_attack(train, train, spec, RegSpec::none(), c), std::invalid_argument);
    c.fraction_schedule = {0.0, 0.5};
    c.poison_batch = 3;
    EXPECT_THROW(run_attack(train, train, spec, RegSpec::none(), c), std::invalid_argument);
    c.poison_batch = 0;
    c.alpha = 1.5;
    EXPECT_THROW(run_attack(train, train, spec, RegSpec::none(), c), std::invalid_argument);
}

TEST(Hyperlearn, RequiresActiveRegularizer) {
    Rng rng(13);
    const auto train = random_dataset(rng, 10, 2);
    EXPECT_THROW(run_hyperlearn(train, train, ModelSpec::logistic(2), RegSpec::none(), small_config()),
                 std::invalid_argument);
}

TEST(Hyperlearn, ValidationLossDoesNotIncreaseOnCleanLogistic) {
    Rng task_rng(14);
    const auto task = gen_synthetic_gaussians(task_rng);
    auto c = small_config();
    c.T_mul = 20;
    c.T = 100;
    c.eta = 0.2;
    c.alpha = 0.2;
    c.lambda_init = 2.0;
    const auto h = run_hyperlearn(task.train, task.val, ModelSpec::logistic(2), RegSpec::l2(0.0), c);
    EXPECT_EQ(h.val_loss.size(), c.T_mul + 1);
    EXPECT_LE(h.val_loss.back(), h.val_loss.front());
    EXPECT_EQ(h.lambda_trace.size(), c.T_mul + 1);
}

TEST(GridSearch, SingleElementAndTies) {
    const std::vector<double> one{1.5};
    EXPECT_EQ(grid_search(one, [](double) { return 3.0; }).best, 1.5);
    const std::vector<double> flat{2.0, -1.0, 0.5};
    EXPECT_EQ(grid_search(flat, [](double) { return 0.0; }).best, -1.0);
    EXPECT_THROW(grid_search(std::vector<double>{}, [](double) { return 0.0; }), std::invalid_argument);
}

TEST(GridSearch, QuadraticToyMinimumAtZero) {
    const auto grid = linear_grid(-3.0, 3.0, 0.01);
    const auto res = grid_search(grid, [](double l) { return 0.5 * (1 - std::exp(l)) * (1 - std::exp(l)); });
    EXPECT_NEAR(res.best, 0.0, 1e-9);
}

TEST(GridSearch, AgreesWithHyperlearningOnConvexLogistic) {
    Rng task_rng(15);
    const auto task = gen_synthetic_gaussians(task_rng);
    const auto spec = ModelSpec::logistic(2);
    // poison a few labels so the optimum sits in the grid interior
    Dataset train = task.train;
    for (std::size_t i : {0u, 1u, 2u, 20u, 21u}) train.y[i] = 1.0 - train.y[i];
    const double step = 0.5;
    const auto grid = linear_grid(-8.0, 6.0, step);
    const TrainSettings ts{0.2, 300, 0};
    const auto gs = grid_search_lambda(train, task.val, spec, RegSpec::l2(0.0), grid, ts);
    ASSERT_EQ(gs.table.size(), grid.size());

    AttackConfig c;
    c.T_mul = 200;
    c.T = 300;
    c.eta = 0.2;
    c.alpha = 0.05;
    c.lambda_hi = 6.0;
    c.lambda_lo = -8.0;
    c.lambda_init = gs.best > 0 ? gs.best - 1.0 : gs.best + 1.0;
    const auto h = run_hyperlearn(train, task.val, spec, RegSpec::l2(0.0), c);
    // a flat validation curve can make the grid optimum sit at a bound
    const double lhs = std::abs(h.lambda[0] - gs.best);
    EXPECT_LE(lhs, step + 2 * c.alpha) << "grid " << gs.best << " rmd " << h.lambda[0];
}

TEST(AppendClone, AddsFlippedRow) {
    Rng rng(16);
    Dataset train = random_dataset(rng, 4, 2);
    const Dataset val = random_dataset(rng, 3, 2);
    const auto p = append_flipped_clone(train, val, 1);
    ASSERT_EQ(train.n(), 5u);
    EXPECT_EQ(p.indices[0], 4u);
    EXPECT_EQ(train.y[4], 1.0 - val.y[1]);
    EXPECT_EQ(train.X(4, 0), val.X(1, 0));
}

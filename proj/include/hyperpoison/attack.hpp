#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "hyperpoison/hypergrad.hpp"
#include "hyperpoison/model.hpp"
#include "hyperpoison/numerics.hpp"
#include "hyperpoison/problem.hpp"

namespace hyperpoison {

/// A batch of poisoning points living at rows `indices` of a training set.
struct PoisonSet {
    Matrix Xp;
    Vector yp;
    std::vector<std::size_t> indices;
    Box domain;

    [[nodiscard]] std::size_t size() const { return indices.size(); }
};

inline Matrix project(const Matrix& x, const Box& domain) {
    Matrix out = x;
    clip_inplace(out.flat(), domain);
    return out;
}

inline Vector project(std::span<const double> x, const Box& domain) { return clip_elementwise(x, domain); }

/// Clones n_p distinct rows (uniformly, skipping `excluded`), flips their labels
/// and projects the features into the training set's feasible box.
inline PoisonSet init_poison(const Dataset& train, std::size_t n_p, Rng& rng,
                             std::span<const std::size_t> excluded = {}) {
    std::vector<char> taken(train.n(), 0);
    for (auto i : excluded) {
        if (i >= train.n()) throw std::out_of_range("init_poison: excluded row out of range");
        taken[i] = 1;
    }
    std::vector<std::size_t> pool;
    pool.reserve(train.n());
    for (std::size_t i = 0; i < train.n(); ++i) {
        if (!taken[i]) pool.push_back(i);
    }
    if (n_p > pool.size()) {
        throw std::invalid_argument("init_poison: asked for " + std::to_string(n_p) + " points but only " +
                                    std::to_string(pool.size()) + " clean rows remain");
    }
    PoisonSet p;
    p.domain = train.bounds;
    for (auto k : rng.sample_without_replacement(pool.size(), n_p)) p.indices.push_back(pool[k]);
    p.Xp = Matrix(n_p, train.m());
    p.yp.resize(n_p);
    for (std::size_t r = 0; r < n_p; ++r) {
        const auto src = train.X.row(p.indices[r]);
        std::copy(src.begin(), src.end(), p.Xp.row(r).begin());
        p.yp[r] = 1.0 - train.y[p.indices[r]];
    }
    clip_inplace(p.Xp.flat(), p.domain);
    return p;
}

/// Writes the poison rows and labels into `train`.
inline void apply_poison(Dataset& train, const PoisonSet& p) {
    for (std::size_t r = 0; r < p.size(); ++r) {
        const auto src = p.Xp.row(r);
        std::copy(src.begin(), src.end(), train.X.row(p.indices[r]).begin());
        train.y[p.indices[r]] = p.yp[r];
    }
}

/// Appends a copy of `source` row `row` with its label flipped; returns a
/// single-point PoisonSet pointing at the new row.
inline PoisonSet append_flipped_clone(Dataset& train, const Dataset& source, std::size_t row) {
    if (row >= source.n()) throw std::out_of_range("append_flipped_clone: row out of range");
    if (source.m() != train.m()) throw ShapeError("append_flipped_clone: width mismatch");
    Matrix X(train.n() + 1, train.m());
    std::copy(train.X.flat().begin(), train.X.flat().end(), X.flat().begin());
    const auto src = source.X.row(row);
    std::copy(src.begin(), src.end(), X.row(train.n()).begin());
    train.X = std::move(X);
    train.y.push_back(1.0 - source.y[row]);

    PoisonSet p;
    p.domain = train.bounds;
    p.indices = {train.n() - 1};
    p.Xp = Matrix(1, train.m(), Vector(src.begin(), src.end()));
    clip_inplace(p.Xp.flat(), p.domain);
    p.yp = {train.y.back()};
    apply_poison(train, p);
    return p;
}

struct AttackConfig {
    std::size_t T_mul = 140;
    double alpha = 0.3;
    std::size_t T = 140;
    double eta = 0.1;
    double lambda_lo = -std::numeric_limits<double>::infinity();
    double lambda_hi = std::log(5e3);
    double lambda_init = 0.0;
    std::size_t poison_batch = 0; ///< 0: one batch per fraction increment
    std::vector<double> fraction_schedule{0.0};
    bool normalize_xp_grad = true;
    bool lambda_sign_update = true;
    bool learn_lambda = true;
    std::uint64_t seed = 0;

    [[nodiscard]] Box lambda_domain() const { return Box::scalar(lambda_lo, lambda_hi); }

    void validate() const {
        if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("attack.alpha must lie in (0, 1]");
        if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("attack.eta must lie in (0, 1]");
        if (T < 1) throw std::invalid_argument("attack.T must be at least 1");
        if (!(lambda_lo <= lambda_hi)) throw std::invalid_argument("attack.lambda bounds are inverted");
        if (!(lambda_init >= lambda_lo && lambda_init <= lambda_hi)) {
            throw std::invalid_argument("attack.lambda_init lies outside the lambda bounds");
        }
        if (fraction_schedule.empty() || fraction_schedule.front() != 0.0) {
            throw std::invalid_argument("attack.fractions must start at 0");
        }
        for (std::size_t i = 0; i < fraction_schedule.size(); ++i) {
            const double f = fraction_schedule[i];
            if (!(f >= 0.0 && f < 1.0)) throw std::invalid_argument("attack.fractions must lie in [0, 1)");
            if (i > 0 && f < fraction_schedule[i - 1]) throw std::invalid_argument("attack.fractions must be non-decreasing");
        }
    }

    /// Cumulative poison counts per fraction for a training set of n rows.
    [[nodiscard]] std::vector<std::size_t> poison_counts(std::size_t n) const {
        std::vector<std::size_t> out;
        for (double f : fraction_schedule) out.push_back(static_cast<std::size_t>(std::llround(f * static_cast<double>(n))));
        for (std::size_t i = 1; i < out.size(); ++i) {
            const std::size_t inc = out[i] - out[i - 1];
            if (poison_batch > 0 && inc % poison_batch != 0 && inc > poison_batch) {
                throw std::invalid_argument("attack.poison_batch (" + std::to_string(poison_batch) +
                                            ") does not divide the increment of " + std::to_string(inc) + " points");
            }
        }
        if (!out.empty() && out.back() > n) throw std::invalid_argument("attack.fractions exceed the training set");
        return out;
    }
};

/// Inner starting point: zeros for logistic regression, Glorot-uniform for MLPs.
inline ParamVector initial_params(const ModelSpec& spec, Rng& rng) {
    if (spec.kind == ModelKind::LogisticRegression) return init_params(spec, InitScheme::Zeros);
    return init_params(spec, InitScheme::Xavier, &rng);
}

enum class StepMode { Joint, PoisonOnly, LambdaOnly };

struct StepDiagnostics {
    double outer_value = 0.0; ///< A(w(T)) before the update
    double xp_grad_norm = 0.0;
    double lambda_grad_norm = 0.0;
    bool xp_skipped = false;
};

/// One projected hypergradient ascent (poison) / descent (lambda) update from a
/// single reverse-mode pass.
template <BilevelProblem P>
StepDiagnostics attack_step(P& problem, const AttackConfig& cfg, const Box& xp_domain, ParamVector w0,
                            StepMode mode = StepMode::Joint) {
    const auto res = rmd_hypergrad(problem, std::move(w0), cfg.eta, cfg.T);
    const Hypergrad& hg = res.grad;
    if (!all_finite(hg.d_poison.flat()) || !all_finite(hg.d_lambda)) {
        throw NumericalError("attack_step: non-finite hypergradient");
    }
    StepDiagnostics diag;
    diag.outer_value = res.outer_value;
    diag.xp_grad_norm = norm(hg.d_poison.flat(), NormKind::L2);
    diag.lambda_grad_norm = norm(hg.d_lambda, NormKind::L2);

    if (mode != StepMode::LambdaOnly && hg.d_poison.size() > 0) {
        Matrix xp = problem.poison();
        double scale = cfg.alpha;
        if (cfg.normalize_xp_grad) {
            if (diag.xp_grad_norm < 1e-12) {
                scale = 0.0;
                diag.xp_skipped = true;
            } else {
                scale /= diag.xp_grad_norm;
            }
        }
        if (scale != 0.0) {
            axpy(scale, hg.d_poison.flat(), xp.flat());
            clip_inplace(xp.flat(), xp_domain);
            problem.set_poison(xp);
        }
    }
    if (mode != StepMode::PoisonOnly && !hg.d_lambda.empty()) {
        Vector lam = problem.lambda();
        for (std::size_t g = 0; g < lam.size(); ++g) {
            double d = hg.d_lambda[g];
            if (cfg.lambda_sign_update) d = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            lam[g] -= cfg.alpha * d;
        }
        clip_inplace(lam, cfg.lambda_domain());
        problem.set_lambda(lam);
    }
    return diag;
}

/// Observer hook fired after every hyperiteration.
struct HyperiterationEvent {
    std::size_t fraction_index = 0;
    std::size_t batch_index = 0;
    std::size_t iteration = 0;
    const Matrix& poison;
    const Vector& lambda;
    const StepDiagnostics& diag;
};
using HyperiterationObserver = std::function<void(const HyperiterationEvent&)>;

struct BatchTrace {
    std::vector<double> val_loss; ///< T_mul values before each update, then one after the last
    std::vector<Vector> lambda_trace;
};

/// T_mul hyperiterations on `problem`, each from a fresh inner starting point
/// drawn from `init_rng`.
template <BilevelProblem P>
BatchTrace optimize_batch(P& problem, const ModelSpec& spec, const AttackConfig& cfg, const Box& xp_domain,
                          Rng& init_rng, StepMode mode, const HyperiterationObserver& observer = {},
                          std::size_t fraction_index = 0, std::size_t batch_index = 0) {
    BatchTrace trace;
    trace.lambda_trace.push_back(problem.lambda());
    for (std::size_t it = 0; it < cfg.T_mul; ++it) {
        const auto diag = attack_step(problem, cfg, xp_domain, initial_params(spec, init_rng), mode);
        trace.val_loss.push_back(diag.outer_value);
        trace.lambda_trace.push_back(problem.lambda());
        if (observer) {
            const Matrix xp = problem.poison();
            const Vector lam = problem.lambda();
            observer(HyperiterationEvent{fraction_index, batch_index, it, xp, lam, diag});
        }
    }
    const ParamVector wT = train_final(problem, initial_params(spec, init_rng), cfg.eta, cfg.T);
    trace.val_loss.push_back(problem.outer_loss(wT));
    return trace;
}

inline RegSpec reg_with_lambda(const ModelSpec& spec, RegSpec reg, double lambda) {
    reg.lambdas.assign(reg.group_count(spec), lambda);
    return reg;
}

struct HyperlearnResult {
    Vector lambda;
    std::vector<double> val_loss;
    std::vector<Vector> lambda_trace;
};

/// Projected hypergradient descent on the regularization strengths only, with
/// the training set held fixed.
inline HyperlearnResult run_hyperlearn(const Dataset& train, const Dataset& val, const ModelSpec& spec,
                                       const RegSpec& reg_template, const AttackConfig& cfg) {
    if (!reg_template.active()) throw std::invalid_argument("run_hyperlearn: needs an active regularizer");
    cfg.validate();
    ClassifierProblem problem(spec, train, {}, reg_with_lambda(spec, reg_template, cfg.lambda_init), val);
    Rng init_rng = Rng(cfg.seed).derive("hyperlearn-w0");
    auto trace = optimize_batch(problem, spec, cfg, train.bounds, init_rng, StepMode::LambdaOnly);
    return {problem.lambda(), std::move(trace.val_loss), std::move(trace.lambda_trace)};
}

struct FractionResult {
    double fraction = 0.0;
    std::size_t poison_count = 0; ///< cumulative
    std::vector<PoisonSet> batches; ///< batches introduced at this fraction
    Vector lambda;
    std::vector<double> val_loss;
    double seconds = 0.0;
};

struct AttackResult {
    std::vector<FractionResult> fractions;
    Dataset poisoned;

    /// The training set as it stood when fraction k finished.
    [[nodiscard]] Dataset dataset_at(const Dataset& clean, std::size_t k) const {
        Dataset d = clean;
        for (std::size_t j = 0; j <= k && j < fractions.size(); ++j) {
            for (const auto& b : fractions[j].batches) apply_poison(d, b);
        }
        return d;
    }
};

/// Cumulative poisoning over the fraction schedule. Each batch gets T_mul
/// hyperiterations, is then frozen, and lambda restarts from lambda_init.
inline AttackResult run_attack(const Dataset& clean, const Dataset& val, const ModelSpec& spec,
                               const RegSpec& reg_template, const AttackConfig& cfg,
                               const HyperiterationObserver& observer = {}) {
    cfg.validate();
    const auto counts = cfg.poison_counts(clean.n());
    const bool learn = cfg.learn_lambda && reg_template.active();
    const StepMode mode = learn ? StepMode::Joint : StepMode::PoisonOnly;
    const Rng master(cfg.seed);
    Rng pick_rng = master.derive("poison-rows");
    Rng init_rng = master.derive("attack-w0");

    AttackResult result;
    result.poisoned = clean;
    std::vector<std::size_t> used;

    for (std::size_t k = 0; k < counts.size(); ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        FractionResult fr;
        fr.fraction = cfg.fraction_schedule[k];
        fr.poison_count = counts[k];
        fr.lambda = reg_template.lambdas;

        if (k == 0 && learn) {
            // lambda for the unpoisoned set comes from plain hyperparameter learning
            const auto h = run_hyperlearn(result.poisoned, val, spec, reg_template, cfg);
            fr.lambda = h.lambda;
            fr.val_loss = h.val_loss;
        }

        std::size_t remaining = k == 0 ? counts[0] : counts[k] - counts[k - 1];
        std::size_t batch_index = 0;
        while (remaining > 0) {
            const std::size_t nb = cfg.poison_batch == 0 ? remaining : std::min(cfg.poison_batch, remaining);
            PoisonSet batch = init_poison(result.poisoned, nb, pick_rng, used);
            apply_poison(result.poisoned, batch);
            RegSpec reg = learn ? reg_with_lambda(spec, reg_template, cfg.lambda_init) : reg_template;
            ClassifierProblem problem(spec, result.poisoned, batch.indices, reg, val);
            auto trace = optimize_batch(problem, spec, cfg, batch.domain, init_rng, mode, observer, k, batch_index);

            batch.Xp = problem.poison();
            apply_poison(result.poisoned, batch);
            used.insert(used.end(), batch.indices.begin(), batch.indices.end());
            fr.lambda = problem.lambda();
            fr.val_loss.insert(fr.val_loss.end(), trace.val_loss.begin(), trace.val_loss.end());
            fr.batches.push_back(std::move(batch));
            remaining -= nb;
            ++batch_index;
        }
        fr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.fractions.push_back(std::move(fr));
    }
    return result;
}

struct GridSearchResult {
    double best = 0.0;
    std::vector<std::pair<double, double>> table; ///< (lambda, validation loss)
};

/// Arg-min of `objective` over `grid`; ties go to the smaller grid value.
template <class F>
GridSearchResult grid_search(std::span<const double> grid, F&& objective) {
    if (grid.empty()) throw std::invalid_argument("grid_search: empty grid");
    GridSearchResult res;
    double best_val = std::numeric_limits<double>::infinity();
    bool have = false;
    for (double g : grid) {
        const double v = objective(g);
        res.table.emplace_back(g, v);
        if (!have || v < best_val || (v == best_val && g < res.best)) {
            best_val = v;
            res.best = g;
            have = true;
        }
    }
    return res;
}

struct TrainSettings {
    double eta = 0.1;
    std::size_t epochs = 100;
    std::uint64_t init_seed = 0;
};

inline ParamVector train_model(const ModelSpec& spec, const Dataset& train, const RegSpec& reg,
                               const TrainSettings& ts) {
    Rng rng = Rng(ts.init_seed).derive("train-w0");
    return sgd_train(spec, train, reg, initial_params(spec, rng), ts.eta, ts.epochs).w;
}

/// Trains from scratch for every grid value and keeps the lowest validation loss.
/// A grid value whose training diverges scores +inf.
inline GridSearchResult grid_search_lambda(const Dataset& train, const Dataset& val, const ModelSpec& spec,
                                           const RegSpec& reg_template, std::span<const double> grid,
                                           const TrainSettings& ts) {
    if (!reg_template.active()) throw std::invalid_argument("grid_search_lambda: needs an active regularizer");
    return grid_search(grid, [&](double lam) {
        const RegSpec reg = reg_with_lambda(spec, reg_template, lam);
        try {
            const ParamVector w = train_model(spec, train, reg, ts);
            const double v = loss(spec, w, val, reg, false);
            return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
        } catch (const NumericalError&) {
            return std::numeric_limits<double>::infinity();
        }
    });
}

/// Evenly spaced values lo, lo + step, ..., up to hi (inclusive within round-off).
inline std::vector<double> linear_grid(double lo, double hi, double step) {
    if (!(step > 0.0) || hi < lo) throw std::invalid_argument("linear_grid: bad range");
    std::vector<double> g;
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) g.push_back(lo + step * static_cast<double>(i));
    return g;
}

} // namespace hyperpoison

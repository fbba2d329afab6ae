#pragma once

// Experiment drivers behind the command-line subcommands: repetitions of the
// cumulative attack under several regularization modes, hyperparameter
// learning, plain evaluation, the two-Gaussian demo, and gradient self-checks.
// Results are plain structs; serialization lives at the bottom of the file.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hyperpoison/attack.hpp"
#include "hyperpoison/checks.hpp"
#include "hyperpoison/config.hpp"
#include "hyperpoison/data.hpp"
#include "hyperpoison/metrics.hpp"

#ifndef HYPERPOISON_VERSION
#define HYPERPOISON_VERSION "unknown"
#endif

namespace hyperpoison {

inline constexpr const char* kVersion = HYPERPOISON_VERSION;

/// Runs fn(0..n-1) on up to `jobs` threads; results keep index order and the
/// first failure (by index) is rethrown after every worker has stopped.
template <class R, class F>
std::vector<R> parallel_map(std::size_t n, std::size_t jobs, F&& fn) {
    std::vector<std::optional<R>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t nthreads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    std::vector<R> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

inline std::uint64_t repetition_seed(const ExperimentConfig& cfg, std::size_t rep) {
    return Rng(cfg.seed).derive("repetition", rep).next_u64();
}

// ---- data -----------------------------------------------------------------

inline RawImages load_raw_images(const TaskConfig& t) {
    if (t.kind == TaskKind::Idx) {
        if (t.images.empty()) throw ConfigError("task.images: required when task.kind = idx");
        RawImages raw;
        for (std::size_t i = 0; i < t.images.size(); ++i) {
            const auto part = load_idx(t.images[i], t.labels[i]);
            raw = i == 0 ? part : concat(std::move(raw), part);
        }
        return raw;
    }
    if (t.kind == TaskKind::Cifar10) {
        if (t.cifar_files.empty()) throw ConfigError("task.cifar_files: required when task.kind = cifar10");
        std::vector<std::filesystem::path> paths(t.cifar_files.begin(), t.cifar_files.end());
        return load_cifar10_binary(paths);
    }
    return {};
}

struct TaskData {
    Dataset train;
    Dataset val;
    Dataset test;
};

inline TaskData make_task(const ExperimentConfig& cfg, const RawImages& raw, std::uint64_t seed) {
    if (cfg.task.kind == TaskKind::Synthetic) {
        Rng rng(seed);
        auto s = gen_synthetic_gaussians(cfg.task.synth_train_per_class, cfg.task.synth_val_per_class, rng);
        return {std::move(s.train), std::move(s.val), gen_synthetic_test(cfg.task.synth_test_per_class, rng)};
    }
    SplitSpec sp = cfg.task.split;
    sp.seed = seed;
    auto t = make_binary_task(raw, sp);
    return {std::move(t.train), std::move(t.val), std::move(t.test)};
}

/// Rows of `d` selected by `rows`, in that order.
inline Dataset take_rows(const Dataset& d, std::span<const std::size_t> rows) {
    Dataset out;
    out.X = Matrix(rows.size(), d.m());
    out.y.resize(rows.size());
    out.bounds = d.bounds;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto src = d.X.row(rows[r]);
        std::copy(src.begin(), src.end(), out.X.row(r).begin());
        out.y[r] = d.y[rows[r]];
    }
    return out;
}

// ---- regularization modes ---------------------------------------------------

/// K-fold cross-validated lambda on `train` (mean held-out loss, ties to the
/// smaller lambda).
inline GridSearchResult cross_validate_lambda(const ExperimentConfig& cfg, const ModelSpec& spec, const Dataset& train,
                                              std::uint64_t seed) {
    const std::size_t K = cfg.cv_folds;
    if (train.n() < K) throw ConfigError("experiment.cv_folds: more folds than training rows");
    std::vector<std::size_t> order(train.n());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng(seed).derive("cv-folds");
    rng.shuffle(order);
    std::vector<Dataset> fit, held;
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<std::size_t> in, out;
        for (std::size_t i = 0; i < order.size(); ++i) (i % K == k ? out : in).push_back(order[i]);
        fit.push_back(take_rows(train, in));
        held.push_back(take_rows(train, out));
    }
    const TrainSettings ts{cfg.eval.eta, cfg.eval.epochs, seed};
    return grid_search(cfg.cv_grid, [&](double lam) {
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const RegSpec reg = cfg.reg_at(spec, lam, fit[k].n());
            try {
                const double v = loss(spec, train_model(spec, fit[k], reg, ts), held[k], reg, false);
                if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
                total += v;
            } catch (const NumericalError&) {
                return std::numeric_limits<double>::infinity();
            }
        }
        return total / static_cast<double>(K);
    });
}

inline RegSpec with_lambdas(RegSpec reg, const Vector& lambdas) {
    if (reg.active()) reg.lambdas = lambdas;
    return reg;
}

// ---- attack experiment --------------------------------------------------------

struct ResultRecord {
    std::size_t repetition = 0;
    RegMode mode = RegMode::None;
    double fraction = 0.0;
    std::size_t poison_count = 0;
    double test_error = 0.0;
    double val_error = 0.0;
    Vector lambda; ///< empty without regularization
    WeightNorms norms;
    std::optional<double> kuncheva; ///< top-k consistency against this mode's unpoisoned model
    double seconds = 0.0;           ///< attack wall time; reported only in the timing sidecar
};

inline std::optional<FeatureSet> maybe_top_k(const ExperimentConfig& cfg, const ModelSpec& spec, const ParamVector& w) {
    if (cfg.top_k >= spec.input_dim()) return std::nullopt;
    return top_k_features(spec, w, cfg.top_k);
}

/// One (repetition, mode) cell: attack over the fraction schedule, then retrain
/// from scratch with the evaluation settings at every fraction.
inline std::vector<ResultRecord> run_mode(const ExperimentConfig& cfg, const TaskData& task, std::size_t rep,
                                          RegMode mode, const HyperiterationObserver& observer = {}) {
    const std::uint64_t seed = repetition_seed(cfg, rep);
    const ModelSpec spec = cfg.model_for(task.train.m());
    const std::size_t n = task.train.n();

    AttackConfig ac = cfg.attack;
    ac.seed = Rng(seed).derive("attack").next_u64();
    ac.learn_lambda = mode == RegMode::Rmd;
    RegSpec reg_template = RegSpec::none();
    if (mode == RegMode::Fixed) reg_template = cfg.reg_at(spec, cfg.fixed_lambda, n);
    if (mode == RegMode::Clean) reg_template = cfg.reg_at(spec, cross_validate_lambda(cfg, spec, task.train, seed).best, n);
    if (mode == RegMode::Rmd) reg_template = cfg.reg_at(spec, ac.lambda_init, n);

    const AttackResult res = run_attack(task.train, task.val, spec, reg_template, ac, observer);
    const TrainSettings ts{cfg.eval.eta, cfg.eval.epochs, seed};

    std::vector<ResultRecord> out;
    std::optional<FeatureSet> base;
    for (std::size_t k = 0; k < res.fractions.size(); ++k) {
        const auto& fr = res.fractions[k];
        const RegSpec reg = with_lambdas(reg_template, fr.lambda);
        const ParamVector w = train_model(spec, res.dataset_at(task.train, k), reg, ts);
        ResultRecord r;
        r.repetition = rep;
        r.mode = mode;
        r.fraction = fr.fraction;
        r.poison_count = fr.poison_count;
        r.test_error = test_error(spec, w, task.test);
        r.val_error = test_error(spec, w, task.val);
        r.lambda = reg.lambdas;
        r.norms = weight_norms(spec, w);
        r.seconds = fr.seconds;
        const auto fs = maybe_top_k(cfg, spec, w);
        if (k == 0) base = fs;
        if (fs && base) r.kuncheva = kuncheva_index(*base, *fs);
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<ResultRecord> run_attack_experiment(const ExperimentConfig& cfg, std::size_t jobs = 1) {
    const RawImages raw = load_raw_images(cfg.task);
    std::vector<TaskData> tasks;
    for (std::size_t r = 0; r < cfg.repetitions; ++r) tasks.push_back(make_task(cfg, raw, repetition_seed(cfg, r)));
    const std::size_t M = cfg.modes.size();
    auto cells = parallel_map<std::vector<ResultRecord>>(cfg.repetitions * M, jobs, [&](std::size_t i) {
        return run_mode(cfg, tasks[i / M], i / M, cfg.modes[i % M]);
    });
    std::vector<ResultRecord> out;
    for (auto& c : cells) out.insert(out.end(), c.begin(), c.end());
    return out;
}

/// Clean-data baseline per mode: lambda from the mode's own rule, no poisoning.
inline std::vector<ResultRecord> run_eval_experiment(const ExperimentConfig& cfg, std::size_t jobs = 1) {
    ExperimentConfig c = cfg;
    c.attack.fraction_schedule = {0.0};
    return run_attack_experiment(c, jobs);
}

// ---- hyperparameter learning --------------------------------------------------

struct HyperlearnRecord {
    std::size_t repetition = 0;
    std::string method; ///< "rmd" or "cv"
    Vector lambda;
    double test_error = 0.0;
    double val_error = 0.0;
    std::vector<Vector> lambda_trace;  ///< rmd only
    std::vector<double> val_loss_trace;
};

inline std::vector<HyperlearnRecord> run_hyperlearn_experiment(const ExperimentConfig& cfg, std::size_t jobs = 1) {
    const RawImages raw = load_raw_images(cfg.task);
    const bool with_cv = cfg.has_mode(RegMode::Clean);
    auto per_rep = parallel_map<std::vector<HyperlearnRecord>>(cfg.repetitions, jobs, [&](std::size_t rep) {
        const std::uint64_t seed = repetition_seed(cfg, rep);
        const TaskData task = make_task(cfg, raw, seed);
        const ModelSpec spec = cfg.model_for(task.train.m());
        const std::size_t n = task.train.n();
        AttackConfig ac = cfg.attack;
        ac.seed = Rng(seed).derive("attack").next_u64();
        const TrainSettings ts{cfg.eval.eta, cfg.eval.epochs, seed};
        std::vector<HyperlearnRecord> out;

        const auto h = run_hyperlearn(task.train, task.val, spec, cfg.reg_at(spec, ac.lambda_init, n), ac);
        HyperlearnRecord r{rep, "rmd", h.lambda, 0.0, 0.0, h.lambda_trace, h.val_loss};
        const RegSpec reg = with_lambdas(cfg.reg_at(spec, 0.0, n), h.lambda);
        const ParamVector w = train_model(spec, task.train, reg, ts);
        r.test_error = test_error(spec, w, task.test);
        r.val_error = test_error(spec, w, task.val);
        out.push_back(std::move(r));

        if (with_cv) {
            const double lam = cross_validate_lambda(cfg, spec, task.train, seed).best;
            const RegSpec creg = cfg.reg_at(spec, lam, n);
            const ParamVector wc = train_model(spec, task.train, creg, ts);
            out.push_back({rep, "cv", creg.lambdas, test_error(spec, wc, task.test), test_error(spec, wc, task.val), {}, {}});
        }
        return out;
    });
    std::vector<HyperlearnRecord> out;
    for (auto& v : per_rep) out.insert(out.end(), v.begin(), v.end());
    return out;
}

// ---- two-Gaussian demo ------------------------------------------------------

struct SynthCell {
    double x = 0.0;
    double y = 0.0;
    double val_error_none = 0.0;
    double val_error_fixed = 0.0;
    double lambda_star = 0.0;
};

struct SynthTrial {
    std::size_t repetition = 0;
    std::size_t source_row = 0; ///< validation row the poison was cloned from
    double poison_label = 0.0;
    Vector start;               ///< cloned location
    Vector attacked_none;       ///< poison after the attack on the unregularized model
    Vector attacked_fixed;      ///< poison after the attack on the fixed-lambda model
    double clean_error_none = 0.0;
    double clean_error_fixed = 0.0;
    double attacked_error_none = 0.0;
    double attacked_error_fixed = 0.0;
    double lambda_star_attack = 0.0; ///< grid lambda with the poison where the unregularized attack left it
    double lambda_star_inside = 0.0; ///< grid lambda with the poison at its own class mean
    std::vector<SynthCell> cells;
};

namespace detail {

struct SynthContext {
    const ExperimentConfig& cfg;
    ModelSpec spec;
    TaskData task;
    Dataset poisoned; ///< training set with the poison appended as its last row
    TrainSettings ts;

    [[nodiscard]] RegSpec fixed_reg(std::size_t n) const { return cfg.reg_at(spec, cfg.fixed_lambda, n); }

    double val_error(const Dataset& train, const RegSpec& reg) const {
        return test_error(spec, train_model(spec, train, reg, ts), task.val);
    }
    Dataset with_poison_at(double x, double y) const {
        Dataset d = poisoned;
        d.X(d.n() - 1, 0) = x;
        d.X(d.n() - 1, 1) = y;
        return d;
    }
    double lambda_star(const Dataset& train) const {
        RegSpec tmpl = cfg.reg_at(spec, 0.0, train.n());
        return grid_search_lambda(train, task.val, spec, tmpl, cfg.synth.lambda_grid, ts).best;
    }
};

} // namespace detail

/// The single-point demo for one seed. `observer` sees every hyperiteration of
/// both attacks (fraction_index 0: unregularized, 1: fixed lambda). With
/// `with_map`, the validation-error and lambda maps over the poison location
/// grid are filled in as well.
inline SynthTrial run_synth_trial(const ExperimentConfig& cfg, std::size_t rep, bool with_map,
                                  const HyperiterationObserver& observer = {}) {
    const std::uint64_t seed = repetition_seed(cfg, rep);
    ExperimentConfig c = cfg;
    c.task.kind = TaskKind::Synthetic;
    detail::SynthContext ctx{c, ModelSpec::logistic(2), make_task(c, {}, seed), {}, {c.eval.eta, c.eval.epochs, seed}};

    SynthTrial t;
    t.repetition = rep;
    Rng pick = Rng(seed).derive("poison-source");
    t.source_row = pick.below(ctx.task.val.n());
    ctx.poisoned = ctx.task.train;
    const PoisonSet p = append_flipped_clone(ctx.poisoned, ctx.task.val, t.source_row);
    t.poison_label = p.yp[0];
    t.start = {p.Xp(0, 0), p.Xp(0, 1)};

    const std::size_t n_clean = ctx.task.train.n();
    const std::size_t n_pois = ctx.poisoned.n();
    t.clean_error_none = ctx.val_error(ctx.task.train, RegSpec::none());
    t.clean_error_fixed = ctx.val_error(ctx.task.train, ctx.fixed_reg(n_clean));

    AttackConfig ac = c.attack;
    ac.learn_lambda = false;
    const auto attack = [&](const RegSpec& reg, std::size_t index) {
        ClassifierProblem prob(ctx.spec, ctx.poisoned, p.indices, reg, ctx.task.val);
        Rng init = Rng(seed).derive("attack-w0");
        optimize_batch(prob, ctx.spec, ac, p.domain, init, StepMode::PoisonOnly, observer, index, 0);
        return prob.poison();
    };
    const Matrix xn = attack(RegSpec::none(), 0);
    const Matrix xf = attack(ctx.fixed_reg(n_pois), 1);
    t.attacked_none = {xn(0, 0), xn(0, 1)};
    t.attacked_fixed = {xf(0, 0), xf(0, 1)};
    t.attacked_error_none = ctx.val_error(ctx.with_poison_at(xn(0, 0), xn(0, 1)), RegSpec::none());
    t.attacked_error_fixed = ctx.val_error(ctx.with_poison_at(xf(0, 0), xf(0, 1)), ctx.fixed_reg(n_pois));

    const GaussianPair g;
    const double* mu = t.poison_label == 1.0 ? g.mu1 : g.mu0;
    t.lambda_star_attack = ctx.lambda_star(ctx.with_poison_at(xn(0, 0), xn(0, 1)));
    t.lambda_star_inside = ctx.lambda_star(ctx.with_poison_at(mu[0], mu[1]));

    if (with_map) {
        const double b = g.bound;
        const auto axis = linear_grid(-b, b, c.synth.location_step);
        for (double x : axis) {
            for (double y : axis) {
                const Dataset d = ctx.with_poison_at(x, y);
                t.cells.push_back({x, y, ctx.val_error(d, RegSpec::none()), ctx.val_error(d, ctx.fixed_reg(n_pois)),
                                   ctx.lambda_star(d)});
            }
        }
    }
    return t;
}

inline std::vector<SynthTrial> run_synth_experiment(const ExperimentConfig& cfg, std::size_t jobs = 1,
                                                    bool with_map = true) {
    return parallel_map<SynthTrial>(cfg.repetitions, jobs,
                                    [&](std::size_t rep) { return run_synth_trial(cfg, rep, with_map); });
}

// ---- serialization --------------------------------------------------------------

using json = nlohmann::json;

inline json header_record(const std::string& command, const ExperimentConfig& cfg) {
    json config = json::object();
    for (const auto& [k, v] : cfg.resolved) config[k] = v;
    return {{"type", "header"}, {"command", command}, {"version", kVersion}, {"config", config}};
}

inline json vector_json(const Vector& v) { return json(std::vector<double>(v.begin(), v.end())); }

inline json to_json(const ResultRecord& r) {
    json j{{"type", "result"},
           {"repetition", r.repetition},
           {"mode", std::string(reg_mode_name(r.mode))},
           {"fraction", r.fraction},
           {"poison_count", r.poison_count},
           {"test_error", r.test_error},
           {"val_error", r.val_error},
           {"lambda", vector_json(r.lambda)},
           {"weight_norms", {{"per_layer", vector_json(r.norms.per_layer)}, {"total", r.norms.total}}}};
    if (r.kuncheva) j["kuncheva"] = *r.kuncheva;
    return j;
}

inline json timing_json(const ResultRecord& r) {
    return {{"repetition", r.repetition},
            {"mode", std::string(reg_mode_name(r.mode))},
            {"fraction", r.fraction},
            {"attack_seconds", r.seconds}};
}

inline std::vector<json> to_json(const HyperlearnRecord& r) {
    std::vector<json> out;
    const std::size_t steps = std::min(r.lambda_trace.size(), r.val_loss_trace.size());
    for (std::size_t i = 0; i < steps; ++i) {
        out.push_back({{"type", "trajectory"},
                       {"repetition", r.repetition},
                       {"iteration", i},
                       {"lambda", vector_json(r.lambda_trace[i])},
                       {"val_loss", r.val_loss_trace[i]}});
    }
    out.push_back({{"type", "result"},
                   {"repetition", r.repetition},
                   {"method", r.method},
                   {"lambda", vector_json(r.lambda)},
                   {"test_error", r.test_error},
                   {"val_error", r.val_error}});
    return out;
}

inline std::vector<json> to_json(const SynthTrial& t) {
    std::vector<json> out;
    for (const auto& c : t.cells) {
        out.push_back({{"type", "cell"},
                       {"repetition", t.repetition},
                       {"x", c.x},
                       {"y", c.y},
                       {"val_error_none", c.val_error_none},
                       {"val_error_fixed", c.val_error_fixed},
                       {"lambda_star", c.lambda_star}});
    }
    out.push_back({{"type", "attack"},
                   {"repetition", t.repetition},
                   {"source_row", t.source_row},
                   {"poison_label", t.poison_label},
                   {"start", vector_json(t.start)},
                   {"attacked_none", vector_json(t.attacked_none)},
                   {"attacked_fixed", vector_json(t.attacked_fixed)},
                   {"clean_error_none", t.clean_error_none},
                   {"clean_error_fixed", t.clean_error_fixed},
                   {"attacked_error_none", t.attacked_error_none},
                   {"attacked_error_fixed", t.attacked_error_fixed},
                   {"lambda_star_attack", t.lambda_star_attack},
                   {"lambda_star_inside", t.lambda_star_inside}});
    return out;
}

inline json to_json(const CheckResult& r) {
    return {{"type", "check"},
            {"name", r.name},
            {"instances", r.instances},
            {"max_error", r.max_error},
            {"tolerance", r.tolerance},
            {"passed", r.passed()}};
}

/// (mode, fraction, mean test error, mean lambda) rows in mode-then-fraction order.
inline std::string csv_projection(const ExperimentConfig& cfg, const std::vector<ResultRecord>& records) {
    std::string out = "mode,fraction,mean_test_error,mean_lambda\n";
    for (RegMode mode : cfg.modes) {
        std::vector<double> fractions;
        for (const auto& r : records) {
            if (r.mode == mode && std::find(fractions.begin(), fractions.end(), r.fraction) == fractions.end()) {
                fractions.push_back(r.fraction);
            }
        }
        for (double f : fractions) {
            double err = 0.0, lam = 0.0;
            std::size_t count = 0, lam_count = 0;
            for (const auto& r : records) {
                if (r.mode != mode || r.fraction != f) continue;
                err += r.test_error;
                ++count;
                for (double l : r.lambda) {
                    lam += l;
                    ++lam_count;
                }
            }
            out += std::string(reg_mode_name(mode)) + "," + json(f).dump() + "," +
                   json(err / static_cast<double>(count)).dump() + "," +
                   (lam_count ? json(lam / static_cast<double>(lam_count)).dump() : std::string()) + "\n";
        }
    }
    return out;
}

inline void write_lines(const std::filesystem::path& path, const std::vector<json>& lines) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& j : lines) out << j.dump() << '\n';
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

/// Companion paths: results.jsonl -> results.csv and results.timing.jsonl.
inline std::filesystem::path csv_path(std::filesystem::path p) { return p.replace_extension(".csv"); }
inline std::filesystem::path timing_path(std::filesystem::path p) { return p.replace_extension(".timing.jsonl"); }

inline void write_attack_outputs(const std::filesystem::path& path, const std::string& command,
                                 const ExperimentConfig& cfg, const std::vector<ResultRecord>& records) {
    std::vector<json> lines{header_record(command, cfg)};
    std::vector<json> timing;
    for (const auto& r : records) {
        lines.push_back(to_json(r));
        timing.push_back(timing_json(r));
    }
    write_lines(path, lines);
    write_text(csv_path(path), csv_projection(cfg, records));
    write_lines(timing_path(path), timing);
}

} // namespace hyperpoison

// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   acceptance [data_dir]
//
// data_dir holds mnist-0v8/{images,labels}-*-ubyte (defaults to the bundled copy).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include "hyperpoison/checks.hpp"
#include "hyperpoison/experiment.hpp"

using namespace hyperpoison;

namespace {

#ifndef HYPERPOISON_DATA_DIR
#define HYPERPOISON_DATA_DIR "data"
#endif

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const char* title, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %d  %s: %s\n", ok ? "PASS" : "FAIL", id, title, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const CheckResult& find(const std::vector<CheckResult>& rs, const std::string& name) {
    return *std::find_if(rs.begin(), rs.end(), [&](const CheckResult& r) { return r.name == name; });
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// ---- 1-3 -------------------------------------------------------------------

void gradient_criteria() {
    auto t0 = Clock::now();
    CheckSettings s; // 20 LR, 10 MLP and 5 strongly convex instances
    const auto results = run_gradient_checks(s);
    const double secs = seconds_since(t0);
    const auto& lr = find(results, "rmd_vs_fd_lr");
    const auto& mlp = find(results, "rmd_vs_fd_mlp");
    report(1, "RMD vs finite differences", lr.passed() && mlp.passed() && secs < 120.0,
           fmt("LR %zu instances max rel err %.2e (tol 1e-5), MLP %zu instances %.2e (tol 1e-4), %.1fs (< 120s)",
               lr.instances, lr.max_error, mlp.instances, mlp.max_error, secs));
    const auto& fmd = find(results, "fmd_vs_rmd");
    const auto& imp = find(results, "implicit_vs_rmd");
    report(2, "engine agreement", fmd.passed() && imp.passed() && secs < 120.0,
           fmt("FMD vs RMD %.2e (tol 1e-10) over %zu instances, implicit vs RMD %.2e (tol 1e-3) over %zu", fmd.max_error,
               fmd.instances, imp.max_error, imp.instances));

    // closed-form scalar toy, computed here without the library's check helper
    const double a = rmd_hypergrad(ScalarQuadratic(2.0, false), ParamVector{0.0}, 0.5, 1).grad.d_poison(0, 0);
    const double b = rmd_hypergrad(ScalarQuadratic(1.0, true, std::log(0.5)), ParamVector{0.0}, 1.0, 2).grad.d_lambda[0];
    const auto c = implicit_hypergrad(ScalarQuadratic(2.0, true, 0.0), ParamVector{1.0}).grad;
    const double err = std::max({std::abs(a - 0.5), std::abs(b + 0.25), std::abs(c.d_poison(0, 0) - 0.5),
                                 std::abs(c.d_lambda[0] + 0.5)});
    report(3, "closed-form toy values", err <= 1e-10,
           fmt("got %.12f, %.12f, %.12f, %.12f; max |err| %.1e (tol 1e-10)", a, b, c.d_poison(0, 0), c.d_lambda[0], err));
}

// ---- 4, 5 and the feasibility part of 9 -----------------------------------

struct Feasibility {
    std::size_t events = 0;
    std::size_t violations = 0;
};

Feasibility synthetic_criteria() {
    const auto cfg = resolve_config(preset("synthetic"));
    const GaussianPair g;
    const Box domain = Box::scalar(-g.bound, g.bound);
    Feasibility feas;
    const HyperiterationObserver observer = [&](const HyperiterationEvent& e) {
        ++feas.events;
        if (!domain.contains(e.poison.flat())) ++feas.violations;
    };

    auto t0 = Clock::now();
    int raised = 0, damped = 0, lambda_order = 0;
    std::string rows;
    for (std::size_t rep = 0; rep < 10; ++rep) {
        const SynthTrial t = run_synth_trial(cfg, rep, false, observer);
        const double d_none = t.attacked_error_none - t.clean_error_none;
        const double d_fixed = t.attacked_error_fixed - t.clean_error_fixed;
        raised += d_none > 0.0;
        damped += d_fixed < d_none;
        lambda_order += t.lambda_star_attack > t.lambda_star_inside;
        rows += fmt(" [%zu: %+.3f/%+.3f, %.1f>%.1f]", rep, d_none, d_fixed, t.lambda_star_attack, t.lambda_star_inside);
    }
    const double secs = seconds_since(t0);
    std::printf("  synthetic seeds [rep: no-reg increase/fixed-lambda increase, lambda* attack>inside]:%s\n", rows.c_str());
    report(4, "synthetic single-point attack", raised >= 9 && damped >= 9 && secs < 300.0,
           fmt("(a) error raised in %d/10 (need 9), (b) fixed lambda=ln20 increase smaller in %d/10 (need 9), %.1fs",
               raised, damped, secs));
    report(5, "lambda map ordering", lambda_order >= 8 && secs < 600.0,
           fmt("lambda* at attack location > lambda* inside own class in %d/10 (need 8)", lambda_order));
    return feas;
}

// ---- 6 and 7 ----------------------------------------------------------------

const ResultRecord& pick(const std::vector<ResultRecord>& rs, std::size_t rep, RegMode mode, double fraction) {
    return *std::find_if(rs.begin(), rs.end(), [&](const ResultRecord& r) {
        return r.repetition == rep && r.mode == mode && std::abs(r.fraction - fraction) < 1e-12;
    });
}

void kuncheva_and_mnist(const std::filesystem::path& data_dir) {
    // exact properties of the index
    const FeatureSet a{{0, 1, 2}, 10}, b{{1, 2, 7}, 10};
    const bool identity = kuncheva_index(a, a) == 1.0;
    const bool symmetric = kuncheva_index(a, b) == kuncheva_index(b, a);
    const bool chance = kuncheva_index(FeatureSet{{0, 1, 2, 3}, 8}, FeatureSet{{2, 3, 4, 5}, 8}) == 0.0;
    const double hand = kuncheva_index(a, b);
    const bool hand_ok = std::abs(hand - 11.0 / 21.0) <= 1e-12;

    ConfigMap m = preset("mnist-lr-desk");
    m["task.images"] = (data_dir / "mnist-0v8" / "images-idx3-ubyte").string();
    m["task.labels"] = (data_dir / "mnist-0v8" / "labels-idx1-ubyte").string();
    m["experiment.modes"] = "none,rmd";
    const auto cfg = resolve_config(m);

    auto t0 = Clock::now();
    const auto records = run_attack_experiment(cfg, 1);
    const double secs = seconds_since(t0);

    int err_ok = 0, lam_ok = 0, kun_ok = 0;
    double mean_none = 0, mean_rmd = 0, mean_l0 = 0, mean_l20 = 0;
    std::string rows;
    for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
        const auto& n20 = pick(records, rep, RegMode::None, 0.2);
        const auto& r20 = pick(records, rep, RegMode::Rmd, 0.2);
        const auto& r0 = pick(records, rep, RegMode::Rmd, 0.0);
        const auto& n0 = pick(records, rep, RegMode::None, 0.0);
        const auto& n10 = pick(records, rep, RegMode::None, 0.1);
        err_ok += r20.test_error < n20.test_error;
        lam_ok += r20.lambda[0] > r0.lambda[0];
        kun_ok += *n10.kuncheva <= *n0.kuncheva && *n20.kuncheva <= *n10.kuncheva;
        mean_none += n20.test_error / 5.0;
        mean_rmd += r20.test_error / 5.0;
        mean_l0 += r0.lambda[0] / 5.0;
        mean_l20 += r20.lambda[0] / 5.0;
        rows += fmt(" [%zu: err %.3f vs %.3f, lambda %.1f->%.1f, kuncheva %.2f/%.2f/%.2f]", rep, r20.test_error,
                    n20.test_error, r0.lambda[0], r20.lambda[0], *n0.kuncheva, *n10.kuncheva, *n20.kuncheva);
    }
    std::printf("  desk MNIST seeds [rep: rmd vs none test error at 20%%, rmd lambda 0%%->20%%, no-reg kuncheva]:%s\n",
                rows.c_str());
    report(6, "desk MNIST 0-vs-8 trend", err_ok >= 4 && lam_ok >= 4 && secs < 1800.0,
           fmt("(a) rmd error < no-reg error at 20%% in %d/5 (mean %.4f vs %.4f), (b) lambda(20%%) > lambda(0%%) in %d/5 "
               "(mean %.2f vs %.2f), %.0fs (< 1800s)",
               err_ok, mean_rmd, mean_none, lam_ok, mean_l20, mean_l0, secs));
    report(7, "Kuncheva index", identity && symmetric && chance && hand_ok && kun_ok >= 4,
           fmt("identity %d, symmetry %d, chance %d, hand value %.15f (11/21); no-reg top-20 consistency "
               "non-increasing in %d/5 (need 4)",
               identity, symmetric, chance, hand, kun_ok));
}

// ---- 8 ----------------------------------------------------------------------

void cost_scaling() {
    Rng rng(8);
    const auto spec = ModelSpec::logistic(100);
    Dataset train;
    train.X = Matrix(400, 100);
    for (double& x : train.X.flat()) x = rng.uniform();
    train.y.resize(400);
    for (std::size_t i = 0; i < 400; ++i) train.y[i] = static_cast<double>(i % 2);
    train.bounds = Box::scalar(0.0, 1.0);
    Dataset val = train;
    const ClassifierProblem p(spec, train, {0, 1, 2, 3, 4}, RegSpec::l2(-2.0), val);
    const ParamVector w0(spec.param_count(), 0.0);
    const auto time_it = [&](std::size_t T) {
        auto t0 = Clock::now();
        const auto r = rmd_hypergrad(p, w0, 0.1, T);
        if (!std::isfinite(r.grad.d_lambda[0])) std::abort();
        return seconds_since(t0);
    };
    time_it(50); // warm-up
    std::vector<double> ratios;
    for (int i = 0; i < 5; ++i) {
        const double t200 = time_it(200);
        const double t400 = time_it(400);
        ratios.push_back(t400 / t200);
    }
    std::sort(ratios.begin(), ratios.end());
    const double med = ratios[2];
    report(8, "RMD cost scaling", med >= 1.6 && med <= 2.6,
           fmt("median time(T=400)/time(T=200) = %.3f over 5 trials (range [1.6, 2.6])", med));
}

// ---- 9 ------------------------------------------------------------------------

void determinism_and_plumbing(const Feasibility& feas) {
    const auto dir = std::filesystem::temp_directory_path() / "hyperpoison-acceptance";
    std::filesystem::remove_all(dir);

    ConfigMap m = preset("synthetic");
    m["experiment.repetitions"] = "2";
    m["experiment.modes"] = "none,fixed,rmd,clean";
    m["attack.fractions"] = "0,0.0625,0.125";
    m["attack.T_mul"] = "10";
    m["attack.T"] = "30";
    const auto cfg = resolve_config(m);
    const auto run = [&](const std::string& name, std::size_t jobs) {
        const auto path = dir / name;
        write_attack_outputs(path, "attack", cfg, run_attack_experiment(cfg, jobs));
        return std::make_pair(slurp(path), slurp(csv_path(path)));
    };
    const auto first = run("a.jsonl", 1);
    const auto second = run("b.jsonl", 1);
    const auto threaded = run("c.jsonl", 3);
    const bool same = !first.first.empty() && first == second && first == threaded;

    // IDX and CIFAR-10 byte round trips on random images
    Rng rng(99);
    RawImages idx{5, 28, 28, 1, std::vector<std::uint8_t>(5 * 784), {}};
    for (auto& p : idx.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    for (int i = 0; i < 5; ++i) idx.labels.push_back(static_cast<std::uint8_t>(rng.below(10)));
    const auto [im, lb] = encode_idx(idx);
    const auto idx_back = parse_idx(im, lb);
    const bool idx_ok = idx_back.pixels == idx.pixels && idx_back.labels == idx.labels && idx_back.rows == 28 &&
                        encode_idx(idx_back) == std::make_pair(im, lb);
    RawImages cifar{4, 32, 32, 3, std::vector<std::uint8_t>(4 * 3072), {0, 6, 9, 1}};
    for (auto& p : cifar.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    const auto bytes = encode_cifar10(cifar);
    const auto cifar_back = parse_cifar10(bytes);
    const bool cifar_ok = cifar_back.pixels == cifar.pixels && cifar_back.labels == cifar.labels &&
                          encode_cifar10(cifar_back) == bytes;

    report(9, "determinism and plumbing",
           same && idx_ok && cifar_ok && feas.violations == 0 && feas.events > 0,
           fmt("result files byte-identical across runs and thread counts: %s (%zu bytes); IDX round trip %s; CIFAR "
               "round trip %s; %zu/%zu recorded hyperiterations feasible",
               same ? "yes" : "no", first.first.size(), idx_ok ? "ok" : "FAILED", cifar_ok ? "ok" : "FAILED",
               feas.events - feas.violations, feas.events));
    std::filesystem::remove_all(dir);
}

} // namespace

int main(int argc, char** argv) {
    const std::filesystem::path data_dir = argc > 1 ? argv[1] : HYPERPOISON_DATA_DIR;
    const auto t0 = Clock::now();
    gradient_criteria();
    const Feasibility feas = synthetic_criteria();
    kuncheva_and_mnist(data_dir);
    cost_scaling();
    determinism_and_plumbing(feas);
    std::printf("%s: %d criterion(s) failed, total %.0fs\n", failures ? "FAILED" : "ALL PASSED", failures,
                seconds_since(t0));
    return failures ? 1 : 0;
}

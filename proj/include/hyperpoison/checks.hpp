#pragma once

// Self-checks for the hypergradient engines: a closed-form scalar toy, finite
// differences, engine cross-agreement, and a corruptible wrapper used as a
// negative control.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hyperpoison/hypergrad.hpp"
#include "hyperpoison/problem.hpp"

namespace hyperpoison {

/// inner  L(w) = 1/2 (w - x)^2 + [with_lambda] e^lambda / 2 * w^2
/// outer  A(w) = c/2 * w^2
class ScalarQuadratic {
public:
    ScalarQuadratic(double x, bool with_lambda, double lambda = 0.0, double outer_scale = 1.0)
        : x_(x), with_lambda_(with_lambda), lambda_(lambda), c_(outer_scale) {}

    std::size_t param_dim() const { return 1; }
    std::size_t lambda_dim() const { return with_lambda_ ? 1 : 0; }
    Matrix poison() const { return Matrix(1, 1, Vector{x_}); }
    void set_poison(const Matrix& xp) { x_ = xp(0, 0); }
    Vector lambda() const { return with_lambda_ ? Vector{lambda_} : Vector{}; }
    void set_lambda(std::span<const double> l) {
        if (with_lambda_) lambda_ = l[0];
    }

    double reg() const { return with_lambda_ ? std::exp(lambda_) : 0.0; }

    void train_grad(std::span<const double> w, std::span<double> out) const { out[0] = (w[0] - x_) + reg() * w[0]; }
    double outer_loss(std::span<const double> w) const { return 0.5 * c_ * w[0] * w[0]; }
    void outer_grad(std::span<const double> w, std::span<double> out) const { out[0] = c_ * w[0]; }
    Vector outer_lambda_partial(std::span<const double>) const { return Vector(lambda_dim(), 0.0); }

    ParamVector hvp(std::span<const double>, std::span<const double> v) const { return {(1.0 + reg()) * v[0]}; }
    ReverseProducts reverse_products(std::span<const double> w, std::span<const double> v) const {
        ReverseProducts p;
        p.hv = {(1.0 + reg()) * v[0]};
        p.poison = Matrix(1, 1, Vector{-v[0]});
        if (with_lambda_) p.lambda = {reg() * w[0] * v[0]};
        return p;
    }
    ParamVector grad_tangent(std::span<const double> w, std::span<const double> w_dot, const Matrix* xdot,
                             std::span<const double> ldot) const {
        double t = (1.0 + reg()) * w_dot[0];
        if (xdot != nullptr) t -= (*xdot)(0, 0);
        if (with_lambda_ && !ldot.empty()) t += reg() * w[0] * ldot[0];
        return {t};
    }

private:
    double x_;
    bool with_lambda_;
    double lambda_;
    double c_;
};

static_assert(BilevelProblem<ScalarQuadratic>);

/// Delegates to P but skews the mixed poison product, so reverse-mode
/// hypergradients come out wrong while the forward pass stays intact.
template <BilevelProblem P>
class CorruptedProblem : public P {
public:
    CorruptedProblem(P inner, double skew) : P(std::move(inner)), skew_(skew) {}
    ReverseProducts reverse_products(std::span<const double> w, std::span<const double> v) const {
        auto out = P::reverse_products(w, v);
        for (double& x : out.poison.flat()) x *= 1.0 + skew_;
        return out;
    }

private:
    double skew_;
};

struct CheckSettings {
    std::size_t lr_instances = 20;
    std::size_t mlp_instances = 10;
    std::size_t implicit_instances = 5;
    std::uint64_t seed = 0;
    bool corrupt = false; ///< negative control: skew the reverse-mode products
};

struct CheckResult {
    std::string name;
    std::size_t instances = 0;
    double max_error = 0.0;
    double tolerance = 0.0;
    [[nodiscard]] bool passed() const { return max_error <= tolerance; }
};

namespace detail {

inline Dataset random_unit_dataset(Rng& rng, std::size_t n, std::size_t m) {
    Dataset d;
    d.X = Matrix(n, m);
    for (double& x : d.X.flat()) x = rng.uniform();
    d.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.y[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    d.bounds = Box::scalar(0.0, 1.0);
    return d;
}

inline std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

struct CheckInstance {
    ClassifierProblem problem;
    ParamVector w0;
    double eta;
    std::size_t T;
};

inline CheckInstance random_instance(Rng& rng, const ModelSpec& spec, RegSpec reg, std::size_t n, std::size_t np,
                                     double eta, std::size_t T) {
    auto train = random_unit_dataset(rng, n, spec.input_dim());
    auto val = random_unit_dataset(rng, between(rng, 6, 20), spec.input_dim());
    auto rows = rng.sample_without_replacement(n, np);
    for (auto r : rows) train.y[r] = 1.0 - train.y[r];
    ParamVector w0 = spec.kind == ModelKind::LogisticRegression ? init_params(spec, InitScheme::Zeros)
                                                                 : init_params(spec, InitScheme::Xavier, &rng);
    return {ClassifierProblem(spec, std::move(train), std::move(rows), std::move(reg), std::move(val)), std::move(w0),
            eta, T};
}

template <BilevelProblem P>
Hypergrad reverse(const P& p, const ParamVector& w0, double eta, std::size_t T, bool corrupt) {
    if (corrupt) return rmd_hypergrad(CorruptedProblem<P>(p, 0.05), w0, eta, T).grad;
    return rmd_hypergrad(p, w0, eta, T).grad;
}

} // namespace detail

/// Random small instances of the kind the attack runs on. LR instances use
/// n <= 50, m <= 10, at most 3 poison rows and T <= 100; MLP instances use
/// one hidden layer (input <= 6, hidden <= 4) and T <= 50.
inline std::vector<detail::CheckInstance> lr_check_instances(std::size_t count, Rng& rng) {
    std::vector<detail::CheckInstance> out;
    for (std::size_t i = 0; i < count; ++i) {
        const auto spec = ModelSpec::logistic(detail::between(rng, 2, 10));
        const double lam = rng.uniform(-3.0, 0.0);
        const RegSpec reg = rng.uniform() < 0.5 ? RegSpec::l2(lam) : RegSpec::none();
        out.push_back(detail::random_instance(rng, spec, reg, detail::between(rng, 10, 50), detail::between(rng, 1, 3),
                                              0.3, detail::between(rng, 10, 100)));
    }
    return out;
}

inline std::vector<detail::CheckInstance> mlp_check_instances(std::size_t count, Rng& rng) {
    std::vector<detail::CheckInstance> out;
    for (std::size_t i = 0; i < count; ++i) {
        const auto spec = ModelSpec::mlp({detail::between(rng, 2, 6), detail::between(rng, 2, 4), 1});
        RegSpec reg{Penalty::L2, Grouping::PerLayer, {rng.uniform(-3.0, 0.0), rng.uniform(-3.0, 0.0)}, false};
        out.push_back(detail::random_instance(rng, spec, reg, detail::between(rng, 10, 30), detail::between(rng, 1, 3),
                                              0.3, detail::between(rng, 10, 50)));
    }
    return out;
}

/// The four closed-form toy hypergradients, as |computed - expected|.
inline CheckResult check_toy_values(bool corrupt = false) {
    CheckResult r{"toy_closed_form", 4, 0.0, 1e-10};
    const auto note = [&](double got, double want) { r.max_error = std::max(r.max_error, std::abs(got - want)); };
    // w1 = 0.5 x with x = 2, A = w1^2 / 2: dA/dx = 0.5
    note(detail::reverse(ScalarQuadratic(2.0, false), ParamVector{0.0}, 0.5, 1, corrupt).d_poison(0, 0), 0.5);
    // x = 1, eta = 1, two steps from 0 at lambda = ln 0.5: dA/dlambda = -0.25
    note(detail::reverse(ScalarQuadratic(1.0, true, std::log(0.5)), ParamVector{0.0}, 1.0, 2, corrupt).d_lambda[0],
         -0.25);
    // stationary point w* = x / (1 + e^lambda) = 1 for x = 2, lambda = 0
    const auto imp = implicit_hypergrad(ScalarQuadratic(2.0, true, 0.0), ParamVector{1.0});
    note(imp.grad.d_poison(0, 0), 0.5);
    note(imp.grad.d_lambda[0], -0.5);
    return r;
}

inline std::vector<CheckResult> run_gradient_checks(const CheckSettings& s) {
    Rng rng = Rng(s.seed).derive("gradient-checks");
    auto lr = lr_check_instances(s.lr_instances, rng);
    auto mlp = mlp_check_instances(s.mlp_instances, rng);

    std::vector<CheckResult> out;
    out.push_back(check_toy_values(s.corrupt));

    CheckResult fd_lr{"rmd_vs_fd_lr", lr.size(), 0.0, 1e-5};
    CheckResult fd_mlp{"rmd_vs_fd_mlp", mlp.size(), 0.0, 1e-4};
    CheckResult fmd{"fmd_vs_rmd", lr.size() + mlp.size(), 0.0, 1e-10};
    const auto run = [&](const std::vector<detail::CheckInstance>& set, CheckResult& vs_fd) {
        for (const auto& c : set) {
            const auto rmd = detail::reverse(c.problem, c.w0, c.eta, c.T, s.corrupt);
            vs_fd.max_error = std::max(vs_fd.max_error, relative_error(rmd, fd_hypergrad(c.problem, c.w0, c.eta, c.T)));
            fmd.max_error = std::max(fmd.max_error, relative_error(fmd_hypergrad(c.problem, c.w0, c.eta, c.T), rmd));
        }
    };
    run(lr, fd_lr);
    run(mlp, fd_mlp);
    out.push_back(fd_lr);
    out.push_back(fd_mlp);
    out.push_back(fmd);

    // strongly convex LR + L2, trained until the gradient is numerically zero
    CheckResult imp{"implicit_vs_rmd", s.implicit_instances, 0.0, 1e-3};
    for (std::size_t i = 0; i < s.implicit_instances; ++i) {
        const auto spec = ModelSpec::logistic(detail::between(rng, 2, 6));
        auto c = detail::random_instance(rng, spec, RegSpec::l2(rng.uniform(-1.5, 0.0)), detail::between(rng, 20, 40),
                                         detail::between(rng, 1, 3), 1.0, 0);
        ParamVector w = c.w0;
        ParamVector g(w.size());
        std::size_t T = 0;
        for (; T < 200000; ++T) {
            c.problem.train_grad(w, g);
            if (norm(g, NormKind::L2) <= 1e-9) break;
            axpy(-c.eta, g, w);
        }
        ImplicitOptions opts;
        opts.stationarity_tol = 1e-8;
        const auto implicit = implicit_hypergrad(c.problem, w, opts);
        const auto rmd = detail::reverse(c.problem, c.w0, c.eta, std::max<std::size_t>(T, 1), s.corrupt);
        imp.max_error = std::max(imp.max_error, relative_error(rmd, implicit.grad));
    }
    out.push_back(imp);
    return out;
}

} // namespace hyperpoison

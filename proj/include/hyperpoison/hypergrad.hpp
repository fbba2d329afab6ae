#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include "hyperpoison/numerics.hpp"
#include "hyperpoison/problem.hpp"

namespace hyperpoison {

enum class Engine { Rmd, Fmd, Implicit, FiniteDifference };

inline std::string_view engine_name(Engine e) {
    switch (e) {
    case Engine::Rmd: return "rmd";
    case Engine::Fmd: return "fmd";
    case Engine::Implicit: return "implicit";
    case Engine::FiniteDifference: return "fd";
    }
    return "?";
}

/// dA/dX_p and dA/dLambda.
struct Hypergrad {
    Matrix d_poison;
    Vector d_lambda;
    Engine engine = Engine::Rmd;
    std::size_t T_used = 0;
};

/// Largest entry-wise difference over the largest entry of `reference`, taken
/// jointly over the poison and lambda blocks.
inline double relative_error(const Hypergrad& a, const Hypergrad& reference) {
    double diff = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < a.d_poison.size(); ++i) {
        diff = std::max(diff, std::abs(a.d_poison.flat()[i] - reference.d_poison.flat()[i]));
        scale = std::max(scale, std::abs(reference.d_poison.flat()[i]));
    }
    for (std::size_t i = 0; i < a.d_lambda.size(); ++i) {
        diff = std::max(diff, std::abs(a.d_lambda[i] - reference.d_lambda[i]));
        scale = std::max(scale, std::abs(reference.d_lambda[i]));
    }
    if (scale == 0.0) return diff;
    return diff / scale;
}

template <BilevelProblem P>
TrainTrace unroll(const P& problem, ParamVector w0, double eta, std::size_t T) {
    if (w0.size() != problem.param_dim()) throw ShapeError("unroll: w0 length mismatch");
    TrainTrace trace;
    trace.eta = eta;
    trace.states.reserve(T + 1);
    trace.states.push_back(w0);
    ParamVector g(w0.size());
    for (std::size_t t = 0; t < T; ++t) {
        problem.train_grad(w0, g);
        if (!all_finite(g)) throw NumericalError("unroll: non-finite gradient at forward iteration " + std::to_string(t));
        axpy(-eta, g, w0);
        trace.states.push_back(w0);
    }
    return trace;
}

/// Runs T plain gradient steps without recording the states.
template <BilevelProblem P>
ParamVector train_final(const P& problem, ParamVector w, double eta, std::size_t T) {
    ParamVector g(w.size());
    for (std::size_t t = 0; t < T; ++t) {
        problem.train_grad(w, g);
        if (!all_finite(g)) throw NumericalError("train: non-finite gradient at iteration " + std::to_string(t));
        axpy(-eta, g, w);
    }
    return w;
}

struct RmdResult {
    Hypergrad grad;
    ParamVector w_final;
    double outer_value = 0.0;
};

/// Reverse-mode hypergradient of A(w(T)) through T unrolled gradient steps.
/// Stores all states; the backward sweep uses only Hessian-vector and mixed
/// products.
template <BilevelProblem P>
RmdResult rmd_hypergrad(const P& problem, ParamVector w0, double eta, std::size_t T) {
    if (T < 1) throw std::invalid_argument("rmd_hypergrad: T must be at least 1");
    const TrainTrace trace = unroll(problem, std::move(w0), eta, T);
    const ParamVector& wT = trace.states.back();

    ParamVector dw(problem.param_dim());
    problem.outer_grad(wT, dw);
    if (!all_finite(dw)) throw NumericalError("rmd_hypergrad: non-finite outer gradient");

    const Matrix xp = problem.poison();
    Hypergrad hg;
    hg.engine = Engine::Rmd;
    hg.T_used = T;
    hg.d_poison = Matrix(xp.rows(), xp.cols());
    hg.d_lambda.assign(problem.lambda_dim(), 0.0);

    for (std::size_t t = T; t-- > 0;) {
        const ReverseProducts prods = problem.reverse_products(trace.states[t], dw);
        axpy(-eta, prods.poison.flat(), hg.d_poison.flat());
        axpy(-eta, prods.lambda, hg.d_lambda);
        axpy(-eta, prods.hv, dw);
        if (!all_finite(dw)) {
            throw NumericalError("rmd_hypergrad: non-finite adjoint at backward iteration " + std::to_string(t));
        }
    }
    const Vector direct = problem.outer_lambda_partial(wT);
    axpy(1.0, direct, hg.d_lambda);

    RmdResult res;
    res.outer_value = problem.outer_loss(wT);
    res.grad = std::move(hg);
    res.w_final = wT;
    return res;
}

/// Forward-mode hypergradient: carries dw(t)/d(X_p, Lambda) column by column
/// alongside training. Cost grows with the outer dimension, hence the cap.
template <BilevelProblem P>
Hypergrad fmd_hypergrad(const P& problem, ParamVector w0, double eta, std::size_t T, std::size_t outer_dim_cap = 64) {
    if (T < 1) throw std::invalid_argument("fmd_hypergrad: T must be at least 1");
    const Matrix xp = problem.poison();
    const std::size_t np_m = xp.size();
    const std::size_t h = problem.lambda_dim();
    const std::size_t k = np_m + h;
    if (k > outer_dim_cap) {
        throw std::invalid_argument("fmd_hypergrad: outer dimension " + std::to_string(k) + " exceeds cap " +
                                    std::to_string(outer_dim_cap) + "; use rmd_hypergrad");
    }
    const std::size_t d = problem.param_dim();
    std::vector<ParamVector> Z(k, ParamVector(d, 0.0)); // w(0) does not depend on the outer variables
    ParamVector w = std::move(w0);
    ParamVector g(d);
    Matrix xdot(xp.rows(), xp.cols());
    Vector ldot(h, 0.0);

    for (std::size_t t = 0; t < T; ++t) {
        std::vector<ParamVector> next(k);
        for (std::size_t c = 0; c < k; ++c) {
            std::fill(xdot.flat().begin(), xdot.flat().end(), 0.0);
            std::fill(ldot.begin(), ldot.end(), 0.0);
            if (c < np_m) {
                xdot.flat()[c] = 1.0;
            } else {
                ldot[c - np_m] = 1.0;
            }
            const ParamVector tangent = problem.grad_tangent(w, Z[c], &xdot, ldot);
            next[c] = Z[c];
            axpy(-eta, tangent, next[c]);
        }
        problem.train_grad(w, g);
        if (!all_finite(g)) throw NumericalError("fmd_hypergrad: non-finite gradient at iteration " + std::to_string(t));
        axpy(-eta, g, w);
        Z = std::move(next);
    }

    ParamVector dA(d);
    problem.outer_grad(w, dA);
    Hypergrad hg;
    hg.engine = Engine::Fmd;
    hg.T_used = T;
    hg.d_poison = Matrix(xp.rows(), xp.cols());
    hg.d_lambda.assign(h, 0.0);
    for (std::size_t c = 0; c < np_m; ++c) hg.d_poison.flat()[c] = dot(Z[c], dA);
    for (std::size_t j = 0; j < h; ++j) hg.d_lambda[j] = dot(Z[np_m + j], dA);
    axpy(1.0, problem.outer_lambda_partial(w), hg.d_lambda);
    return hg;
}

struct ImplicitOptions {
    CgOptions cg;
    double stationarity_tol = 1e-6; ///< on ||grad_w L(w*)||_2
};

struct ImplicitResult {
    Hypergrad grad;
    bool cg_converged = false;
    std::size_t cg_iterations = 0;
};

/// Stationarity threshold 1e-6 (1 + ||grad_w L(w_ref)||).
template <BilevelProblem P>
double default_stationarity_tol(const P& problem, std::span<const double> w_ref) {
    ParamVector g(problem.param_dim());
    problem.train_grad(w_ref, g);
    return 1e-6 * (1.0 + norm(g, NormKind::L2));
}

/// Implicit-function hypergradient at a stationary point:
/// solve H v = grad_w A by CG, then return -(mixed products)^T v.
template <BilevelProblem P>
ImplicitResult implicit_hypergrad(const P& problem, std::span<const double> w_star, const ImplicitOptions& opts = {}) {
    const std::size_t d = problem.param_dim();
    ParamVector g(d);
    problem.train_grad(w_star, g);
    const double gnorm = norm(g, NormKind::L2);
    if (gnorm > opts.stationarity_tol) {
        throw std::invalid_argument("implicit_hypergrad: ||grad_w L|| = " + std::to_string(gnorm) +
                                    " exceeds stationarity tolerance " + std::to_string(opts.stationarity_tol));
    }
    ParamVector dA(d);
    problem.outer_grad(w_star, dA);
    const CgResult cg = conjugate_gradient(
        [&](std::span<const double> x, std::span<double> out) {
            const ParamVector hx = problem.hvp(w_star, x);
            std::copy(hx.begin(), hx.end(), out.begin());
        },
        dA, opts.cg);
    const ReverseProducts prods = problem.reverse_products(w_star, cg.x);

    ImplicitResult res;
    res.cg_converged = cg.converged;
    res.cg_iterations = cg.iterations;
    res.grad.engine = Engine::Implicit;
    res.grad.d_poison = prods.poison;
    for (double& x : res.grad.d_poison.flat()) x = -x;
    res.grad.d_lambda = prods.lambda;
    for (double& x : res.grad.d_lambda) x = -x;
    axpy(1.0, problem.outer_lambda_partial(w_star), res.grad.d_lambda);
    return res;
}

/// Central differences of (X_p, Lambda) -> A(w(T)), retraining per probe.
template <BilevelProblem P>
Hypergrad fd_hypergrad(P problem, const ParamVector& w0, double eta, std::size_t T, double step = 1e-5) {
    const auto value = [&](const P& p) { return p.outer_loss(train_final(p, w0, eta, T)); };
    const Matrix xp = problem.poison();
    const Vector lam = problem.lambda();

    Hypergrad hg;
    hg.engine = Engine::FiniteDifference;
    hg.T_used = T;
    hg.d_poison = Matrix(xp.rows(), xp.cols());
    for (std::size_t i = 0; i < xp.size(); ++i) {
        Matrix probe = xp;
        probe.flat()[i] = xp.flat()[i] + step;
        problem.set_poison(probe);
        const double up = value(problem);
        probe.flat()[i] = xp.flat()[i] - step;
        problem.set_poison(probe);
        const double down = value(problem);
        hg.d_poison.flat()[i] = (up - down) / (2.0 * step);
    }
    problem.set_poison(xp);
    hg.d_lambda.assign(lam.size(), 0.0);
    for (std::size_t j = 0; j < lam.size(); ++j) {
        Vector probe = lam;
        probe[j] = lam[j] + step;
        problem.set_lambda(probe);
        const double up = value(problem);
        probe[j] = lam[j] - step;
        problem.set_lambda(probe);
        const double down = value(problem);
        hg.d_lambda[j] = (up - down) / (2.0 * step);
    }
    problem.set_lambda(lam);
    return hg;
}

} // namespace hyperpoison

#pragma once

#include <concepts>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "hyperpoison/model.hpp"
#include "hyperpoison/numerics.hpp"

namespace hyperpoison {

/// An inner training problem L(w; X_p, Lambda) with an outer objective A(w).
/// Hypergradient engines only touch a problem through this surface, so any
/// smooth inner/outer pair (the classifier below, or a closed-form toy) can be
/// differentiated.
template <class P>
concept BilevelProblem = std::copy_constructible<P> &&
    requires(P p, const P cp, std::span<const double> w, std::span<const double> v, std::span<double> out,
             const Matrix& xp) {
        { cp.param_dim() } -> std::convertible_to<std::size_t>;
        { cp.lambda_dim() } -> std::convertible_to<std::size_t>;
        { cp.poison() } -> std::convertible_to<Matrix>;
        { cp.lambda() } -> std::convertible_to<Vector>;
        p.set_poison(xp);
        p.set_lambda(v);
        cp.train_grad(w, out);
        { cp.outer_loss(w) } -> std::convertible_to<double>;
        cp.outer_grad(w, out);
        { cp.outer_lambda_partial(w) } -> std::convertible_to<Vector>;
        { cp.hvp(w, v) } -> std::convertible_to<ParamVector>;
        { cp.reverse_products(w, v) } -> std::convertible_to<ReverseProducts>;
        { cp.grad_tangent(w, v, &xp, v) } -> std::convertible_to<ParamVector>;
    };

/// Classifier trained on a dataset whose rows `poison_rows` hold the poisoning
/// points; the outer objective is the loss on a clean validation set.
class ClassifierProblem {
public:
    ClassifierProblem(ModelSpec spec, Dataset train, std::vector<std::size_t> poison_rows, RegSpec reg,
                      Dataset val, bool outer_includes_reg = false)
        : spec_(std::move(spec)), train_(std::move(train)), rows_(std::move(poison_rows)), reg_(std::move(reg)),
          val_(std::move(val)), outer_includes_reg_(outer_includes_reg) {
        spec_.validate();
        train_.validate();
        val_.validate();
        reg_.validate(spec_);
        check_rows(train_, rows_, "ClassifierProblem");
        if (val_.m() != train_.m()) throw ShapeError("ClassifierProblem: validation width differs from training");
    }

    [[nodiscard]] const ModelSpec& spec() const { return spec_; }
    [[nodiscard]] const Dataset& train() const { return train_; }
    [[nodiscard]] const Dataset& validation() const { return val_; }
    [[nodiscard]] const RegSpec& reg() const { return reg_; }
    [[nodiscard]] std::span<const std::size_t> poison_rows() const { return rows_; }

    [[nodiscard]] std::size_t param_dim() const { return spec_.param_count(); }
    [[nodiscard]] std::size_t lambda_dim() const { return reg_.lambdas.size(); }

    [[nodiscard]] Matrix poison() const {
        Matrix out(rows_.size(), train_.m());
        for (std::size_t r = 0; r < rows_.size(); ++r) {
            const auto src = train_.X.row(rows_[r]);
            std::copy(src.begin(), src.end(), out.row(r).begin());
        }
        return out;
    }
    void set_poison(const Matrix& xp) {
        if (xp.rows() != rows_.size() || xp.cols() != train_.m()) throw ShapeError("set_poison: shape mismatch");
        for (std::size_t r = 0; r < rows_.size(); ++r) {
            const auto src = xp.row(r);
            std::copy(src.begin(), src.end(), train_.X.row(rows_[r]).begin());
        }
    }
    [[nodiscard]] Vector lambda() const { return reg_.lambdas; }
    void set_lambda(std::span<const double> lambdas) {
        if (lambdas.size() != reg_.lambdas.size()) throw ShapeError("set_lambda: length mismatch");
        reg_.lambdas.assign(lambdas.begin(), lambdas.end());
    }

    void train_grad(std::span<const double> w, std::span<double> out) const {
        detail::backprop<double>(spec_, w, train_.X, train_.y, {}, nullptr, out, {});
        add_penalty_grad(spec_, w, reg_, out);
    }
    [[nodiscard]] double train_loss(std::span<const double> w) const { return loss(spec_, w, train_, reg_, true); }

    [[nodiscard]] double outer_loss(std::span<const double> w) const {
        return loss(spec_, w, val_, reg_, outer_includes_reg_);
    }
    void outer_grad(std::span<const double> w, std::span<double> out) const {
        detail::backprop<double>(spec_, w, val_.X, val_.y, {}, nullptr, out, {});
        if (outer_includes_reg_) add_penalty_grad(spec_, w, reg_, out);
    }
    /// Explicit dA/dLambda at fixed w (non-zero only when A carries the penalty).
    [[nodiscard]] Vector outer_lambda_partial(std::span<const double> w) const {
        Vector out(lambda_dim(), 0.0);
        if (!outer_includes_reg_ || !reg_.active()) return out;
        detail::for_each_penalized(spec_, reg_, [&](std::size_t g, std::size_t i) {
            out[g] += reg_.penalty == Penalty::L2 ? 0.5 * w[i] * w[i] : std::abs(w[i]);
        });
        for (std::size_t g = 0; g < out.size(); ++g) out[g] *= reg_.multiplier(g);
        return out;
    }

    [[nodiscard]] ParamVector hvp(std::span<const double> w, std::span<const double> v) const {
        return hvp_w(spec_, w, train_, reg_, v);
    }
    [[nodiscard]] ReverseProducts reverse_products(std::span<const double> w, std::span<const double> v) const {
        return hyperpoison::reverse_products(spec_, w, train_, rows_, reg_, v);
    }
    [[nodiscard]] ParamVector grad_tangent(std::span<const double> w, std::span<const double> w_dot,
                                           const Matrix* poison_dot, std::span<const double> lambda_dot) const {
        return hyperpoison::grad_tangent(spec_, w, train_, rows_, reg_, w_dot, poison_dot, lambda_dot);
    }

private:
    ModelSpec spec_;
    Dataset train_;
    std::vector<std::size_t> rows_;
    RegSpec reg_;
    Dataset val_;
    bool outer_includes_reg_ = false;
};

static_assert(BilevelProblem<ClassifierProblem>);

} // namespace hyperpoison

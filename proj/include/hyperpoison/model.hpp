#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "hyperpoison/error.hpp"
#include "hyperpoison/numerics.hpp"

namespace hyperpoison {

enum class ModelKind { LogisticRegression, Mlp };

/// Binary classifier architecture. Logistic regression is the zero-hidden-layer
/// case of the same feed-forward layout.
struct ModelSpec {
    ModelKind kind = ModelKind::LogisticRegression;
    std::vector<std::size_t> layer_sizes; ///< input m ... output 1
    double leaky_slope = 0.01;

    static ModelSpec logistic(std::size_t m) { return {ModelKind::LogisticRegression, {m, 1}, 0.01}; }
    static ModelSpec mlp(std::vector<std::size_t> sizes, double slope = 0.01) {
        return {ModelKind::Mlp, std::move(sizes), slope};
    }

    void validate() const {
        if (layer_sizes.size() < 2 || layer_sizes.back() != 1) {
            throw ShapeError("ModelSpec: layer_sizes must run from the input width to a single output");
        }
        for (auto s : layer_sizes) {
            if (s == 0) throw ShapeError("ModelSpec: zero-width layer");
        }
        if (kind == ModelKind::LogisticRegression && layer_sizes.size() != 2) {
            throw ShapeError("ModelSpec: logistic regression takes layer_sizes = [m, 1]");
        }
        if (kind == ModelKind::Mlp) {
            if (layer_sizes.size() < 3) throw ShapeError("ModelSpec: MLP needs at least one hidden layer");
            if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ShapeError("ModelSpec: leaky_slope must lie in (0, 1)");
        }
    }

    [[nodiscard]] std::size_t input_dim() const { return layer_sizes.front(); }
    [[nodiscard]] std::size_t num_layers() const { return layer_sizes.size() - 1; }
    [[nodiscard]] std::size_t param_count() const {
        std::size_t d = 0;
        for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) d += layer_sizes[l + 1] * (layer_sizes[l] + 1);
        return d;
    }
};

/// Where one layer's weight matrix (out x in, row-major) and bias live in the
/// flat parameter vector.
struct LayerSpan {
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;

    [[nodiscard]] std::size_t weight_count() const { return fan_in * fan_out; }
    [[nodiscard]] std::size_t end() const { return bias_offset + fan_out; }
};

/// Flat parameters are laid out [W0, b0, W1, b1, ...].
inline std::vector<LayerSpan> param_layout(const ModelSpec& spec) {
    std::vector<LayerSpan> out;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
        LayerSpan s;
        s.fan_in = spec.layer_sizes[l];
        s.fan_out = spec.layer_sizes[l + 1];
        s.weight_offset = off;
        s.bias_offset = off + s.weight_count();
        off = s.end();
        out.push_back(s);
    }
    return out;
}

using ParamVector = Vector;

enum class Penalty { None, L2, L1 };
enum class Grouping { Single, PerLayer };

/// Regularizer with log-scale strengths: group g contributes scale * e^{lambda_g} * pen(w_g).
struct RegSpec {
    Penalty penalty = Penalty::None;
    Grouping grouping = Grouping::Single;
    Vector lambdas;
    bool include_bias = false;
    double scale = 1.0; ///< constant factor on every group's multiplier (e.g. 1/n_tr)

    static RegSpec none() { return {}; }
    static RegSpec l2(double lambda) { return {Penalty::L2, Grouping::Single, {lambda}, false}; }
    static RegSpec l1(double lambda) { return {Penalty::L1, Grouping::Single, {lambda}, false}; }

    [[nodiscard]] bool active() const { return penalty != Penalty::None; }
    [[nodiscard]] double multiplier(std::size_t g) const { return scale * std::exp(lambdas[g]); }

    [[nodiscard]] std::size_t group_count(const ModelSpec& spec) const {
        if (!active()) return 0;
        return grouping == Grouping::Single ? 1 : spec.num_layers();
    }
    [[nodiscard]] std::size_t group_of_layer(std::size_t layer) const {
        return grouping == Grouping::Single ? 0 : layer;
    }

    void validate(const ModelSpec& spec) const {
        if (!active()) {
            if (!lambdas.empty()) throw ShapeError("RegSpec: no penalty but lambdas given");
            return;
        }
        if (lambdas.size() != group_count(spec)) {
            throw ShapeError("RegSpec: expected " + std::to_string(group_count(spec)) + " lambdas, got " +
                             std::to_string(lambdas.size()));
        }
        if (!all_finite(lambdas)) throw ShapeError("RegSpec: non-finite lambda");
        if (!(scale > 0.0 && std::isfinite(scale))) throw ShapeError("RegSpec: scale must be positive");
    }
};

struct Dataset {
    Matrix X;
    Vector y;       ///< 0 or 1
    Box bounds;     ///< per-feature feasible range

    [[nodiscard]] std::size_t n() const { return X.rows(); }
    [[nodiscard]] std::size_t m() const { return X.cols(); }

    void validate() const {
        if (X.rows() != y.size()) throw ShapeError("Dataset: label count does not match rows");
        for (double v : y) {
            if (v != 0.0 && v != 1.0) throw ShapeError("Dataset: labels must be 0 or 1");
        }
    }
};

/// Recorded parameter states w(0..T) of an unrolled run.
struct TrainTrace {
    std::vector<ParamVector> states;
    double eta = 0.0;
};

namespace detail {

/// First-order forward-mode number a + b*eps.
struct Dual {
    double v = 0.0;
    double d = 0.0;
    constexpr Dual() = default;
    constexpr Dual(double value, double tangent = 0.0) : v(value), d(tangent) {}
    Dual& operator+=(Dual o) { v += o.v; d += o.d; return *this; }
    Dual& operator-=(Dual o) { v -= o.v; d -= o.d; return *this; }
};
inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.v * b.d + a.d * b.v}; }
inline Dual operator*(double a, Dual b) { return {a * b.v, a * b.d}; }
inline Dual operator*(Dual a, double b) { return {a.v * b, a.d * b}; }

inline double value_of(double x) { return x; }
inline double value_of(Dual x) { return x.v; }

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}
inline Dual sigmoid(Dual z) {
    const double s = sigmoid(z.v);
    return {s, s * (1.0 - s) * z.d};
}

template <class T>
T leaky(T z, double slope) {
    return value_of(z) > 0.0 ? z : slope * z;
}
inline double leaky_slope_at(double zv, double slope) { return zv > 0.0 ? 1.0 : slope; }

/// max(z,0) - z*y + log(1 + e^{-|z|})
inline double bce_with_logit(double z, double y) {
    return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

/// Gradient of the mean data loss with respect to the parameters, and with
/// respect to the inputs of `input_rows`. With T = Dual, w carries a tangent
/// and `input_tangent` (one row per entry of input_rows, may be null) seeds
/// the inputs, so the tangent part of the result is the directional
/// derivative of both gradients.
template <class T>
void backprop(const ModelSpec& spec, std::span<const T> w, const Matrix& X, std::span<const double> y,
              std::span<const std::size_t> input_rows, const Matrix* input_tangent, std::span<T> grad_w,
              std::span<T> grad_inputs) {
    const auto layout = param_layout(spec);
    const std::size_t n = X.rows();
    const std::size_t m = X.cols();
    const std::size_t L = layout.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    // activations[l] is n x fan_in(l); the input layer reads X directly and
    // adds the input tangent of seeded rows separately
    std::vector<std::vector<T>> acts(L);
    std::vector<std::vector<T>> pre(L);
    std::vector<const double*> x_dot;
    if constexpr (std::is_same_v<T, Dual>) {
        if (input_tangent != nullptr) {
            x_dot.assign(n, nullptr);
            for (std::size_t r = 0; r < input_rows.size(); ++r) x_dot[input_rows[r]] = input_tangent->row(r).data();
        }
    }
    const auto tangent_row = [&](std::size_t i) -> const double* { return x_dot.empty() ? nullptr : x_dot[i]; };

    for (std::size_t l = 0; l < L; ++l) {
        const auto& s = layout[l];
        const T* W = w.data() + s.weight_offset;
        const T* b = w.data() + s.bias_offset;
        pre[l].assign(n * s.fan_out, T(0.0));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t o = 0; o < s.fan_out; ++o) {
                const T* wr = W + o * s.fan_in;
                T acc = b[o];
                if (l == 0) {
                    const double* x = X.flat().data() + i * m;
                    for (std::size_t k = 0; k < m; ++k) acc += x[k] * wr[k];
                    if constexpr (std::is_same_v<T, Dual>) {
                        if (const double* xd = tangent_row(i)) {
                            for (std::size_t k = 0; k < m; ++k) acc.d += xd[k] * wr[k].v;
                        }
                    }
                } else {
                    const T* a = acts[l].data() + i * s.fan_in;
                    for (std::size_t k = 0; k < s.fan_in; ++k) acc += a[k] * wr[k];
                }
                pre[l][i * s.fan_out + o] = acc;
            }
        }
        if (l + 1 < L) {
            acts[l + 1].resize(n * s.fan_out);
            for (std::size_t i = 0; i < n * s.fan_out; ++i) acts[l + 1][i] = leaky(pre[l][i], spec.leaky_slope);
        }
    }

    std::vector<T> delta(n);
    for (std::size_t i = 0; i < n; ++i) delta[i] = (sigmoid(pre[L - 1][i]) - T(y[i])) * inv_n;

    for (std::size_t l = L; l-- > 0;) {
        const auto& s = layout[l];
        const T* W = w.data() + s.weight_offset;
        T* gW = grad_w.data() + s.weight_offset;
        T* gb = grad_w.data() + s.bias_offset;
        for (std::size_t o = 0; o < s.fan_out; ++o) {
            T* grow = gW + o * s.fan_in;
            for (std::size_t k = 0; k < s.fan_in; ++k) grow[k] = T(0.0);
            gb[o] = T(0.0);
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t o = 0; o < s.fan_out; ++o) {
                const T dl = delta[i * s.fan_out + o];
                T* grow = gW + o * s.fan_in;
                if (l == 0) {
                    const double* x = X.flat().data() + i * m;
                    for (std::size_t k = 0; k < m; ++k) grow[k] += dl * x[k];
                    if constexpr (std::is_same_v<T, Dual>) {
                        if (const double* xd = tangent_row(i)) {
                            for (std::size_t k = 0; k < m; ++k) grow[k].d += dl.v * xd[k];
                        }
                    }
                } else {
                    const T* a = acts[l].data() + i * s.fan_in;
                    for (std::size_t k = 0; k < s.fan_in; ++k) grow[k] += dl * a[k];
                }
                gb[o] += dl;
            }
        }
        if (l > 0) {
            std::vector<T> next(n * s.fan_in, T(0.0));
            for (std::size_t i = 0; i < n; ++i) {
                T* nrow = next.data() + i * s.fan_in;
                for (std::size_t o = 0; o < s.fan_out; ++o) {
                    const T dl = delta[i * s.fan_out + o];
                    const T* wr = W + o * s.fan_in;
                    for (std::size_t k = 0; k < s.fan_in; ++k) nrow[k] += dl * wr[k];
                }
                const T* z = pre[l - 1].data() + i * s.fan_in;
                for (std::size_t k = 0; k < s.fan_in; ++k) {
                    nrow[k] = nrow[k] * leaky_slope_at(value_of(z[k]), spec.leaky_slope);
                }
            }
            delta = std::move(next);
        } else if (!grad_inputs.empty()) {
            for (std::size_t r = 0; r < input_rows.size(); ++r) {
                const std::size_t i = input_rows[r];
                T* g = grad_inputs.data() + r * m;
                for (std::size_t k = 0; k < m; ++k) g[k] = T(0.0);
                for (std::size_t o = 0; o < s.fan_out; ++o) {
                    const T dl = delta[i * s.fan_out + o];
                    const T* wr = W + o * s.fan_in;
                    for (std::size_t k = 0; k < m; ++k) g[k] += dl * wr[k];
                }
            }
        }
    }
}

inline void check_params(const ModelSpec& spec, std::span<const double> w, const char* who) {
    if (w.size() != spec.param_count()) {
        throw ShapeError(std::string(who) + ": parameter vector has length " + std::to_string(w.size()) +
                         ", model needs " + std::to_string(spec.param_count()));
    }
}

inline void check_inputs(const ModelSpec& spec, const Matrix& X, const char* who) {
    if (X.cols() != spec.input_dim()) {
        throw ShapeError(std::string(who) + ": input width " + std::to_string(X.cols()) + " != model input " +
                         std::to_string(spec.input_dim()));
    }
}

inline double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

/// Calls f(group, index) for every penalized parameter.
template <class F>
void for_each_penalized(const ModelSpec& spec, const RegSpec& reg, F&& f) {
    const auto layout = param_layout(spec);
    for (std::size_t l = 0; l < layout.size(); ++l) {
        const std::size_t g = reg.group_of_layer(l);
        const auto& s = layout[l];
        for (std::size_t i = s.weight_offset; i < s.bias_offset; ++i) f(g, i);
        if (reg.include_bias) {
            for (std::size_t i = s.bias_offset; i < s.end(); ++i) f(g, i);
        }
    }
}

} // namespace detail

/// Raw output logits (pre-sigmoid).
inline Vector logits(const ModelSpec& spec, std::span<const double> w, const Matrix& X) {
    detail::check_params(spec, w, "forward");
    detail::check_inputs(spec, X, "forward");
    const auto layout = param_layout(spec);
    Vector a(X.flat().begin(), X.flat().end());
    std::size_t width = X.cols();
    for (std::size_t l = 0; l < layout.size(); ++l) {
        const auto& s = layout[l];
        Vector z(X.rows() * s.fan_out);
        for (std::size_t i = 0; i < X.rows(); ++i) {
            for (std::size_t o = 0; o < s.fan_out; ++o) {
                double acc = w[s.bias_offset + o];
                for (std::size_t k = 0; k < width; ++k) acc += a[i * width + k] * w[s.weight_offset + o * width + k];
                z[i * s.fan_out + o] = l + 1 < layout.size() ? detail::leaky(acc, spec.leaky_slope) : acc;
            }
        }
        a = std::move(z);
        width = s.fan_out;
    }
    return a;
}

/// Per-row probability of class 1.
inline Vector forward(const ModelSpec& spec, std::span<const double> w, const Matrix& X) {
    Vector p = logits(spec, w, X);
    for (double& v : p) v = detail::sigmoid(v);
    return p;
}

/// sum_g e^{lambda_g} * pen(w_g)
inline double penalty_value(const ModelSpec& spec, std::span<const double> w, const RegSpec& reg) {
    if (!reg.active()) return 0.0;
    Vector per_group(reg.group_count(spec), 0.0);
    detail::for_each_penalized(spec, reg, [&](std::size_t g, std::size_t i) {
        per_group[g] += reg.penalty == Penalty::L2 ? 0.5 * w[i] * w[i] : std::abs(w[i]);
    });
    double total = 0.0;
    for (std::size_t g = 0; g < per_group.size(); ++g) total += reg.multiplier(g) * per_group[g];
    return total;
}

/// Mean binary cross-entropy, plus the penalty (once) when include_reg.
inline double loss(const ModelSpec& spec, std::span<const double> w, const Dataset& data, const RegSpec& reg,
                   bool include_reg) {
    detail::check_params(spec, w, "loss");
    detail::check_inputs(spec, data.X, "loss");
    const Vector z = logits(spec, w, data.X);
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) acc += detail::bce_with_logit(z[i], data.y[i]);
    double out = acc / static_cast<double>(data.n());
    if (include_reg) out += penalty_value(spec, w, reg);
    return out;
}

inline void add_penalty_grad(const ModelSpec& spec, std::span<const double> w, const RegSpec& reg,
                             std::span<double> out) {
    if (!reg.active()) return;
    detail::for_each_penalized(spec, reg, [&](std::size_t g, std::size_t i) {
        const double scale = reg.multiplier(g);
        out[i] += scale * (reg.penalty == Penalty::L2 ? w[i] : detail::sign0(w[i]));
    });
}

/// Penalty Hessian times v: e^{lambda_g} v_g for L2, zero for L1.
inline void add_penalty_hvp(const ModelSpec& spec, const RegSpec& reg, std::span<const double> v,
                            std::span<double> out) {
    if (reg.penalty != Penalty::L2) return;
    detail::for_each_penalized(spec, reg,
                               [&](std::size_t g, std::size_t i) { out[i] += reg.multiplier(g) * v[i]; });
}

inline ParamVector grad_w(const ModelSpec& spec, std::span<const double> w, const Dataset& data, const RegSpec& reg,
                          bool include_reg) {
    detail::check_params(spec, w, "grad_w");
    detail::check_inputs(spec, data.X, "grad_w");
    ParamVector g(w.size());
    detail::backprop<double>(spec, w, data.X, data.y, {}, nullptr, g, {});
    if (include_reg) add_penalty_grad(spec, w, reg, g);
    return g;
}

/// Products of the training-loss second derivatives with a parameter-space
/// vector v, from one forward-over-reverse pass.
struct ReverseProducts {
    ParamVector hv;    ///< (grad^2_w L) v, penalty included
    Matrix poison;     ///< (grad_Xp grad_w L)^T v, one row per poison row
    Vector lambda;     ///< (grad_Lambda grad_w L)^T v
};

inline Vector mixed_hvp_lambda(const ModelSpec& spec, std::span<const double> w, const RegSpec& reg,
                               std::span<const double> v) {
    if (!reg.active()) throw std::invalid_argument("mixed_hvp_lambda: regularization is off");
    detail::check_params(spec, w, "mixed_hvp_lambda");
    if (v.size() != w.size()) throw ShapeError("mixed_hvp_lambda: v length mismatch");
    Vector out(reg.group_count(spec), 0.0);
    detail::for_each_penalized(spec, reg, [&](std::size_t g, std::size_t i) {
        out[g] += (reg.penalty == Penalty::L2 ? w[i] : detail::sign0(w[i])) * v[i];
    });
    for (std::size_t g = 0; g < out.size(); ++g) out[g] *= reg.multiplier(g);
    return out;
}

inline void check_rows(const Dataset& data, std::span<const std::size_t> rows, const char* who) {
    for (auto r : rows) {
        if (r >= data.n()) {
            throw std::out_of_range(std::string(who) + ": row index " + std::to_string(r) + " out of range (n=" +
                                    std::to_string(data.n()) + ")");
        }
    }
}

inline ReverseProducts reverse_products(const ModelSpec& spec, std::span<const double> w, const Dataset& train,
                                        std::span<const std::size_t> poison_rows, const RegSpec& reg,
                                        std::span<const double> v) {
    detail::check_params(spec, w, "reverse_products");
    detail::check_inputs(spec, train.X, "reverse_products");
    if (v.size() != w.size()) throw ShapeError("reverse_products: v length mismatch");
    check_rows(train, poison_rows, "reverse_products");
    using detail::Dual;
    std::vector<Dual> wd(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) wd[i] = Dual(w[i], v[i]);
    std::vector<Dual> gw(w.size());
    std::vector<Dual> gx(poison_rows.size() * train.m());
    detail::backprop<Dual>(spec, wd, train.X, train.y, poison_rows, nullptr, gw, gx);

    ReverseProducts out;
    out.hv.resize(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) out.hv[i] = gw[i].d;
    add_penalty_hvp(spec, reg, v, out.hv);
    out.poison = Matrix(poison_rows.size(), train.m());
    for (std::size_t i = 0; i < gx.size(); ++i) out.poison.flat()[i] = gx[i].d;
    if (reg.active()) out.lambda = mixed_hvp_lambda(spec, w, reg, v);
    return out;
}

inline ParamVector hvp_w(const ModelSpec& spec, std::span<const double> w, const Dataset& data, const RegSpec& reg,
                         std::span<const double> v) {
    detail::check_params(spec, w, "hvp_w");
    detail::check_inputs(spec, data.X, "hvp_w");
    if (v.size() != w.size()) throw ShapeError("hvp_w: v length mismatch");
    using detail::Dual;
    std::vector<Dual> wd(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) wd[i] = Dual(w[i], v[i]);
    std::vector<Dual> gw(w.size());
    detail::backprop<Dual>(spec, wd, data.X, data.y, {}, nullptr, gw, {});
    ParamVector out(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = gw[i].d;
    add_penalty_hvp(spec, reg, v, out);
    return out;
}

/// d/dX_p of v^T grad_w L, rows ordered as poison_rows. The penalty does not
/// depend on the data, so no RegSpec is needed.
inline Matrix mixed_hvp_poison(const ModelSpec& spec, std::span<const double> w, const Dataset& train,
                               std::span<const std::size_t> poison_rows, std::span<const double> v) {
    return reverse_products(spec, w, train, poison_rows, RegSpec::none(), v).poison;
}

/// Directional derivative of grad_w L (penalty included) along
/// (w_dot, X_p dot, Lambda dot). Used by forward-mode hypergradients.
inline ParamVector grad_tangent(const ModelSpec& spec, std::span<const double> w, const Dataset& train,
                                std::span<const std::size_t> poison_rows, const RegSpec& reg,
                                std::span<const double> w_dot, const Matrix* poison_dot,
                                std::span<const double> lambda_dot) {
    using detail::Dual;
    std::vector<Dual> wd(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) wd[i] = Dual(w[i], w_dot[i]);
    std::vector<Dual> gw(w.size());
    detail::backprop<Dual>(spec, wd, train.X, train.y, poison_rows, poison_dot, gw, {});
    ParamVector out(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = gw[i].d;
    add_penalty_hvp(spec, reg, w_dot, out);
    if (reg.active() && !lambda_dot.empty()) {
        detail::for_each_penalized(spec, reg, [&](std::size_t g, std::size_t i) {
            const double base = reg.penalty == Penalty::L2 ? w[i] : detail::sign0(w[i]);
            out[i] += reg.multiplier(g) * base * lambda_dot[g];
        });
    }
    return out;
}

struct TrainResult {
    ParamVector w;
    std::optional<TrainTrace> trace;
};

/// T full-batch gradient-descent steps on the regularized training loss.
inline TrainResult sgd_train(const ModelSpec& spec, const Dataset& data, const RegSpec& reg, ParamVector w0,
                             double eta, std::size_t T, bool record_trace = false) {
    if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("sgd_train: eta must lie in (0, 1]");
    detail::check_params(spec, w0, "sgd_train");
    TrainResult res;
    if (record_trace) {
        res.trace.emplace();
        res.trace->eta = eta;
        res.trace->states.reserve(T + 1);
        res.trace->states.push_back(w0);
    }
    ParamVector g(w0.size());
    for (std::size_t t = 0; t < T; ++t) {
        detail::backprop<double>(spec, w0, data.X, data.y, {}, nullptr, g, {});
        add_penalty_grad(spec, w0, reg, g);
        if (!all_finite(g)) throw NumericalError("sgd_train: non-finite gradient at iteration " + std::to_string(t));
        axpy(-eta, g, w0);
        if (record_trace) res.trace->states.push_back(w0);
    }
    res.w = std::move(w0);
    return res;
}

enum class InitScheme { Zeros, Xavier };

/// Zeros, or Glorot-uniform weights with every bias set to 1e-2.
inline ParamVector init_params(const ModelSpec& spec, InitScheme scheme, Rng* rng = nullptr) {
    ParamVector w(spec.param_count(), 0.0);
    if (scheme == InitScheme::Zeros) return w;
    if (rng == nullptr) throw std::invalid_argument("init_params: xavier needs an Rng");
    for (const auto& s : param_layout(spec)) {
        const double bound = std::sqrt(6.0 / static_cast<double>(s.fan_in + s.fan_out));
        for (std::size_t i = 0; i < s.weight_count(); ++i) w[s.weight_offset + i] = rng->uniform(-bound, bound);
        for (std::size_t i = 0; i < s.fan_out; ++i) w[s.bias_offset + i] = 1e-2;
    }
    return w;
}

} // namespace hyperpoison

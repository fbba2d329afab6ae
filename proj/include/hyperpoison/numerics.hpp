#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hyperpoison/error.hpp"

namespace hyperpoison {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, Vector data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("Matrix: data length " + std::to_string(data_.size()) + " != " +
                             std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<double> flat() noexcept { return data_; }
    [[nodiscard]] std::span<const double> flat() const noexcept { return data_; }
    [[nodiscard]] const Vector& data() const noexcept { return data_; }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vector data_;
};

/// Plain i-k-j product; each output entry accumulates left to right over k.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto orow = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

enum class NormKind { L1, L2, L2Squared };

inline double norm(std::span<const double> v, NormKind kind) {
    double acc = 0.0;
    switch (kind) {
    case NormKind::L1:
        for (double x : v) acc += std::abs(x);
        return acc;
    case NormKind::L2:
        for (double x : v) acc += x * x;
        return std::sqrt(acc);
    case NormKind::L2Squared:
        for (double x : v) acc += x * x;
        return acc;
    }
    return acc;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// Element-wise box bounds; a bound vector of length 1 broadcasts.
struct Box {
    Vector lo;
    Vector hi;

    static Box scalar(double lo, double hi) { return Box{{lo}, {hi}}; }
    static Box uniform(std::size_t n, double lo, double hi) { return Box{Vector(n, lo), Vector(n, hi)}; }

    [[nodiscard]] double lo_at(std::size_t i) const { return lo.size() == 1 ? lo[0] : lo[i]; }
    [[nodiscard]] double hi_at(std::size_t i) const { return hi.size() == 1 ? hi[0] : hi[i]; }
    [[nodiscard]] bool contains(std::span<const double> x) const {
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i] < lo_at(i) || x[i] > hi_at(i)) return false;
        }
        return true;
    }
};

inline void clip_inplace(std::span<double> x, const Box& box) {
    const auto check = [&](const Vector& b) {
        if (b.size() != 1 && b.size() != x.size()) throw ShapeError("clip: bound length mismatch");
    };
    check(box.lo);
    check(box.hi);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lo = box.lo_at(i);
        const double hi = box.hi_at(i);
        if (lo > hi) throw std::invalid_argument("clip: lo > hi at index " + std::to_string(i));
        x[i] = std::min(std::max(x[i], lo), hi);
    }
}

inline Vector clip_elementwise(std::span<const double> x, const Box& box) {
    Vector out(x.begin(), x.end());
    clip_inplace(out, box);
    return out;
}

inline Vector clip_elementwise(std::span<const double> x, double lo, double hi) {
    return clip_elementwise(x, Box::scalar(lo, hi));
}

struct CgOptions {
    double tol = 1e-10;          ///< relative residual ||r|| / ||b||
    std::size_t max_iters = 0;   ///< 0 means 10 * dim
    double damping = 0.0;
};

struct CgResult {
    Vector x;
    bool converged = false;
    std::size_t iterations = 0;
    double relative_residual = 0.0;
};

/// Solves (A + damping I) x = b for symmetric positive-definite A given only
/// as a product `apply(x, out)`. Returns the last iterate with converged=false
/// when the budget runs out.
template <class ApplyFn>
CgResult conjugate_gradient(ApplyFn&& apply, std::span<const double> b, const CgOptions& opts = {}) {
    const std::size_t n = b.size();
    const std::size_t max_iters = opts.max_iters ? opts.max_iters : 10 * std::max<std::size_t>(n, 1);
    if (!all_finite(b)) throw NumericalError("conjugate_gradient: non-finite right-hand side");

    CgResult res;
    res.x.assign(n, 0.0);
    const double bnorm = norm(b, NormKind::L2);
    if (bnorm == 0.0) {
        res.converged = true;
        return res;
    }
    Vector r(b.begin(), b.end());
    Vector p = r;
    Vector ap(n);
    double rr = dot(r, r);
    const double target = opts.tol * bnorm;

    const auto apply_damped = [&](std::span<const double> x, std::span<double> out) {
        apply(x, out);
        if (opts.damping != 0.0) axpy(opts.damping, x, out);
    };

    for (std::size_t it = 0; it < max_iters; ++it) {
        apply_damped(p, ap);
        const double pap = dot(p, ap);
        if (!std::isfinite(pap) || pap <= 0.0) {
            throw NumericalError("conjugate_gradient: operator not positive definite at iteration " +
                                 std::to_string(it));
        }
        const double alpha = rr / pap;
        axpy(alpha, p, res.x);
        axpy(-alpha, ap, r);
        const double rr_new = dot(r, r);
        if (!std::isfinite(rr_new)) {
            throw NumericalError("conjugate_gradient: non-finite residual at iteration " + std::to_string(it));
        }
        res.iterations = it + 1;
        if (std::sqrt(rr_new) <= target) {
            rr = rr_new;
            res.converged = true;
            break;
        }
        const double beta = rr_new / rr;
        for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
        rr = rr_new;
    }
    // recurrence residual drifts; report the true one
    Vector ax(n);
    apply_damped(res.x, ax);
    double rn = 0.0;
    for (std::size_t i = 0; i < n; ++i) rn += (b[i] - ax[i]) * (b[i] - ax[i]);
    res.relative_residual = std::sqrt(rn) / bnorm;
    return res;
}

/// xoshiro256** 1.0 seeded through splitmix64. Streams for distinct purposes
/// are derived from (seed, label) so that adding a consumer never shifts the
/// draws of another.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

    static constexpr std::string_view algorithm = "xoshiro256**/splitmix64";

    [[nodiscard]] Rng derive(std::string_view label) const {
        std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
        for (unsigned char c : label) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return Rng(seed_ ^ splitmix(h));
    }
    [[nodiscard]] Rng derive(std::string_view label, std::uint64_t index) const {
        return derive(std::string(label) + "#" + std::to_string(index));
    }

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), rejection sampled (no modulo bias).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below(0)");
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller (one value per call; the pair's twin is dropped).
    double normal() noexcept {
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

    /// k distinct indices from [0, n), in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + below(n - i)]);
        idx.resize(k);
        return idx;
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }
    static constexpr std::uint64_t splitmix(std::uint64_t z) noexcept {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    void reseed(std::uint64_t seed) noexcept {
        seed_ = seed;
        std::uint64_t z = seed;
        for (auto& s : s_) {
            s = splitmix(z);
            z += 0x9e3779b97f4a7c15ULL;
        }
    }

    std::uint64_t seed_ = 0;
    std::uint64_t s_[4]{};
};

} // namespace hyperpoison

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "hyperpoison/model.hpp"
#include "hyperpoison/numerics.hpp"

namespace hyperpoison {

/// Fraction of rows whose prediction (probability >= 0.5 means class 1) misses the label.
inline double test_error(const ModelSpec& spec, std::span<const double> w, const Dataset& data) {
    if (data.n() == 0) throw std::invalid_argument("test_error: empty dataset");
    const Vector z = logits(spec, w, data.X);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        const double pred = z[i] >= 0.0 ? 1.0 : 0.0;
        wrong += pred != data.y[i];
    }
    return static_cast<double>(wrong) / static_cast<double>(data.n());
}

struct FeatureSet {
    std::vector<std::size_t> indices; ///< sorted, distinct
    std::size_t universe = 0;

    [[nodiscard]] std::size_t k() const { return indices.size(); }
};

/// Per-input-feature importance: |w_i| for logistic regression, the L2 norm of
/// each input column's outgoing first-layer weights for an MLP.
inline Vector feature_importance(const ModelSpec& spec, std::span<const double> w) {
    const auto layout = param_layout(spec);
    const auto& first = layout.front();
    Vector imp(first.fan_in, 0.0);
    for (std::size_t o = 0; o < first.fan_out; ++o) {
        for (std::size_t k = 0; k < first.fan_in; ++k) {
            const double v = w[first.weight_offset + o * first.fan_in + k];
            imp[k] += v * v;
        }
    }
    for (double& v : imp) v = std::sqrt(v);
    return imp;
}

/// The k largest |scores|, ties to the lower index.
inline FeatureSet top_k_features(std::span<const double> scores, std::size_t k) {
    const std::size_t m = scores.size();
    if (k == 0 || k >= m) throw std::invalid_argument("top_k_features: need 0 < k < " + std::to_string(m));
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          const double fa = std::abs(scores[a]);
                          const double fb = std::abs(scores[b]);
                          return fa != fb ? fa > fb : a < b;
                      });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return {std::move(idx), m};
}

inline FeatureSet top_k_features(const ModelSpec& spec, std::span<const double> w, std::size_t k) {
    return top_k_features(feature_importance(spec, w), k);
}

/// (r d - k^2) / (k (d - k)) with r the overlap of two equal-size subsets of d features.
inline double kuncheva_index(const FeatureSet& a, const FeatureSet& b) {
    if (a.k() != b.k()) throw std::invalid_argument("kuncheva_index: subset sizes differ");
    if (a.universe != b.universe) throw std::invalid_argument("kuncheva_index: universes differ");
    const double k = static_cast<double>(a.k());
    const double d = static_cast<double>(a.universe);
    if (!(k > 0 && k < d)) throw std::invalid_argument("kuncheva_index: need 0 < k < d");
    std::vector<std::size_t> common;
    std::set_intersection(a.indices.begin(), a.indices.end(), b.indices.begin(), b.indices.end(),
                          std::back_inserter(common));
    const double r = static_cast<double>(common.size());
    return (r * d - k * k) / (k * (d - k));
}

struct WeightNorms {
    Vector per_layer; ///< ||w_l||^2 / d_l, biases included
    double total = 0.0; ///< ||w||^2 / d
};

inline WeightNorms weight_norms(const ModelSpec& spec, std::span<const double> w) {
    WeightNorms out;
    double all = 0.0;
    for (const auto& s : param_layout(spec)) {
        double acc = 0.0;
        for (std::size_t i = s.weight_offset; i < s.end(); ++i) acc += w[i] * w[i];
        all += acc;
        out.per_layer.push_back(acc / static_cast<double>(s.end() - s.weight_offset));
    }
    out.total = all / static_cast<double>(w.size());
    return out;
}

} // namespace hyperpoison

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include "hyperpoison/error.hpp"
#include "hyperpoison/model.hpp"
#include "hyperpoison/numerics.hpp"

namespace hyperpoison {

struct SyntheticTask {
    Dataset train;
    Dataset val;
};

struct GaussianPair {
    double mu0[2] = {-3.0, 0.0};
    double mu1[2] = {3.0, 0.0};
    double var[2] = {2.5, 1.5}; ///< shared diagonal covariance
    double bound = 9.5;
};

/// n_per_class draws per class, class 0 rows first.
inline Dataset sample_gaussian_pair(std::size_t n_per_class, Rng& rng, const GaussianPair& g = {}) {
    if (n_per_class < 1) throw std::invalid_argument("sample_gaussian_pair: need at least one point per class");
    Dataset d;
    d.X = Matrix(2 * n_per_class, 2);
    d.y.resize(2 * n_per_class);
    const double sd[2] = {std::sqrt(g.var[0]), std::sqrt(g.var[1])};
    for (std::size_t c = 0; c < 2; ++c) {
        const double* mu = c == 0 ? g.mu0 : g.mu1;
        for (std::size_t i = 0; i < n_per_class; ++i) {
            const std::size_t r = c * n_per_class + i;
            for (std::size_t k = 0; k < 2; ++k) d.X(r, k) = mu[k] + sd[k] * rng.normal();
            d.y[r] = static_cast<double>(c);
        }
    }
    d.bounds = Box::scalar(-g.bound, g.bound);
    return d;
}

inline SyntheticTask gen_synthetic_gaussians(std::size_t n_train_per_class, std::size_t n_val_per_class, Rng& rng) {
    SyntheticTask t;
    Rng tr = rng.derive("synthetic-train");
    Rng va = rng.derive("synthetic-val");
    t.train = sample_gaussian_pair(n_train_per_class, tr);
    t.val = sample_gaussian_pair(n_val_per_class, va);
    return t;
}

inline SyntheticTask gen_synthetic_gaussians(Rng& rng) { return gen_synthetic_gaussians(16, 32, rng); }

inline Dataset gen_synthetic_test(std::size_t n_per_class, Rng& rng) {
    Rng te = rng.derive("synthetic-test");
    return sample_gaussian_pair(n_per_class, te);
}

/// Unnormalized images (one row of bytes per image) with integer labels.
struct RawImages {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t channels = 1;
    std::vector<std::uint8_t> pixels; ///< count x (channels * rows * cols)
    std::vector<std::uint8_t> labels;

    [[nodiscard]] std::size_t features() const { return channels * rows * cols; }
};

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw FormatError("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off, const std::string& what) {
    if (off + 4 > b.size()) {
        throw FormatError(what + ": truncated header at byte offset " + std::to_string(b.size()));
    }
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

inline void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

inline void write_file(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw FormatError("cannot write " + p.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

} // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::size_t kCifarRecord = 3073;

inline RawImages parse_idx(const std::vector<std::uint8_t>& images, const std::vector<std::uint8_t>& labels) {
    RawImages raw;
    const auto im_magic = detail::be32(images, 0, "idx images");
    if (im_magic != kIdxImageMagic) throw FormatError("idx images: bad magic " + std::to_string(im_magic));
    raw.count = detail::be32(images, 4, "idx images");
    raw.rows = detail::be32(images, 8, "idx images");
    raw.cols = detail::be32(images, 12, "idx images");
    const std::size_t need = 16 + raw.count * raw.rows * raw.cols;
    if (images.size() < need) {
        throw FormatError("idx images: truncated payload at byte offset " + std::to_string(images.size()) +
                          ", expected " + std::to_string(need) + " bytes");
    }
    const auto lb_magic = detail::be32(labels, 0, "idx labels");
    if (lb_magic != kIdxLabelMagic) throw FormatError("idx labels: bad magic " + std::to_string(lb_magic));
    const std::size_t nl = detail::be32(labels, 4, "idx labels");
    if (labels.size() < 8 + nl) {
        throw FormatError("idx labels: truncated payload at byte offset " + std::to_string(labels.size()) +
                          ", expected " + std::to_string(8 + nl) + " bytes");
    }
    if (nl != raw.count) {
        throw FormatError("idx: count mismatch, " + std::to_string(raw.count) + " images vs " + std::to_string(nl) +
                          " labels");
    }
    raw.pixels.assign(images.begin() + 16, images.begin() + static_cast<std::ptrdiff_t>(need));
    raw.labels.assign(labels.begin() + 8, labels.begin() + static_cast<std::ptrdiff_t>(8 + nl));
    return raw;
}

inline RawImages load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    return parse_idx(detail::read_file(images_path), detail::read_file(labels_path));
}

inline std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> encode_idx(const RawImages& raw) {
    std::vector<std::uint8_t> im, lb;
    detail::put_be32(im, kIdxImageMagic);
    detail::put_be32(im, static_cast<std::uint32_t>(raw.count));
    detail::put_be32(im, static_cast<std::uint32_t>(raw.rows));
    detail::put_be32(im, static_cast<std::uint32_t>(raw.cols));
    im.insert(im.end(), raw.pixels.begin(), raw.pixels.end());
    detail::put_be32(lb, kIdxLabelMagic);
    detail::put_be32(lb, static_cast<std::uint32_t>(raw.count));
    lb.insert(lb.end(), raw.labels.begin(), raw.labels.end());
    return {std::move(im), std::move(lb)};
}

inline void save_idx(const RawImages& raw, const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path) {
    const auto [im, lb] = encode_idx(raw);
    detail::write_file(images_path, im);
    detail::write_file(labels_path, lb);
}

inline RawImages parse_cifar10(const std::vector<std::uint8_t>& bytes, RawImages raw = {}) {
    if (bytes.size() % kCifarRecord != 0) {
        throw FormatError("cifar10: length " + std::to_string(bytes.size()) + " is not a multiple of 3073");
    }
    raw.rows = 32;
    raw.cols = 32;
    raw.channels = 3;
    const std::size_t n = bytes.size() / kCifarRecord;
    for (std::size_t i = 0; i < n; ++i) {
        const auto* rec = bytes.data() + i * kCifarRecord;
        raw.labels.push_back(rec[0]);
        raw.pixels.insert(raw.pixels.end(), rec + 1, rec + kCifarRecord);
    }
    raw.count += n;
    return raw;
}

inline RawImages load_cifar10_binary(const std::vector<std::filesystem::path>& paths) {
    RawImages raw;
    raw.rows = 32;
    raw.cols = 32;
    raw.channels = 3;
    for (const auto& p : paths) {
        try {
            raw = parse_cifar10(detail::read_file(p), std::move(raw));
        } catch (const FormatError& e) {
            throw FormatError(p.string() + ": " + e.what());
        }
    }
    return raw;
}

inline std::vector<std::uint8_t> encode_cifar10(const RawImages& raw) {
    if (raw.features() != kCifarRecord - 1) throw FormatError("cifar10: records must hold 3072 pixels");
    std::vector<std::uint8_t> out;
    out.reserve(raw.count * kCifarRecord);
    for (std::size_t i = 0; i < raw.count; ++i) {
        out.push_back(raw.labels[i]);
        const auto* px = raw.pixels.data() + i * raw.features();
        out.insert(out.end(), px, px + raw.features());
    }
    return out;
}

/// Concatenates two raw pools (e.g. the original train and test files).
inline RawImages concat(RawImages a, const RawImages& b) {
    if (a.count == 0) return b;
    if (b.count == 0) return a;
    if (a.features() != b.features()) throw FormatError("concat: image sizes differ");
    a.pixels.insert(a.pixels.end(), b.pixels.begin(), b.pixels.end());
    a.labels.insert(a.labels.end(), b.labels.begin(), b.labels.end());
    a.count += b.count;
    return a;
}

enum class Normalization { UnitInterval, SymmetricUnit };

struct SplitSpec {
    std::size_t n_train = 5000;
    std::size_t n_val = 500;
    std::size_t n_test = 3000;
    int label_a = 0; ///< mapped to 0
    int label_b = 8; ///< mapped to 1
    Normalization normalization = Normalization::UnitInterval;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_train < 2 || n_val < 2 || n_test < 2) throw std::invalid_argument("split: every split needs at least 2 rows");
        if (n_train % 2 || n_val % 2 || n_test % 2) throw std::invalid_argument("split: sizes must be even to balance classes");
        if (label_a == label_b) throw std::invalid_argument("split: class labels must differ");
    }
};

struct BinaryTask {
    Dataset train;
    Dataset val;
    Dataset test;
    std::vector<std::size_t> train_source; ///< pool row of each split row
    std::vector<std::size_t> val_source;
    std::vector<std::size_t> test_source;
};

inline double normalize_pixel(std::uint8_t v, Normalization n) {
    return n == Normalization::UnitInterval ? v / 255.0 : v / 127.5 - 1.0;
}

/// Balanced, disjoint, seeded splits of the two classes drawn from the pooled data.
inline BinaryTask make_binary_task(const RawImages& raw, const SplitSpec& spec) {
    spec.validate();
    std::vector<std::size_t> pool_a, pool_b;
    for (std::size_t i = 0; i < raw.count; ++i) {
        if (raw.labels[i] == spec.label_a) pool_a.push_back(i);
        if (raw.labels[i] == spec.label_b) pool_b.push_back(i);
    }
    const std::size_t per_class = (spec.n_train + spec.n_val + spec.n_test) / 2;
    if (pool_a.size() < per_class || pool_b.size() < per_class) {
        throw std::invalid_argument("make_binary_task: need " + std::to_string(per_class) +
                                    " samples per class, have " + std::to_string(pool_a.size()) + " and " +
                                    std::to_string(pool_b.size()));
    }
    Rng rng = Rng(spec.seed).derive("binary-split");
    rng.shuffle(pool_a);
    rng.shuffle(pool_b);

    const std::size_t m = raw.features();
    const Box bounds = spec.normalization == Normalization::UnitInterval ? Box::scalar(0.0, 1.0) : Box::scalar(-1.0, 1.0);
    std::size_t cursor = 0;
    const auto take = [&](std::size_t n, std::vector<std::size_t>& source) {
        const std::size_t half = n / 2;
        std::vector<std::pair<std::size_t, double>> rows;
        for (std::size_t i = 0; i < half; ++i) {
            rows.emplace_back(pool_a[cursor + i], 0.0);
            rows.emplace_back(pool_b[cursor + i], 1.0);
        }
        cursor += half;
        rng.shuffle(rows);
        Dataset d;
        d.X = Matrix(n, m);
        d.y.resize(n);
        d.bounds = bounds;
        for (std::size_t r = 0; r < n; ++r) {
            const auto* px = raw.pixels.data() + rows[r].first * m;
            auto dst = d.X.row(r);
            for (std::size_t k = 0; k < m; ++k) dst[k] = normalize_pixel(px[k], spec.normalization);
            d.y[r] = rows[r].second;
            source.push_back(rows[r].first);
        }
        return d;
    };
    BinaryTask t;
    t.train = take(spec.n_train, t.train_source);
    t.val = take(spec.n_val, t.val_source);
    t.test = take(spec.n_test, t.test_source);
    return t;
}

} // namespace hyperpoison

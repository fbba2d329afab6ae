#pragma once

// Flat key = value experiment configuration with dotted section keys, named
// presets, and typed resolution into ExperimentConfig.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hyperpoison/attack.hpp"
#include "hyperpoison/checks.hpp"
#include "hyperpoison/data.hpp"
#include "hyperpoison/error.hpp"
#include "hyperpoison/model.hpp"

namespace hyperpoison {

using ConfigMap = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

} // namespace detail

/// Every recognised key with its default (MNIST 0-vs-8 logistic regression at full scale).
inline ConfigMap default_config() {
    return {
        {"task.kind", "idx"},
        {"task.images", ""},
        {"task.labels", ""},
        {"task.cifar_files", ""},
        {"split.n_train", "5000"},
        {"split.n_val", "500"},
        {"split.n_test", "3000"},
        {"split.label_a", "0"},
        {"split.label_b", "8"},
        {"split.normalization", "unit"},
        {"synthetic.n_train_per_class", "16"},
        {"synthetic.n_val_per_class", "32"},
        {"synthetic.n_test_per_class", "500"},
        {"model.kind", "lr"},
        {"model.hidden", ""},
        {"model.leaky_slope", "0.01"},
        {"reg.penalty", "l2"},
        {"reg.grouping", "single"},
        {"reg.include_bias", "false"},
        {"reg.scale", "1/n"},
        {"reg.fixed_lambda", "ln(1000)"},
        {"attack.T_mul", "140"},
        {"attack.alpha", "0.3"},
        {"attack.T", "140"},
        {"attack.eta", "0.1"},
        {"attack.lambda_lo", "-inf"},
        {"attack.lambda_hi", "ln(5000)"},
        {"attack.lambda_init", "0"},
        {"attack.poison_batch", "350"},
        {"attack.fractions", "0,0.07,0.14,0.21,0.28,0.35"},
        {"attack.normalize_xp_grad", "true"},
        {"attack.lambda_sign_update", "true"},
        {"eval.eta", "0.1"},
        {"eval.epochs", "140"},
        {"experiment.repetitions", "10"},
        {"experiment.seed", "0"},
        {"experiment.modes", "none,fixed,rmd,clean"},
        {"experiment.top_k", "20"},
        {"experiment.cv_folds", "5"},
        {"experiment.cv_grid", "-8:8:1"},
        {"synth.lambda_grid", "-8:6:0.5"},
        {"synth.location_step", "0.5"},
        {"check.lr_instances", "20"},
        {"check.mlp_instances", "10"},
        {"check.implicit_instances", "5"},
        {"check.corrupt", "false"},
    };
}

/// Overrides `base` with `over`; keys must already exist in `base`.
inline void merge_config(ConfigMap& base, const ConfigMap& over) {
    for (const auto& [k, v] : over) {
        auto it = base.find(k);
        if (it == base.end()) throw ConfigError(k + ": unknown configuration key");
        it->second = v;
    }
}

inline std::vector<std::string> preset_names() {
    return {"mnist-lr", "fmnist-lr", "cifar-lr", "mnist-dnn", "fmnist-dnn", "cifar-dnn", "synthetic", "mnist-lr-desk"};
}

inline ConfigMap preset(std::string_view name) {
    ConfigMap c = default_config();
    ConfigMap o;
    const ConfigMap fmnist_split{{"split.label_a", "1"}, {"split.label_b", "2"}};
    const ConfigMap cifar_split{{"task.kind", "cifar10"}, {"split.n_val", "1000"}, {"split.n_test", "2500"},
                                {"split.label_a", "0"}, {"split.label_b", "6"}, {"split.normalization", "symmetric"}};
    const ConfigMap dnn{{"model.kind", "mlp"}, {"experiment.modes", "none,fixed,rmd"}};
    const auto add = [&](const ConfigMap& m) {
        for (const auto& [k, v] : m) o[k] = v;
    };
    if (name == "mnist-lr") {
    } else if (name == "fmnist-lr") {
        add(fmnist_split);
        add({{"attack.T_mul", "150"}, {"attack.eta", "0.04"}, {"attack.T", "160"}, {"eval.eta", "0.04"},
             {"eval.epochs", "160"}});
    } else if (name == "cifar-lr") {
        add(cifar_split);
        add({{"attack.T_mul", "120"}, {"attack.eta", "0.01"}, {"attack.T", "500"}, {"attack.lambda_hi", "ln(100000)"},
             {"eval.eta", "0.01"}, {"eval.epochs", "500"}, {"reg.fixed_lambda", "ln(10000)"}});
    } else if (name == "mnist-dnn") {
        add(dnn);
        add({{"model.hidden", "32,8"}, {"attack.T_mul", "180"}, {"attack.alpha", "0.075"}, {"attack.eta", "0.04"},
             {"attack.T", "700"}, {"eval.eta", "0.04"}, {"eval.epochs", "700"}, {"reg.fixed_lambda", "ln(100)"}});
    } else if (name == "fmnist-dnn") {
        add(dnn);
        add(fmnist_split);
        add({{"model.hidden", "32,8"}, {"attack.T_mul", "150"}, {"attack.alpha", "0.1"}, {"attack.eta", "0.03"},
             {"attack.T", "800"}, {"eval.eta", "0.03"}, {"eval.epochs", "800"}, {"reg.fixed_lambda", "ln(500)"}});
    } else if (name == "cifar-dnn") {
        add(dnn);
        add(cifar_split);
        add({{"model.hidden", "64,32"}, {"attack.T_mul", "120"}, {"attack.alpha", "0.1"}, {"attack.eta", "0.03"},
             {"attack.T", "800"}, {"attack.lambda_hi", "ln(100000)"}, {"eval.eta", "0.03"}, {"eval.epochs", "800"},
             {"reg.fixed_lambda", "ln(500)"}});
    } else if (name == "synthetic") {
        add({{"task.kind", "synthetic"}, {"attack.T_mul", "50"}, {"attack.alpha", "0.4"}, {"attack.eta", "0.2"},
             {"attack.T", "100"}, {"attack.fractions", "0"}, {"attack.poison_batch", "0"}, {"eval.eta", "0.2"},
             {"eval.epochs", "100"}, {"reg.fixed_lambda", "ln(20)"}, {"experiment.repetitions", "10"}});
    } else if (name == "mnist-lr-desk") {
        add({{"task.images", "data/mnist-0v8/images-idx3-ubyte"}, {"task.labels", "data/mnist-0v8/labels-idx1-ubyte"},
             {"split.n_train", "500"}, {"split.n_val", "100"}, {"split.n_test", "500"}, {"attack.poison_batch", "0"},
             {"attack.fractions", "0,0.1,0.2"}, {"experiment.repetitions", "5"}});
    } else {
        throw ConfigError("preset: unknown preset '" + std::string(name) + "'");
    }
    merge_config(c, o);
    return c;
}

/// Parses `key = value` lines; '#' starts a comment.
inline ConfigMap parse_config_text(std::string_view text, const std::string& origin = "config") {
    ConfigMap out;
    std::size_t line_no = 0;
    std::stringstream ss{std::string(text)};
    std::string line;
    while (std::getline(ss, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value', got '" + t + "'");
        }
        const std::string key = detail::trim(std::string_view(t).substr(0, eq));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        out[key] = detail::trim(std::string_view(t).substr(eq + 1));
    }
    return out;
}

inline ConfigMap load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.string());
}

inline std::string format_config(const ConfigMap& c) {
    std::string out;
    for (const auto& [k, v] : c) out += k + " = " + v + "\n";
    return out;
}

// ---- typed values -------------------------------------------------------

namespace config_value {

/// A real number, "inf"/"-inf", or "ln(x)".
inline double real(const std::string& key, const std::string& v) {
    const std::string t = detail::trim(v);
    try {
        if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
        if (t == "-inf") return -std::numeric_limits<double>::infinity();
        if (t.size() > 4 && t.rfind("ln(", 0) == 0 && t.back() == ')') {
            const double x = real(key, t.substr(3, t.size() - 4));
            if (!(x > 0.0)) throw ConfigError(key + ": ln() needs a positive argument");
            return std::log(x);
        }
        std::size_t used = 0;
        const double x = std::stod(t, &used);
        if (used != t.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

inline std::size_t count(const std::string& key, const std::string& v) {
    const std::string t = detail::trim(v);
    if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
    try {
        return static_cast<std::size_t>(std::stoull(t));
    } catch (const std::exception&) {
        throw ConfigError(key + ": integer out of range '" + v + "'");
    }
}

inline bool flag(const std::string& key, const std::string& v) {
    const std::string t = detail::trim(v);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::vector<double> reals(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& item : detail::split_list(v)) out.push_back(real(key, item));
    return out;
}

inline std::vector<std::size_t> counts(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& item : detail::split_list(v)) out.push_back(count(key, item));
    return out;
}

/// "lo:hi:step" or a comma-separated list.
inline std::vector<double> grid(const std::string& key, const std::string& v) {
    if (v.find(':') == std::string::npos) {
        auto g = reals(key, v);
        if (g.empty()) throw ConfigError(key + ": empty grid");
        return g;
    }
    std::vector<std::string> parts;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.size() != 3) throw ConfigError(key + ": expected lo:hi:step, got '" + v + "'");
    const double lo = real(key, parts[0]);
    const double hi = real(key, parts[1]);
    const double step = real(key, parts[2]);
    if (!(step > 0.0) || hi < lo || !std::isfinite(lo) || !std::isfinite(hi)) {
        throw ConfigError(key + ": bad range '" + v + "'");
    }
    return linear_grid(lo, hi, step);
}

} // namespace config_value

// ---- resolved configuration ---------------------------------------------

enum class TaskKind { Synthetic, Idx, Cifar10 };
enum class RegMode { None, Fixed, Rmd, Clean };

inline std::string_view reg_mode_name(RegMode m) {
    switch (m) {
    case RegMode::None: return "none";
    case RegMode::Fixed: return "fixed";
    case RegMode::Rmd: return "rmd";
    case RegMode::Clean: return "clean";
    }
    return "?";
}

struct TaskConfig {
    TaskKind kind = TaskKind::Idx;
    std::vector<std::string> images; ///< pooled IDX image files
    std::vector<std::string> labels; ///< matching IDX label files
    std::vector<std::string> cifar_files;
    SplitSpec split;
    std::size_t synth_train_per_class = 16;
    std::size_t synth_val_per_class = 32;
    std::size_t synth_test_per_class = 500;
};

struct SynthConfig {
    std::vector<double> lambda_grid;
    double location_step = 0.5;
};

struct ExperimentConfig {
    TaskConfig task;
    ModelKind model_kind = ModelKind::LogisticRegression;
    std::vector<std::size_t> hidden;
    double leaky_slope = 0.01;
    RegSpec reg; ///< penalty, grouping and bias flag; lambdas are filled per mode
    bool scale_per_sample = true; ///< penalty multiplier divided by the training-set size
    double fixed_lambda = std::log(1000.0);
    AttackConfig attack;
    TrainSettings eval;
    std::size_t repetitions = 1;
    std::uint64_t seed = 0;
    std::vector<RegMode> modes;
    std::size_t top_k = 20;
    std::size_t cv_folds = 5;
    std::vector<double> cv_grid;
    SynthConfig synth;
    CheckSettings check;
    ConfigMap resolved; ///< the full key set these values came from

    [[nodiscard]] ModelSpec model_for(std::size_t input_dim) const {
        if (model_kind == ModelKind::LogisticRegression) return ModelSpec::logistic(input_dim);
        std::vector<std::size_t> sizes{input_dim};
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(1);
        return ModelSpec::mlp(sizes, leaky_slope);
    }

    /// The regularizer for a training set of n rows with every group at `lambda`.
    [[nodiscard]] RegSpec reg_at(const ModelSpec& spec, double lambda, std::size_t n) const {
        RegSpec r = reg_with_lambda(spec, reg, lambda);
        r.scale = scale_per_sample ? 1.0 / static_cast<double>(n) : reg.scale;
        return r;
    }

    [[nodiscard]] bool has_mode(RegMode m) const {
        for (auto x : modes) {
            if (x == m) return true;
        }
        return false;
    }
};

inline ExperimentConfig resolve_config(const ConfigMap& in) {
    namespace cv = config_value;
    ConfigMap c = default_config();
    merge_config(c, in);
    const auto get = [&](const char* k) -> const std::string& { return c.at(k); };

    ExperimentConfig e;
    e.resolved = c;

    const std::string kind = get("task.kind");
    if (kind == "synthetic") e.task.kind = TaskKind::Synthetic;
    else if (kind == "idx") e.task.kind = TaskKind::Idx;
    else if (kind == "cifar10") e.task.kind = TaskKind::Cifar10;
    else throw ConfigError("task.kind: expected synthetic, idx or cifar10, got '" + kind + "'");
    e.task.images = detail::split_list(get("task.images"));
    e.task.labels = detail::split_list(get("task.labels"));
    e.task.cifar_files = detail::split_list(get("task.cifar_files"));
    if (e.task.images.size() != e.task.labels.size()) {
        throw ConfigError("task.labels: need one label file per image file");
    }

    auto& sp = e.task.split;
    sp.n_train = cv::count("split.n_train", get("split.n_train"));
    sp.n_val = cv::count("split.n_val", get("split.n_val"));
    sp.n_test = cv::count("split.n_test", get("split.n_test"));
    sp.label_a = static_cast<int>(cv::count("split.label_a", get("split.label_a")));
    sp.label_b = static_cast<int>(cv::count("split.label_b", get("split.label_b")));
    const std::string norm = get("split.normalization");
    if (norm == "unit") sp.normalization = Normalization::UnitInterval;
    else if (norm == "symmetric") sp.normalization = Normalization::SymmetricUnit;
    else throw ConfigError("split.normalization: expected unit or symmetric, got '" + norm + "'");
    try {
        sp.validate();
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(std::string(ex.what()));
    }
    e.task.synth_train_per_class = cv::count("synthetic.n_train_per_class", get("synthetic.n_train_per_class"));
    e.task.synth_val_per_class = cv::count("synthetic.n_val_per_class", get("synthetic.n_val_per_class"));
    e.task.synth_test_per_class = cv::count("synthetic.n_test_per_class", get("synthetic.n_test_per_class"));
    if (e.task.synth_train_per_class < 1 || e.task.synth_val_per_class < 1 || e.task.synth_test_per_class < 1) {
        throw ConfigError("synthetic.n_train_per_class: every synthetic split needs at least one point per class");
    }

    const std::string mk = get("model.kind");
    if (mk == "lr") e.model_kind = ModelKind::LogisticRegression;
    else if (mk == "mlp") e.model_kind = ModelKind::Mlp;
    else throw ConfigError("model.kind: expected lr or mlp, got '" + mk + "'");
    e.hidden = cv::counts("model.hidden", get("model.hidden"));
    if (e.model_kind == ModelKind::Mlp && e.hidden.empty()) throw ConfigError("model.hidden: an mlp needs hidden layer sizes");
    if (e.model_kind == ModelKind::LogisticRegression && !e.hidden.empty()) {
        throw ConfigError("model.hidden: logistic regression takes no hidden layers");
    }
    for (auto h : e.hidden) {
        if (h == 0) throw ConfigError("model.hidden: zero-width layer");
    }
    e.leaky_slope = cv::real("model.leaky_slope", get("model.leaky_slope"));
    if (!(e.leaky_slope > 0.0 && e.leaky_slope < 1.0)) throw ConfigError("model.leaky_slope: must lie in (0, 1)");

    const std::string pen = get("reg.penalty");
    if (pen == "l2") e.reg.penalty = Penalty::L2;
    else if (pen == "l1") e.reg.penalty = Penalty::L1;
    else throw ConfigError("reg.penalty: expected l2 or l1, got '" + pen + "'");
    const std::string grp = get("reg.grouping");
    if (grp == "single") e.reg.grouping = Grouping::Single;
    else if (grp == "per_layer") e.reg.grouping = Grouping::PerLayer;
    else throw ConfigError("reg.grouping: expected single or per_layer, got '" + grp + "'");
    e.reg.include_bias = cv::flag("reg.include_bias", get("reg.include_bias"));
    if (get("reg.scale") == "1/n") {
        e.scale_per_sample = true;
    } else {
        e.scale_per_sample = false;
        e.reg.scale = cv::real("reg.scale", get("reg.scale"));
        if (!(e.reg.scale > 0.0 && std::isfinite(e.reg.scale))) throw ConfigError("reg.scale: must be positive or 1/n");
    }
    e.fixed_lambda = cv::real("reg.fixed_lambda", get("reg.fixed_lambda"));
    if (!std::isfinite(e.fixed_lambda)) throw ConfigError("reg.fixed_lambda: must be finite");

    auto& a = e.attack;
    a.T_mul = cv::count("attack.T_mul", get("attack.T_mul"));
    a.alpha = cv::real("attack.alpha", get("attack.alpha"));
    a.T = cv::count("attack.T", get("attack.T"));
    a.eta = cv::real("attack.eta", get("attack.eta"));
    a.lambda_lo = cv::real("attack.lambda_lo", get("attack.lambda_lo"));
    a.lambda_hi = cv::real("attack.lambda_hi", get("attack.lambda_hi"));
    a.lambda_init = cv::real("attack.lambda_init", get("attack.lambda_init"));
    a.poison_batch = cv::count("attack.poison_batch", get("attack.poison_batch"));
    a.fraction_schedule = cv::reals("attack.fractions", get("attack.fractions"));
    a.normalize_xp_grad = cv::flag("attack.normalize_xp_grad", get("attack.normalize_xp_grad"));
    a.lambda_sign_update = cv::flag("attack.lambda_sign_update", get("attack.lambda_sign_update"));
    try {
        a.validate();
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(std::string(ex.what()));
    }

    e.eval.eta = cv::real("eval.eta", get("eval.eta"));
    e.eval.epochs = cv::count("eval.epochs", get("eval.epochs"));
    if (!(e.eval.eta > 0.0 && e.eval.eta <= 1.0)) throw ConfigError("eval.eta: must lie in (0, 1]");

    e.repetitions = cv::count("experiment.repetitions", get("experiment.repetitions"));
    if (e.repetitions < 1) throw ConfigError("experiment.repetitions: must be at least 1");
    e.seed = cv::count("experiment.seed", get("experiment.seed"));
    for (const auto& m : detail::split_list(get("experiment.modes"))) {
        if (m == "none") e.modes.push_back(RegMode::None);
        else if (m == "fixed") e.modes.push_back(RegMode::Fixed);
        else if (m == "rmd") e.modes.push_back(RegMode::Rmd);
        else if (m == "clean") e.modes.push_back(RegMode::Clean);
        else throw ConfigError("experiment.modes: unknown mode '" + m + "'");
    }
    if (e.modes.empty()) throw ConfigError("experiment.modes: at least one mode is required");
    if (e.has_mode(RegMode::Clean) && e.model_kind != ModelKind::LogisticRegression) {
        throw ConfigError("experiment.modes: clean (cross-validated lambda) is only available for logistic regression");
    }
    e.top_k = cv::count("experiment.top_k", get("experiment.top_k"));
    if (e.top_k < 1) throw ConfigError("experiment.top_k: must be at least 1");
    e.cv_folds = cv::count("experiment.cv_folds", get("experiment.cv_folds"));
    if (e.cv_folds < 2) throw ConfigError("experiment.cv_folds: must be at least 2");
    e.cv_grid = cv::grid("experiment.cv_grid", get("experiment.cv_grid"));

    e.synth.lambda_grid = cv::grid("synth.lambda_grid", get("synth.lambda_grid"));
    e.synth.location_step = cv::real("synth.location_step", get("synth.location_step"));
    if (!(e.synth.location_step > 0.0)) throw ConfigError("synth.location_step: must be positive");

    e.check.lr_instances = cv::count("check.lr_instances", get("check.lr_instances"));
    e.check.mlp_instances = cv::count("check.mlp_instances", get("check.mlp_instances"));
    e.check.implicit_instances = cv::count("check.implicit_instances", get("check.implicit_instances"));
    e.check.corrupt = cv::flag("check.corrupt", get("check.corrupt"));
    e.check.seed = e.seed;
    return e;
}

} // namespace hyperpoison

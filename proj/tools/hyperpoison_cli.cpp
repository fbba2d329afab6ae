// hyperpoison: experiment driver.
//
//   hyperpoison attack --preset mnist-lr-desk --out runs/desk.jsonl --jobs 4
//   hyperpoison synth-demo --preset synthetic --out runs/synth.jsonl
//   hyperpoison check-gradients
//
// Exit codes: 0 success, 1 configuration or input error, 2 numerical failure,
// 3 a gradient check failed.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hyperpoison/experiment.hpp"

namespace hp = hyperpoison;

namespace {

struct Options {
    std::string config_path;
    std::string preset_name;
    std::vector<std::string> overrides;
    std::string out;
    std::size_t jobs = 1;
    long long seed = -1;
};

hp::ExperimentConfig build_config(const Options& o, const std::string& default_preset) {
    hp::ConfigMap c = hp::preset(o.preset_name.empty() ? default_preset : o.preset_name);
    if (!o.config_path.empty()) hp::merge_config(c, hp::load_config_file(o.config_path));
    for (const auto& kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw hp::ConfigError("--set: expected key=value, got '" + kv + "'");
        hp::merge_config(c, {{hp::detail::trim(kv.substr(0, eq)), hp::detail::trim(kv.substr(eq + 1))}});
    }
    if (o.seed >= 0) c["experiment.seed"] = std::to_string(o.seed);
    return hp::resolve_config(c);
}

std::string out_path(const Options& o, const std::string& command) {
    return o.out.empty() ? command + ".jsonl" : o.out;
}

int cmd_attack(const Options& o, const std::string& command) {
    const auto cfg = build_config(o, "mnist-lr-desk");
    const auto records = command == "eval" ? hp::run_eval_experiment(cfg, o.jobs) : hp::run_attack_experiment(cfg, o.jobs);
    const auto path = out_path(o, command);
    hp::write_attack_outputs(path, command, cfg, records);
    std::cout << hp::csv_projection(cfg, records);
    std::cout << "wrote " << path << ", " << hp::csv_path(path).string() << ", " << hp::timing_path(path).string()
              << "\n";
    return 0;
}

int cmd_hyperlearn(const Options& o) {
    const auto cfg = build_config(o, "mnist-lr-desk");
    std::vector<hp::json> lines{hp::header_record("hyperlearn", cfg)};
    for (const auto& r : hp::run_hyperlearn_experiment(cfg, o.jobs)) {
        for (auto& j : hp::to_json(r)) lines.push_back(std::move(j));
        std::printf("rep %zu %-4s lambda %s test_error %.4f\n", r.repetition, r.method.c_str(),
                    hp::vector_json(r.lambda).dump().c_str(), r.test_error);
    }
    const auto path = out_path(o, "hyperlearn");
    hp::write_lines(path, lines);
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_synth(const Options& o) {
    const auto cfg = build_config(o, "synthetic");
    std::vector<hp::json> lines{hp::header_record("synth-demo", cfg)};
    for (const auto& t : hp::run_synth_experiment(cfg, o.jobs)) {
        for (auto& j : hp::to_json(t)) lines.push_back(std::move(j));
        std::printf("rep %zu val error none %.4f -> %.4f, fixed %.4f -> %.4f, lambda* %.1f (attack) vs %.1f (inside)\n",
                    t.repetition, t.clean_error_none, t.attacked_error_none, t.clean_error_fixed,
                    t.attacked_error_fixed, t.lambda_star_attack, t.lambda_star_inside);
    }
    const auto path = out_path(o, "synth-demo");
    hp::write_lines(path, lines);
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_check(const Options& o) {
    const auto cfg = build_config(o, "mnist-lr-desk");
    std::vector<hp::json> lines{hp::header_record("check-gradients", cfg)};
    bool ok = true;
    for (const auto& r : hp::run_gradient_checks(cfg.check)) {
        std::printf("%-6s %-18s instances %3zu  max error %.3e  tolerance %.0e\n", r.passed() ? "PASS" : "FAIL",
                    r.name.c_str(), r.instances, r.max_error, r.tolerance);
        ok = ok && r.passed();
        lines.push_back(hp::to_json(r));
    }
    if (!o.out.empty()) hp::write_lines(o.out, lines);
    return ok ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Poisoning attacks with regularization-hyperparameter learning"};
    app.require_subcommand(1);
    Options o;
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "key = value configuration file")->check(CLI::ExistingFile);
        sub->add_option("--preset", o.preset_name, "named preset applied before --config");
        sub->add_option("--set", o.overrides, "extra key=value override (repeatable)");
        sub->add_option("--seed", o.seed, "master seed (overrides experiment.seed)")->check(CLI::NonNegativeNumber);
        sub->add_option("--out", o.out, "result file (.jsonl)");
        sub->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
    };
    auto* attack = app.add_subcommand("attack", "cumulative poisoning attack under each regularization mode");
    auto* hyper = app.add_subcommand("hyperlearn", "learn lambda on the clean training set");
    auto* synth = app.add_subcommand("synth-demo", "single-point attack on two Gaussians");
    auto* eval = app.add_subcommand("eval", "clean-data baseline for each regularization mode");
    auto* check = app.add_subcommand("check-gradients", "hypergradient self-checks");
    for (auto* s : {attack, hyper, synth, eval, check}) add_common(s);
    app.footer("presets: mnist-lr fmnist-lr cifar-lr mnist-dnn fmnist-dnn cifar-dnn synthetic mnist-lr-desk");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (attack->parsed()) return cmd_attack(o, "attack");
        if (eval->parsed()) return cmd_attack(o, "eval");
        if (hyper->parsed()) return cmd_hyperlearn(o);
        if (synth->parsed()) return cmd_synth(o);
        if (check->parsed()) return cmd_check(o);
    } catch (const hp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const hp::FormatError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid setting: " << e.what() << "\n";
        return 1;
    } catch (const hp::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

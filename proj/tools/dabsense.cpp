// dabsense: run simulation experiments or evaluate the closed-form calculator.
//
//   dabsense simulate --config configs/snr_sweep.json [--experiment ID] [--out DIR] [--threads N] [--seed S]
//   dabsense calc transition-snr --h-pow 1 --noise-var 0.1 [--pred-var 0] [--delta-h-var 0]
//
// Exit codes: 0 ok, 2 configuration or argument error, 3 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "dabsense/analysis.hpp"
#include "dabsense/harness.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

struct SimulateArgs {
    std::string config;
    std::string experiment;
    std::string out;
    int threads = 0;
    std::optional<std::uint64_t> seed;
};

int simulate(const SimulateArgs& a) {
    using namespace dabsense;
    ExperimentConfig cfg;
    try {
        if (!a.config.empty()) {
            cfg = load_config(a.config);
            if (!a.experiment.empty() && parse_experiment(a.experiment) != cfg.experiment)
                throw ConfigError("--experiment " + a.experiment + " does not match the config file");
        } else if (!a.experiment.empty()) {
            cfg = default_config(parse_experiment(a.experiment));
        } else {
            throw ConfigError("give --config or --experiment");
        }
        if (a.seed) cfg.seed = *a.seed;
        if (!a.out.empty()) cfg.output_dir = a.out;
        cfg.validate();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigError;
    }

    try {
        const ExperimentResult result = run_experiment(cfg, a.threads);
        const auto path = write_outputs(result, cfg, cfg.output_dir);
        std::printf("%zu rows -> %s\n", result.rows.size(), path.string().c_str());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kRuntimeError;
    }
    return 0;
}

void print_kv(const char* key, double v) { std::printf("%s,%.12g\n", key, v); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DAB+ passive-radar CSI tracking simulator"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate_cmd = app.add_subcommand("simulate", "run an experiment and write CSV results");
    simulate_cmd->add_option("--config", sim.config, "JSON config file")->check(CLI::ExistingFile);
    simulate_cmd->add_option("--experiment", sim.experiment,
                             "snr_sweep | alpha_sweep | representative_scene | random_scenes | unit_oracles");
    simulate_cmd->add_option("--out", sim.out, "output directory (overrides output_dir)");
    simulate_cmd->add_option("--threads", sim.threads, "worker threads (default: DABSENSE_THREADS or all cores)")
        ->check(CLI::NonNegativeNumber);
    simulate_cmd->add_option("--seed", sim.seed, "base seed (overrides the config)");

    auto* calc = app.add_subcommand("calc", "closed-form analysis formulas");
    calc->require_subcommand(1);

    double h_pow = 1.0, noise_var = 0.1, pred_var = 0.0, delta_h_var = 0.0;
    auto* snr_cmd = calc->add_subcommand("transition-snr", "transition SNRs and slip bounds");
    snr_cmd->add_option("--h-pow", h_pow, "|H|^2 (prediction power)");
    snr_cmd->add_option("--noise-var", noise_var, "sigma0^2");
    snr_cmd->add_option("--pred-var", pred_var, "prediction error variance");
    snr_cmd->add_option("--delta-h-var", delta_h_var, "open-loop channel variation variance");

    double alpha = 0.15, prev_var = 1.0, process_var = 0.0, err_var = 1.0, curvature = 0.0;
    auto* smooth_cmd = calc->add_subcommand("smoothing", "smoothing factor effects");
    smooth_cmd->add_option("--alpha", alpha);
    smooth_cmd->add_option("--noise-var", noise_var);
    smooth_cmd->add_option("--prev-var", prev_var, "previous estimation error variance");
    smooth_cmd->add_option("--process-var", process_var);
    smooth_cmd->add_option("--err-var", err_var, "estimation error variance for the MSE gain");
    smooth_cmd->add_option("--curvature-pow", curvature, "|C|^2");

    double obs_var = 1.0, off_mass = 0.0;
    auto* fusion_cmd = calc->add_subcommand("fusion", "posterior variance and ambiguity bound");
    fusion_cmd->add_option("--pred-var", pred_var);
    fusion_cmd->add_option("--obs-var", obs_var);
    fusion_cmd->add_option("--h-pow", h_pow);
    fusion_cmd->add_option("--off-mass", off_mass, "1 - pi(q_hat)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigError;
    }

    if (simulate_cmd->parsed()) return simulate(sim);

    try {
        using namespace dabsense;
        if (snr_cmd->parsed()) {
            const TransitionSnrReport r = transition_snr_report(h_pow, noise_var, pred_var, delta_h_var);
            print_kv("h_pred_pow", r.h_pred_pow);
            print_kv("noise_var", r.noise_var);
            print_kv("pred_var", r.pred_var);
            print_kv("delta_h_var", r.delta_h_var);
            print_kv("gamma_proposed", r.gamma_proposed);
            print_kv("gamma_open_loop", r.gamma_open_loop);
            print_kv("slip_bound", r.slip_bound);
            print_kv("slip_bound_open_loop", r.slip_bound_open_loop);
        } else if (smooth_cmd->parsed()) {
            print_kv("rho_alpha", rho_alpha(alpha));
            print_kv("gamma_gain", gamma_gain(alpha, noise_var, prev_var, process_var));
            print_kv("pred_mse_gain", pred_mse_gain(alpha, err_var, curvature));
        } else if (fusion_cmd->parsed()) {
            const auto [k, one_minus_k] = mse_reduction_factors(pred_var, obs_var);
            const double post = posterior_variance(pred_var, obs_var);
            const double bound = ambiguity_injection_bound(k, h_pow, off_mass);
            print_kv("posterior_variance", post);
            print_kv("gain", k);
            print_kv("factor_vs_observation", k);
            print_kv("factor_vs_prediction", one_minus_k);
            print_kv("ambiguity_bound", bound);
        }
    } catch (const dabsense::ValidationError& e) {
        std::fprintf(stderr, "invalid input: %s\n", e.what());
        return kConfigError;
    }
    return 0;
}

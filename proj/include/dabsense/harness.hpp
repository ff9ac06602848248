#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dabsense/estimators.hpp"
#include "dabsense/rdm.hpp"
#include "dabsense/scene.hpp"

namespace dabsense {

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ExperimentId { snr_sweep, alpha_sweep, representative_scene, random_scenes, unit_oracles };

std::string_view experiment_name(ExperimentId id);
/// Throws ConfigError for unknown names.
ExperimentId parse_experiment(std::string_view name);

struct ExperimentConfig {
    ExperimentId experiment = ExperimentId::snr_sweep;
    RVec snr_grid_db{0.0, 2.5, 5.0, 7.5, 10.0, 12.5, 15.0};
    double alpha = 0.15;
    RVec alpha_grid{0.0, 0.05, 0.1, 0.15, 0.2, 0.3};
    int trials = 50;
    std::uint64_t seed = 20240601;
    std::vector<Scheme> schemes{all_schemes().begin(), all_schemes().end()};
    std::string output_dir = "results";
    int frames = 1;
    SceneConfig scene = default_scene();
    RVec fading_depths_db{20.0, 40.0};
    double doppler_span_hz = 400.0;
    int doppler_points = 513;
    WindowKind window = WindowKind::hann;
    int null_len = 2656;
    int variance_window = 1;
    bool include_noiseless_control = true;
    int oracle_draws = 200000;

    SubcarrierGrid grid() const;
    /// Throws ConfigError.
    void validate() const;
};

/// Defaults for each experiment (grids, trial counts, scenes).
ExperimentConfig default_config(ExperimentId id);

/// Flat JSON object; every key is optional except "experiment", unknown keys are rejected.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// One metric value. trial == -1 marks an aggregate over trials.
struct ResultRow {
    std::string experiment_id;
    std::string scheme;
    double snr_db = 0.0;  // +inf for the noiseless control
    double alpha = 0.0;
    int trial = 0;
    std::string metric;
    double value = 0.0;
    std::string units;

    friend bool operator<(const ResultRow& a, const ResultRow& b);
};

/// Header plus rows in the order given; doubles printed with %.10g, infinities as "inf".
void write_csv(const std::vector<ResultRow>& rows, std::ostream& os);

/// Rows sorted for a stable file regardless of scheduling.
void sort_rows(std::vector<ResultRow>& rows);

/// Per-trial seed: a mix of the base seed, the experiment label and the trial index.
std::uint64_t trial_seed(std::uint64_t seed, std::string_view experiment_label, int trial);

/// Worker count: explicit value if > 0, then DABSENSE_THREADS, then hardware concurrency.
int resolve_threads(int requested);

/// Runs job(i) for i in [0, count) on `threads` workers. The first exception is rethrown.
void parallel_for(int count, int threads, const std::function<void(int)>& job);

/// Maps written by representative_scene, keyed by scheme.
struct NamedMap {
    std::string name;
    RangeDopplerMap map;
};

struct ExperimentResult {
    std::vector<ResultRow> rows;  // sorted
    std::vector<NamedMap> maps;
};

ExperimentResult run_snr_sweep(const ExperimentConfig& config, int threads = 0);
ExperimentResult run_alpha_sweep(const ExperimentConfig& config, int threads = 0);
ExperimentResult run_representative_scene(const ExperimentConfig& config, int threads = 0);
ExperimentResult run_random_scenes(const ExperimentConfig& config, int threads = 0);
ExperimentResult run_unit_oracles(const ExperimentConfig& config, int threads = 0);
ExperimentResult run_experiment(const ExperimentConfig& config, int threads = 0);

/// Writes <dir>/<experiment>.csv and, for maps, <dir>/<experiment>_<name>.{csv,bin}.
/// Returns the CSV path. Throws std::runtime_error if the directory cannot be written.
std::filesystem::path write_outputs(const ExperimentResult& result, const ExperimentConfig& config,
                                    const std::filesystem::path& dir);

// Flat-channel oracle used by unit_oracles and the tests: |H| = 1, PRS-anchored
// decisions with the true channel as prediction.
struct FlatChannelStats {
    double snr_db = 0.0;
    std::uint64_t decisions = 0;
    std::uint64_t slips = 0;
    double slip_rate = 0.0;
    double gamma_proposed_theory = 0.0;
    double gamma_open_loop_theory = 0.0;
    double gamma_proposed_measured = 0.0;   // |mean|^2 / var of y conj(H X_prev) q*
    double gamma_open_loop_measured = 0.0;  // same for y_m conj(y_{m-1}) q*
};
FlatChannelStats flat_channel_oracle(double snr_db, int draws, std::uint64_t seed);

/// Up to `count` local maxima of |G|, each suppressing a (+-row_guard, +-col_guard) box, strongest first.
std::vector<std::pair<std::size_t, std::size_t>> find_peaks(const RangeDopplerMap& map, int count, int row_guard,
                                                            int col_guard);

}  // namespace dabsense

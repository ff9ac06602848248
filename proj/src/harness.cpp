#include "dabsense/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include "dabsense/analysis.hpp"
#include "dabsense/metrics.hpp"

namespace dabsense {

namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

double median(RVec v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt_num(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Trial synthesis. Scene, fading, symbols and a unit-variance noise field are
// drawn once per trial; every SNR point reuses them with the noise rescaled.

struct TrialFrames {
    CVec prs;
    std::vector<CsiGrid> truth;
    std::vector<SymbolGrid> symbols;
    std::vector<CsiGrid> unit_noise;
    double signal_power = 0.0;
};

TrialFrames draw_trial(const SceneConfig& scene, int frames, const SubcarrierGrid& grid, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto tones = static_cast<std::size_t>(grid.active_count);
    const auto transitions = static_cast<std::size_t>(grid.useful_symbols_per_frame - 1);
    const CVec fading = fading_profile(scene.fading_depth_db, rng, grid);

    TrialFrames t;
    t.prs = random_prs(tones, rng);
    for (int f = 0; f < frames; ++f) {
        t.truth.push_back(synthesize_frame(scene, f, grid, fading));
        t.symbols.push_back(encode_frame(t.prs, random_transitions(tones, transitions, rng)));
    }
    std::mt19937_64 noise_rng(splitmix64(seed ^ 0x6E6F697365ULL));
    std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
    for (int f = 0; f < frames; ++f) {
        CsiGrid w(tones, transitions + 1);
        for (cplx& v : w.data()) {
            const double re = gauss(noise_rng);
            v = {re, gauss(noise_rng)};
        }
        t.unit_noise.push_back(std::move(w));
    }
    t.signal_power = mean_power(t.truth);
    return t;
}

double noise_var_for(double snr_db, double signal_power) {
    return std::isinf(snr_db) ? 0.0 : signal_power / std::pow(10.0, snr_db / 10.0);
}

CsiGrid observation(const TrialFrames& t, std::size_t f, double noise_var) {
    const CsiGrid& h = t.truth[f];
    const ToneGrid<cplx>& x = t.symbols[f].symbols;
    const CsiGrid& w = t.unit_noise[f];
    const double sd = std::sqrt(noise_var);
    CsiGrid y(h.tones(), h.symbols());
    for (std::size_t i = 0; i < y.data().size(); ++i) y.data()[i] = h.data()[i] * x.data()[i] + sd * w.data()[i];
    return y;
}

struct FrameEstimates {
    std::vector<EstimatorOutput> frames;
};

FrameEstimates estimate(const TrialFrames& t, Scheme scheme, const TrackerOptions& options) {
    FrameEstimates out;
    for (std::size_t f = 0; f < t.truth.size(); ++f)
        out.frames.push_back(run_scheme(scheme, observation(t, f, options.noise_var), t.prs, options));
    return out;
}

std::vector<CsiGrid> sensing_frames(const FrameEstimates& e) {
    std::vector<CsiGrid> s;
    s.reserve(e.frames.size());
    for (const auto& o : e.frames) s.push_back(o.sensing_csi);
    return s;
}

// Map restricted to the evaluation window around (r0, nu0); the values equal
// those of the full map at the same cells.
MapQuality local_quality(const SlowTimeRecord& rec, const ExperimentConfig& cfg, int r0, double nu0) {
    const RVec full_nu = doppler_grid(cfg.doppler_span_hz, cfg.doppler_points);
    const RegionSpec defaults;
    const int range_count = static_cast<int>(rec.samples.tones());
    std::vector<int> ranges;
    for (int r = std::max(0, r0 - defaults.window_range); r <= std::min(range_count - 1, r0 + defaults.window_range); ++r)
        ranges.push_back(r);

    std::size_t c0 = 0;
    for (std::size_t j = 1; j < full_nu.size(); ++j) {
        if (std::abs(full_nu[j] - nu0) < std::abs(full_nu[c0] - nu0)) c0 = j;
    }
    const auto half = static_cast<std::size_t>(defaults.window_doppler);
    const std::size_t lo = c0 > half ? c0 - half : 0;
    const std::size_t hi = std::min(full_nu.size() - 1, c0 + half);
    const RVec nu(full_nu.begin() + static_cast<std::ptrdiff_t>(lo), full_nu.begin() + static_cast<std::ptrdiff_t>(hi) + 1);

    const RangeDopplerMap map = sensing_map_window(rec, cfg.window, ranges, nu);
    RegionSpec region = region_for(map, r0, nu0);
    if (map.cols() < 2) region.dc_col = static_cast<int>(full_nu.size() / 2) - static_cast<int>(lo);
    return map_quality(map, region);
}

struct RowSink {
    std::string experiment_id;
    std::vector<ResultRow> rows;
    void add(Scheme s, double snr, double alpha, int trial, std::string metric, double value, std::string units) {
        add(std::string(scheme_name(s)), snr, alpha, trial, std::move(metric), value, std::move(units));
    }
    void add(std::string scheme, double snr, double alpha, int trial, std::string metric, double value,
             std::string units) {
        if (!std::isfinite(value)) throw std::runtime_error("non-finite metric '" + metric + "'");
        rows.push_back({experiment_id, std::move(scheme), snr, alpha, trial, std::move(metric), value, std::move(units)});
    }
};

RVec snr_points(const ExperimentConfig& cfg, bool with_control) {
    RVec snrs = cfg.snr_grid_db;
    if (with_control && cfg.include_noiseless_control) snrs.push_back(kInf);
    return snrs;
}

TrackerOptions tracker_options(const ExperimentConfig& cfg, double alpha, double noise_var) {
    TrackerOptions o;
    o.alpha = alpha;
    o.noise_var = noise_var;
    o.variance_window = cfg.variance_window;
    return o;
}

ExperimentResult finish(RowSink& sink) {
    ExperimentResult r;
    r.rows = std::move(sink.rows);
    sort_rows(r.rows);
    return r;
}

double target_velocity(const ExperimentConfig& cfg, const PathSpec& p) {
    return velocity_from_doppler(p.doppler_hz, cfg.scene.carrier_hz, cfg.scene.bistatic_scale);
}

// ---------------------------------------------------------------------------
// Config parsing.

double as_number(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError("'" + key + "' must be a number");
    return v.get<double>();
}

int as_int(const json& v, const std::string& key) {
    if (!v.is_number_integer()) throw ConfigError("'" + key + "' must be an integer");
    return v.get<int>();
}

RVec as_numbers(const json& v, const std::string& key) {
    if (!v.is_array()) throw ConfigError("'" + key + "' must be an array of numbers");
    RVec out;
    for (const json& e : v) out.push_back(as_number(e, key));
    return out;
}

std::vector<RVec> as_rows(const json& v, const std::string& key, std::size_t width) {
    if (!v.is_array()) throw ConfigError("'" + key + "' must be an array of arrays");
    std::vector<RVec> out;
    for (const json& e : v) {
        RVec row = as_numbers(e, key);
        if (row.size() != width)
            throw ConfigError("each '" + key + "' entry needs " + std::to_string(width) + " numbers");
        out.push_back(std::move(row));
    }
    return out;
}

cplx from_db(double gain_db, double phase) { return std::polar(std::pow(10.0, gain_db / 20.0), phase); }

}  // namespace

// ---------------------------------------------------------------------------

std::string_view experiment_name(ExperimentId id) {
    switch (id) {
        case ExperimentId::snr_sweep: return "snr_sweep";
        case ExperimentId::alpha_sweep: return "alpha_sweep";
        case ExperimentId::representative_scene: return "representative_scene";
        case ExperimentId::random_scenes: return "random_scenes";
        case ExperimentId::unit_oracles: return "unit_oracles";
    }
    return "unknown";
}

ExperimentId parse_experiment(std::string_view name) {
    for (ExperimentId id : {ExperimentId::snr_sweep, ExperimentId::alpha_sweep, ExperimentId::representative_scene,
                            ExperimentId::random_scenes, ExperimentId::unit_oracles}) {
        if (experiment_name(id) == name) return id;
    }
    throw ConfigError("unknown experiment '" + std::string(name) + "'");
}

SubcarrierGrid ExperimentConfig::grid() const {
    SubcarrierGrid g;
    g.null_len = null_len;
    return g;
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (trials < 1) fail("trials must be at least 1");
    if (snr_grid_db.empty()) fail("snr_grid_db must not be empty");
    for (double s : snr_grid_db) {
        if (!std::isfinite(s)) fail("snr_grid_db entries must be finite");
    }
    if (alpha_grid.empty()) fail("alpha_grid must not be empty");
    for (double a : alpha_grid) {
        if (!(a >= 0.0 && a < 1.0)) fail("alpha_grid entries must lie in [0, 1)");
    }
    if (!(alpha >= 0.0 && alpha < 1.0)) fail("alpha must lie in [0, 1)");
    if (schemes.empty()) fail("schemes must not be empty");
    if (frames < 1) fail("frames must be at least 1");
    if (fading_depths_db.empty()) fail("fading_depths_db must not be empty");
    for (double d : fading_depths_db) {
        if (!(d >= 0.0)) fail("fading depths must be non-negative");
    }
    if (!(doppler_span_hz >= 0.0) || doppler_points < 1) fail("invalid Doppler grid");
    if (null_len < 0) fail("null_len must be non-negative");
    if (variance_window < 0) fail("variance_window must be non-negative");
    if (oracle_draws < 1) fail("oracle_draws must be at least 1");
    if (output_dir.empty()) fail("output_dir must not be empty");
    try {
        grid().validate();
        scene.validate(grid());
    } catch (const ValidationError& e) {
        fail(std::string("scene: ") + e.what());
    }
    if (experiment == ExperimentId::representative_scene && scene.targets.empty())
        fail("representative_scene needs at least one target");
}

ExperimentConfig default_config(ExperimentId id) {
    ExperimentConfig c;
    c.experiment = id;
    switch (id) {
        case ExperimentId::snr_sweep:
            break;
        case ExperimentId::alpha_sweep:
            c.snr_grid_db = {5.0, 10.0, 15.0};
            c.schemes = {Scheme::proposed};
            c.frames = 4;
            c.include_noiseless_control = false;
            break;
        case ExperimentId::representative_scene: {
            c.snr_grid_db = {5.0};
            c.trials = 1;
            c.frames = 8;
            c.include_noiseless_control = false;
            c.schemes = {Scheme::open_loop, Scheme::map_direct, Scheme::proposed};
            const double gain_db = -26.0;
            const double delays[3] = {45.0, 92.0, 138.0};
            const double speeds[3] = {-210.0, 80.0, 235.0};
            const double phases[3] = {0.0, 0.7, 1.4};
            c.scene.targets.clear();
            for (int i = 0; i < 3; ++i)
                c.scene.targets.push_back({from_db(gain_db, phases[i]), delays[i],
                                           doppler_from_velocity(speeds[i], c.scene.carrier_hz, c.scene.bistatic_scale)});
            break;
        }
        case ExperimentId::random_scenes:
            c.snr_grid_db = {0.0, 4.0, 8.0};
            c.trials = 100;
            c.frames = 8;
            c.include_noiseless_control = false;
            c.schemes = {Scheme::open_loop, Scheme::map_direct, Scheme::proposed};
            break;
        case ExperimentId::unit_oracles:
            c.snr_grid_db = {0.0, 5.0, 10.0, 20.0};
            c.trials = 1;
            c.include_noiseless_control = false;
            c.schemes = {Scheme::open_loop, Scheme::proposed};
            break;
    }
    return c;
}

ExperimentConfig parse_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    if (!doc.contains("experiment") || !doc["experiment"].is_string())
        throw ConfigError("config needs a string 'experiment'");

    ExperimentConfig c = default_config(parse_experiment(doc["experiment"].get<std::string>()));
    std::optional<std::vector<RVec>> paths;
    std::optional<std::vector<RVec>> targets;

    for (const auto& [key, v] : doc.items()) {
        if (key == "experiment") continue;
        if (key == "snr_grid_db") c.snr_grid_db = as_numbers(v, key);
        else if (key == "alpha") c.alpha = as_number(v, key);
        else if (key == "alpha_grid") c.alpha_grid = as_numbers(v, key);
        else if (key == "trials") c.trials = as_int(v, key);
        else if (key == "seed") {
            if (!v.is_number_unsigned()) throw ConfigError("'seed' must be a non-negative integer");
            c.seed = v.get<std::uint64_t>();
        } else if (key == "schemes") {
            if (!v.is_array()) throw ConfigError("'schemes' must be an array of names");
            c.schemes.clear();
            for (const json& s : v) {
                if (!s.is_string()) throw ConfigError("'schemes' must be an array of names");
                try {
                    c.schemes.push_back(parse_scheme(s.get<std::string>()));
                } catch (const ValidationError& e) {
                    throw ConfigError(e.what());
                }
            }
        } else if (key == "output_dir") {
            if (!v.is_string()) throw ConfigError("'output_dir' must be a string");
            c.output_dir = v.get<std::string>();
        } else if (key == "frames") c.frames = as_int(v, key);
        else if (key == "scene_paths") paths = as_rows(v, key, 3);
        else if (key == "scene_targets") targets = as_rows(v, key, 4);
        else if (key == "scene_fading_depth_db") c.scene.fading_depth_db = as_number(v, key);
        else if (key == "scene_carrier_hz") c.scene.carrier_hz = as_number(v, key);
        else if (key == "scene_bistatic_scale") c.scene.bistatic_scale = as_number(v, key);
        else if (key == "fading_depths_db") c.fading_depths_db = as_numbers(v, key);
        else if (key == "doppler_span_hz") c.doppler_span_hz = as_number(v, key);
        else if (key == "doppler_points") c.doppler_points = as_int(v, key);
        else if (key == "window") {
            if (!v.is_string()) throw ConfigError("'window' must be a string");
            try {
                c.window = parse_window(v.get<std::string>());
            } catch (const ValidationError& e) {
                throw ConfigError(e.what());
            }
        } else if (key == "null_len") c.null_len = as_int(v, key);
        else if (key == "variance_window") c.variance_window = as_int(v, key);
        else if (key == "include_noiseless_control") {
            if (!v.is_boolean()) throw ConfigError("'include_noiseless_control' must be true or false");
            c.include_noiseless_control = v.get<bool>();
        } else if (key == "oracle_draws") c.oracle_draws = as_int(v, key);
        else throw ConfigError("unknown config key '" + key + "'");
    }

    // Velocities need the final carrier and bistatic scale, so targets are built last.
    if (paths) {
        c.scene.paths.clear();
        for (const RVec& p : *paths) c.scene.paths.push_back({from_db(p[0], p[1]), p[2], 0.0});
    }
    if (targets) {
        c.scene.targets.clear();
        for (const RVec& t : *targets)
            c.scene.targets.push_back(
                {from_db(t[0], t[1]), t[2], doppler_from_velocity(t[3], c.scene.carrier_hz, c.scene.bistatic_scale)});
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

bool operator<(const ResultRow& a, const ResultRow& b) {
    return std::tie(a.experiment_id, a.scheme, a.snr_db, a.alpha, a.trial, a.metric) <
           std::tie(b.experiment_id, b.scheme, b.snr_db, b.alpha, b.trial, b.metric);
}

void sort_rows(std::vector<ResultRow>& rows) { std::stable_sort(rows.begin(), rows.end()); }

void write_csv(const std::vector<ResultRow>& rows, std::ostream& os) {
    os << "experiment_id,scheme,snr_db,alpha,trial,metric_name,value,units\n";
    for (const ResultRow& r : rows) {
        os << r.experiment_id << ',' << r.scheme << ',' << fmt_num(r.snr_db) << ',' << fmt_num(r.alpha) << ','
           << r.trial << ',' << r.metric << ',' << fmt_num(r.value) << ',' << r.units << '\n';
    }
}

std::uint64_t trial_seed(std::uint64_t seed, std::string_view experiment_label, int trial) {
    return splitmix64(seed ^ splitmix64(fnv1a(experiment_label) + static_cast<std::uint64_t>(trial)));
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("DABSENSE_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void parallel_for(int count, int threads, const std::function<void(int)>& job) {
    const int workers = std::max(1, std::min(threads, count));
    if (workers == 1) {
        for (int i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next++; i < count; i = next++) {
                try {
                    job(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!error) error = std::current_exception();
                    next = count;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Experiments.

ExperimentResult run_snr_sweep(const ExperimentConfig& cfg, int threads) {
    const std::string label(experiment_name(ExperimentId::snr_sweep));
    const SubcarrierGrid grid = cfg.grid();
    const RVec snrs = snr_points(cfg, true);
    const std::size_t n_s = cfg.schemes.size();

    struct Cell {
        SymbolErrorCount ser;
        NmseAccumulator tracking;
        NmseAccumulator sensing;
    };
    std::vector<std::vector<Cell>> cells(static_cast<std::size_t>(cfg.trials), std::vector<Cell>(snrs.size() * n_s));

    parallel_for(cfg.trials, resolve_threads(threads), [&](int trial) {
        const TrialFrames t = draw_trial(cfg.scene, cfg.frames, grid, trial_seed(cfg.seed, label, trial));
        for (std::size_t i = 0; i < snrs.size(); ++i) {
            const double nv = noise_var_for(snrs[i], t.signal_power);
            for (std::size_t s = 0; s < n_s; ++s) {
                Cell& c = cells[static_cast<std::size_t>(trial)][i * n_s + s];
                const FrameEstimates e = estimate(t, cfg.schemes[s], tracker_options(cfg, cfg.alpha, nv));
                for (std::size_t f = 0; f < e.frames.size(); ++f) {
                    c.ser += count_symbol_errors(e.frames[f].recon, t.symbols[f]);
                    c.tracking.add(e.frames[f].tracking_csi, t.truth[f]);
                    c.sensing.add(e.frames[f].sensing_csi, t.truth[f]);
                }
            }
        }
    });

    RowSink sink{label, {}};
    for (std::size_t i = 0; i < snrs.size(); ++i) {
        for (std::size_t s = 0; s < n_s; ++s) {
            Cell pooled;
            for (int trial = 0; trial < cfg.trials; ++trial) {
                const Cell& c = cells[static_cast<std::size_t>(trial)][i * n_s + s];
                sink.add(cfg.schemes[s], snrs[i], cfg.alpha, trial, "ser", c.ser.rate(), "ratio");
                sink.add(cfg.schemes[s], snrs[i], cfg.alpha, trial, "tracking_nmse_db", c.tracking.db(), "dB");
                sink.add(cfg.schemes[s], snrs[i], cfg.alpha, trial, "sensing_nmse_db", c.sensing.db(), "dB");
                pooled.ser += c.ser;
                pooled.tracking.error += c.tracking.error;
                pooled.tracking.reference += c.tracking.reference;
                pooled.sensing.error += c.sensing.error;
                pooled.sensing.reference += c.sensing.reference;
            }
            sink.add(cfg.schemes[s], snrs[i], cfg.alpha, -1, "ser", pooled.ser.rate(), "ratio");
            sink.add(cfg.schemes[s], snrs[i], cfg.alpha, -1, "tracking_nmse_db", pooled.tracking.db(), "dB");
            sink.add(cfg.schemes[s], snrs[i], cfg.alpha, -1, "sensing_nmse_db", pooled.sensing.db(), "dB");
        }
    }
    return finish(sink);
}

ExperimentResult run_alpha_sweep(const ExperimentConfig& cfg, int threads) {
    const std::string label(experiment_name(ExperimentId::alpha_sweep));
    const SubcarrierGrid grid = cfg.grid();
    const RVec snrs = snr_points(cfg, false);
    const std::size_t n_s = cfg.schemes.size();
    const std::size_t n_a = cfg.alpha_grid.size();
    const bool with_map = !cfg.scene.targets.empty();
    const std::size_t range_count = static_cast<std::size_t>(grid.cp_len);

    struct Cell {
        SymbolErrorCount ser;
        NmseAccumulator tracking;
        GainAverager gains;
        double tbr = 0.0;
    };
    const std::size_t per_trial = n_a * snrs.size() * n_s;
    std::vector<std::vector<Cell>> cells(static_cast<std::size_t>(cfg.trials), std::vector<Cell>(per_trial));
    auto index = [&](std::size_t a, std::size_t i, std::size_t s) { return (a * snrs.size() + i) * n_s + s; };

    parallel_for(cfg.trials, resolve_threads(threads), [&](int trial) {
        const TrialFrames t = draw_trial(cfg.scene, cfg.frames, grid, trial_seed(cfg.seed, label, trial));
        for (std::size_t a = 0; a < n_a; ++a) {
            for (std::size_t i = 0; i < snrs.size(); ++i) {
                const double nv = noise_var_for(snrs[i], t.signal_power);
                for (std::size_t s = 0; s < n_s; ++s) {
                    Cell& c = cells[static_cast<std::size_t>(trial)][index(a, i, s)];
                    const FrameEstimates e = estimate(t, cfg.schemes[s], tracker_options(cfg, cfg.alpha_grid[a], nv));
                    for (std::size_t f = 0; f < e.frames.size(); ++f) {
                        c.ser += count_symbol_errors(e.frames[f].recon, t.symbols[f]);
                        c.tracking.add(e.frames[f].tracking_csi, t.truth[f]);
                        c.gains.add(e.frames[f].tracking_gain, e.frames[f].sensing_gain);
                    }
                    if (with_map) {
                        const PathSpec& tgt = cfg.scene.targets.front();
                        const SlowTimeRecord rec = build_record(sensing_frames(e), range_count, grid);
                        c.tbr = local_quality(rec, cfg, static_cast<int>(std::lround(tgt.delay_bins)), tgt.doppler_hz).tbr_db;
                    }
                }
            }
        }
    });

    RowSink sink{label, {}};
    for (std::size_t a = 0; a < n_a; ++a) {
        const double alpha = cfg.alpha_grid[a];
        for (std::size_t i = 0; i < snrs.size(); ++i) {
            for (std::size_t s = 0; s < n_s; ++s) {
                const Scheme scheme = cfg.schemes[s];
                SymbolErrorCount ser;
                NmseAccumulator tracking;
                GainAverager gains;
                RVec tbrs;
                for (int trial = 0; trial < cfg.trials; ++trial) {
                    const Cell& c = cells[static_cast<std::size_t>(trial)][index(a, i, s)];
                    sink.add(scheme, snrs[i], alpha, trial, "ser", c.ser.rate(), "ratio");
                    sink.add(scheme, snrs[i], alpha, trial, "tracking_nmse_db", c.tracking.db(), "dB");
                    sink.add(scheme, snrs[i], alpha, trial, "k_bar", c.gains.mean_tracking(), "ratio");
                    sink.add(scheme, snrs[i], alpha, trial, "g_bar", c.gains.mean_sensing(), "ratio");
                    if (with_map) sink.add(scheme, snrs[i], alpha, trial, "tbr_db", c.tbr, "dB");
                    ser += c.ser;
                    tracking.error += c.tracking.error;
                    tracking.reference += c.tracking.reference;
                    gains.tracking_sum += c.gains.tracking_sum;
                    gains.sensing_sum += c.gains.sensing_sum;
                    gains.count += c.gains.count;
                    tbrs.push_back(c.tbr);
                }
                sink.add(scheme, snrs[i], alpha, -1, "ser", ser.rate(), "ratio");
                sink.add(scheme, snrs[i], alpha, -1, "tracking_nmse_db", tracking.db(), "dB");
                sink.add(scheme, snrs[i], alpha, -1, "k_bar", gains.mean_tracking(), "ratio");
                sink.add(scheme, snrs[i], alpha, -1, "g_bar", gains.mean_sensing(), "ratio");
                if (with_map) sink.add(scheme, snrs[i], alpha, -1, "tbr_db", median(tbrs), "dB");
            }
        }
    }
    return finish(sink);
}

std::vector<std::pair<std::size_t, std::size_t>> find_peaks(const RangeDopplerMap& map, int count, int row_guard,
                                                            int col_guard) {
    std::vector<char> blocked(map.values.size(), 0);
    std::vector<std::pair<std::size_t, std::size_t>> peaks;
    for (int n = 0; n < count; ++n) {
        std::size_t best = map.values.size();
        for (std::size_t i = 0; i < map.values.size(); ++i) {
            if (blocked[i]) continue;
            if (best == map.values.size() || std::norm(map.values[i]) > std::norm(map.values[best])) best = i;
        }
        if (best == map.values.size()) break;
        const auto r = static_cast<int>(best / map.cols());
        const auto c = static_cast<int>(best % map.cols());
        peaks.emplace_back(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
        for (int i = std::max(0, r - row_guard); i <= std::min(static_cast<int>(map.rows()) - 1, r + row_guard); ++i) {
            for (int j = std::max(0, c - col_guard); j <= std::min(static_cast<int>(map.cols()) - 1, c + col_guard); ++j)
                blocked[static_cast<std::size_t>(i) * map.cols() + static_cast<std::size_t>(j)] = 1;
        }
    }
    return peaks;
}

ExperimentResult run_representative_scene(const ExperimentConfig& cfg, int threads) {
    const std::string label(experiment_name(ExperimentId::representative_scene));
    const SubcarrierGrid grid = cfg.grid();
    const RVec snrs = snr_points(cfg, false);
    const std::size_t n_s = cfg.schemes.size();
    const std::size_t n_t = cfg.scene.targets.size();
    MapOptions map_options;
    map_options.doppler_span_hz = cfg.doppler_span_hz;
    map_options.doppler_points = cfg.doppler_points;
    map_options.window = cfg.window;

    struct Cell {
        std::vector<MapQuality> quality;
        double peaks_ok = 0.0;
        RangeDopplerMap map;
    };
    std::vector<std::vector<Cell>> cells(static_cast<std::size_t>(cfg.trials), std::vector<Cell>(snrs.size() * n_s));

    parallel_for(cfg.trials, resolve_threads(threads), [&](int trial) {
        const TrialFrames t = draw_trial(cfg.scene, cfg.frames, grid, trial_seed(cfg.seed, label, trial));
        for (std::size_t i = 0; i < snrs.size(); ++i) {
            const double nv = noise_var_for(snrs[i], t.signal_power);
            for (std::size_t s = 0; s < n_s; ++s) {
                Cell& c = cells[static_cast<std::size_t>(trial)][i * n_s + s];
                const FrameEstimates e = estimate(t, cfg.schemes[s], tracker_options(cfg, cfg.alpha, nv));
                const std::vector<CsiGrid> sensing = sensing_frames(e);
                RangeDopplerMap map = sensing_map(sensing, map_options, grid);

                const RegionSpec defaults;
                const auto peaks = find_peaks(map, static_cast<int>(n_t), defaults.guard_range, defaults.guard_doppler);
                int hits = 0;
                for (const PathSpec& tgt : cfg.scene.targets) {
                    const RegionSpec region = region_for(map, static_cast<int>(std::lround(tgt.delay_bins)), tgt.doppler_hz);
                    c.quality.push_back(map_quality(map, region));
                    hits += std::any_of(peaks.begin(), peaks.end(), [&](const auto& p) {
                        return std::abs(static_cast<int>(p.first) - region.target_row) <= 1 &&
                               std::abs(static_cast<int>(p.second) - region.target_col) <= 1;
                    });
                }
                c.peaks_ok = hits == static_cast<int>(n_t) ? 1.0 : 0.0;
                if (trial == 0) c.map = std::move(map);
            }
        }
    });

    RowSink sink{label, {}};
    ExperimentResult result;
    for (std::size_t i = 0; i < snrs.size(); ++i) {
        for (std::size_t s = 0; s < n_s; ++s) {
            const Scheme scheme = cfg.schemes[s];
            RVec min_tbr;
            RVec peaks;
            std::vector<RVec> per_target(n_t * 3);
            for (int trial = 0; trial < cfg.trials; ++trial) {
                const Cell& c = cells[static_cast<std::size_t>(trial)][i * n_s + s];
                double lowest = kDbCap;
                for (std::size_t k = 0; k < n_t; ++k) {
                    const std::string tag = "_t" + std::to_string(k + 1);
                    const MapQuality& q = c.quality[k];
                    sink.add(scheme, snrs[i], cfg.alpha, trial, "tbr_db" + tag, q.tbr_db, "dB");
                    sink.add(scheme, snrs[i], cfg.alpha, trial, "range_focus_db" + tag, q.range_focus_db, "dB");
                    sink.add(scheme, snrs[i], cfg.alpha, trial, "doppler_focus_db" + tag, q.doppler_focus_db, "dB");
                    per_target[k * 3].push_back(q.tbr_db);
                    per_target[k * 3 + 1].push_back(q.range_focus_db);
                    per_target[k * 3 + 2].push_back(q.doppler_focus_db);
                    lowest = std::min(lowest, q.tbr_db);
                }
                sink.add(scheme, snrs[i], cfg.alpha, trial, "min_tbr_db", lowest, "dB");
                sink.add(scheme, snrs[i], cfg.alpha, trial, "peaks_at_targets", c.peaks_ok, "bool");
                min_tbr.push_back(lowest);
                peaks.push_back(c.peaks_ok);
                if (trial == 0 && i == 0) result.maps.push_back({std::string(scheme_name(scheme)), c.map});
            }
            for (std::size_t k = 0; k < n_t; ++k) {
                const std::string tag = "_t" + std::to_string(k + 1);
                sink.add(scheme, snrs[i], cfg.alpha, -1, "tbr_db" + tag, median(per_target[k * 3]), "dB");
                sink.add(scheme, snrs[i], cfg.alpha, -1, "range_focus_db" + tag, median(per_target[k * 3 + 1]), "dB");
                sink.add(scheme, snrs[i], cfg.alpha, -1, "doppler_focus_db" + tag, median(per_target[k * 3 + 2]), "dB");
            }
            sink.add(scheme, snrs[i], cfg.alpha, -1, "min_tbr_db", median(min_tbr), "dB");
            sink.add(scheme, snrs[i], cfg.alpha, -1, "peaks_at_targets",
                     *std::min_element(peaks.begin(), peaks.end()), "bool");
        }
    }
    for (std::size_t k = 0; k < n_t; ++k) {
        const PathSpec& tgt = cfg.scene.targets[k];
        const std::string tag = "_t" + std::to_string(k + 1);
        sink.add("truth", kInf, 0.0, -1, "delay_bins" + tag, tgt.delay_bins, "bins");
        sink.add("truth", kInf, 0.0, -1, "doppler_hz" + tag, tgt.doppler_hz, "Hz");
        sink.add("truth", kInf, 0.0, -1, "velocity_mps" + tag, target_velocity(cfg, tgt), "m/s");
    }
    ExperimentResult r = finish(sink);
    r.maps = std::move(result.maps);
    return r;
}

ExperimentResult run_random_scenes(const ExperimentConfig& cfg, int threads) {
    const std::string base_label(experiment_name(ExperimentId::random_scenes));
    const SubcarrierGrid grid = cfg.grid();
    const RVec snrs = snr_points(cfg, false);
    const std::size_t n_s = cfg.schemes.size();
    const std::size_t range_count = static_cast<std::size_t>(grid.cp_len);

    RowSink sink{"", {}};
    for (double depth : cfg.fading_depths_db) {
        char tag[32];
        std::snprintf(tag, sizeof tag, ":fade%gdB", depth);
        const std::string label = base_label + tag;

        std::vector<std::vector<MapQuality>> cells(static_cast<std::size_t>(cfg.trials),
                                                   std::vector<MapQuality>(snrs.size() * n_s));
        std::vector<PathSpec> drawn(static_cast<std::size_t>(cfg.trials));

        parallel_for(cfg.trials, resolve_threads(threads), [&](int trial) {
            const std::uint64_t seed = trial_seed(cfg.seed, label, trial);
            std::mt19937_64 scene_rng(splitmix64(seed ^ 0x7363656E65ULL));
            SceneConfig base = cfg.scene;
            base.fading_depth_db = depth;
            const SceneConfig scene = random_scene(scene_rng, base);
            const PathSpec& tgt = scene.targets.front();
            drawn[static_cast<std::size_t>(trial)] = tgt;

            const TrialFrames t = draw_trial(scene, cfg.frames, grid, seed);
            for (std::size_t i = 0; i < snrs.size(); ++i) {
                const double nv = noise_var_for(snrs[i], t.signal_power);
                for (std::size_t s = 0; s < n_s; ++s) {
                    const FrameEstimates e = estimate(t, cfg.schemes[s], tracker_options(cfg, cfg.alpha, nv));
                    const SlowTimeRecord rec = build_record(sensing_frames(e), range_count, grid);
                    cells[static_cast<std::size_t>(trial)][i * n_s + s] =
                        local_quality(rec, cfg, static_cast<int>(std::lround(tgt.delay_bins)), tgt.doppler_hz);
                }
            }
        });

        sink.experiment_id = label;
        for (std::size_t i = 0; i < snrs.size(); ++i) {
            for (std::size_t s = 0; s < n_s; ++s) {
                RVec tbr;
                RVec rf;
                RVec df;
                for (int trial = 0; trial < cfg.trials; ++trial) {
                    const MapQuality& q = cells[static_cast<std::size_t>(trial)][i * n_s + s];
                    sink.add(cfg.schemes[s], snrs[i], cfg.alpha, trial, "tbr_db", q.tbr_db, "dB");
                    sink.add(cfg.schemes[s], snrs[i], cfg.alpha, trial, "range_focus_db", q.range_focus_db, "dB");
                    sink.add(cfg.schemes[s], snrs[i], cfg.alpha, trial, "doppler_focus_db", q.doppler_focus_db, "dB");
                    tbr.push_back(q.tbr_db);
                    rf.push_back(q.range_focus_db);
                    df.push_back(q.doppler_focus_db);
                }
                sink.add(cfg.schemes[s], snrs[i], cfg.alpha, -1, "tbr_db", median(tbr), "dB");
                sink.add(cfg.schemes[s], snrs[i], cfg.alpha, -1, "range_focus_db", median(rf), "dB");
                sink.add(cfg.schemes[s], snrs[i], cfg.alpha, -1, "doppler_focus_db", median(df), "dB");
            }
        }
        for (int trial = 0; trial < cfg.trials; ++trial) {
            const PathSpec& tgt = drawn[static_cast<std::size_t>(trial)];
            sink.add("truth", kInf, 0.0, trial, "delay_bins", tgt.delay_bins, "bins");
            sink.add("truth", kInf, 0.0, trial, "doppler_hz", tgt.doppler_hz, "Hz");
            sink.add("truth", kInf, 0.0, trial, "gain_db", 20.0 * std::log10(std::abs(tgt.gain)), "dB");
        }
    }
    return finish(sink);
}

FlatChannelStats flat_channel_oracle(double snr_db, int draws, std::uint64_t seed) {
    if (draws < 1) throw ValidationError("draws must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> phase(-kPi, kPi);
    std::uniform_int_distribution<int> pick(0, kAlphabetSize - 1);
    const auto& alphabet = transition_alphabet();
    const double nv = std::pow(10.0, -snr_db / 10.0);
    const double sd = std::sqrt(nv / 2.0);

    FlatChannelStats st;
    st.snr_db = snr_db;
    cplx sum_p{};
    cplx sum_o{};
    double sq_p = 0.0;
    double sq_o = 0.0;
    for (int n = 0; n < draws; ++n) {
        const cplx h = std::polar(1.0, phase(rng));
        const cplx x_prev = alphabet[static_cast<std::size_t>(pick(rng))];
        const int q = pick(rng);
        const cplx qv = alphabet[static_cast<std::size_t>(q)];
        const cplx y_prev = h * x_prev + cplx{sd * gauss(rng), sd * gauss(rng)};
        const cplx y = h * x_prev * qv + cplx{sd * gauss(rng), sd * gauss(rng)};

        const TransitionDecision d = map_detect(y, h, x_prev, nv);
        st.slips += d.q != q;
        ++st.decisions;

        const cplx s_p = y * std::conj(h * x_prev) * std::conj(qv);
        const cplx s_o = y * std::conj(y_prev) * std::conj(qv);
        sum_p += s_p;
        sum_o += s_o;
        sq_p += std::norm(s_p);
        sq_o += std::norm(s_o);
    }
    const double n = static_cast<double>(draws);
    auto gamma = [n](cplx sum, double sq) {
        const cplx mean = sum / n;
        const double var = sq / n - std::norm(mean);
        return var > 0.0 ? std::norm(mean) / var : kInf;
    };
    st.slip_rate = static_cast<double>(st.slips) / n;
    st.gamma_proposed_theory = gamma_proposed(1.0, nv, 0.0);
    st.gamma_open_loop_theory = gamma_open_loop(1.0, nv, 0.0);
    st.gamma_proposed_measured = gamma(sum_p, sq_p);
    st.gamma_open_loop_measured = gamma(sum_o, sq_o);
    return st;
}

ExperimentResult run_unit_oracles(const ExperimentConfig& cfg, int threads) {
    const std::string label(experiment_name(ExperimentId::unit_oracles));
    const RVec snrs = snr_points(cfg, false);
    std::vector<FlatChannelStats> stats(snrs.size());
    parallel_for(static_cast<int>(snrs.size()), resolve_threads(threads), [&](int i) {
        stats[static_cast<std::size_t>(i)] =
            flat_channel_oracle(snrs[static_cast<std::size_t>(i)], cfg.oracle_draws, trial_seed(cfg.seed, label, i));
    });

    RowSink sink{label, {}};
    for (const FlatChannelStats& st : stats) {
        const double se = std::sqrt(st.slip_rate * (1.0 - st.slip_rate) / static_cast<double>(st.decisions));
        sink.add(Scheme::proposed, st.snr_db, 0.0, -1, "slip_rate", st.slip_rate, "ratio");
        sink.add(Scheme::proposed, st.snr_db, 0.0, -1, "slip_rate_se", se, "ratio");
        sink.add(Scheme::proposed, st.snr_db, 0.0, -1, "slip_bound", slip_bound(st.gamma_proposed_theory), "ratio");
        sink.add(Scheme::proposed, st.snr_db, 0.0, -1, "gamma_theory", st.gamma_proposed_theory, "linear");
        sink.add(Scheme::proposed, st.snr_db, 0.0, -1, "gamma_measured", st.gamma_proposed_measured, "linear");
        sink.add(Scheme::open_loop, st.snr_db, 0.0, -1, "gamma_theory", st.gamma_open_loop_theory, "linear");
        sink.add(Scheme::open_loop, st.snr_db, 0.0, -1, "gamma_measured", st.gamma_open_loop_measured, "linear");
        sink.add("ratio", st.snr_db, 0.0, -1, "gamma_ratio_measured",
                 st.gamma_proposed_measured / st.gamma_open_loop_measured, "linear");
        sink.add("ratio", st.snr_db, 0.0, -1, "gamma_ratio_theory",
                 st.gamma_proposed_theory / st.gamma_open_loop_theory, "linear");
    }
    return finish(sink);
}

ExperimentResult run_experiment(const ExperimentConfig& config, int threads) {
    config.validate();
    switch (config.experiment) {
        case ExperimentId::snr_sweep: return run_snr_sweep(config, threads);
        case ExperimentId::alpha_sweep: return run_alpha_sweep(config, threads);
        case ExperimentId::representative_scene: return run_representative_scene(config, threads);
        case ExperimentId::random_scenes: return run_random_scenes(config, threads);
        case ExperimentId::unit_oracles: return run_unit_oracles(config, threads);
    }
    throw ConfigError("unknown experiment");
}

std::filesystem::path write_outputs(const ExperimentResult& result, const ExperimentConfig& config,
                                    const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());

    const std::string stem(experiment_name(config.experiment));
    const std::filesystem::path csv = dir / (stem + ".csv");
    {
        std::ofstream os(csv, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + csv.string());
        write_csv(result.rows, os);
        if (!os) throw std::runtime_error("write failed for " + csv.string());
    }
    for (const NamedMap& m : result.maps) {
        const std::filesystem::path base = dir / (stem + "_" + m.name);
        std::ofstream mc(base.string() + ".csv", std::ios::binary);
        std::ofstream mb(base.string() + ".bin", std::ios::binary);
        if (!mc || !mb) throw std::runtime_error("cannot write map files under " + dir.string());
        write_map_csv(m.map, mc);
        write_map_binary(m.map, mb);
    }
    return csv;
}

}  // namespace dabsense

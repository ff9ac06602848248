#include "dabsense/scene.hpp"

#include <algorithm>
#include <cmath>

namespace dabsense {

namespace {

CVec phase_ramp(double delay_bins, const SubcarrierGrid& grid) {
    const std::vector<int> ks = active_indices(grid);
    CVec ramp(ks.size());
    const double step = -2.0 * kPi * delay_bins / grid.fft_size;
    for (std::size_t i = 0; i < ks.size(); ++i) ramp[i] = std::polar(1.0, step * ks[i]);
    return ramp;
}

struct PreparedPath {
    cplx gain;
    double doppler_hz;
    CVec response;  // phase ramp, with fading folded in for clutter paths
};

std::vector<PreparedPath> prepare(const SceneConfig& scene, const SubcarrierGrid& grid,
                                  std::span<const cplx> fading) {
    const auto tones = static_cast<std::size_t>(grid.active_count);
    if (!fading.empty() && fading.size() != tones)
        throw ValidationError("fading profile length does not match the active tone count");

    std::vector<PreparedPath> out;
    out.reserve(scene.paths.size() + scene.targets.size());
    for (const PathSpec& p : scene.paths) {
        PreparedPath prep{p.gain, p.doppler_hz, phase_ramp(p.delay_bins, grid)};
        if (!fading.empty()) {
            for (std::size_t k = 0; k < tones; ++k) prep.response[k] *= fading[k];
        }
        out.push_back(std::move(prep));
    }
    for (const PathSpec& p : scene.targets)
        out.push_back({p.gain, p.doppler_hz, phase_ramp(p.delay_bins, grid)});
    return out;
}

void accumulate(const std::vector<PreparedPath>& paths, double t, std::span<cplx> out) {
    std::fill(out.begin(), out.end(), cplx{});
    for (const PreparedPath& p : paths) {
        const cplx a = p.gain * std::polar(1.0, 2.0 * kPi * p.doppler_hz * t);
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += a * p.response[k];
    }
}

}  // namespace

void SceneConfig::validate(const SubcarrierGrid& grid) const {
    if (paths.empty()) throw ValidationError("scene needs at least one path");
    if (!(noise_var >= 0.0)) throw ValidationError("noise_var must be non-negative");
    if (!(fading_depth_db >= 0.0)) throw ValidationError("fading_depth_db must be non-negative");
    if (frames < 1) throw ValidationError("frames must be at least 1");
    if (!(bistatic_scale >= 1.0 && bistatic_scale <= 2.0))
        throw ValidationError("bistatic_scale must lie in [1, 2]");
    auto check = [&](const PathSpec& p) {
        if (!(p.delay_bins >= 0.0 && p.delay_bins < grid.cp_len))
            throw ValidationError("path delay must lie inside the cyclic prefix");
    };
    std::for_each(paths.begin(), paths.end(), check);
    std::for_each(targets.begin(), targets.end(), check);
}

double doppler_from_velocity(double velocity_mps, double carrier_hz, double bistatic_scale) {
    return bistatic_scale * velocity_mps * carrier_hz / kSpeedOfLight;
}

double velocity_from_doppler(double doppler_hz, double carrier_hz, double bistatic_scale) {
    return doppler_hz * kSpeedOfLight / (carrier_hz * bistatic_scale);
}

SceneConfig default_scene() {
    auto db = [](double gain_db, double phase) { return std::polar(std::pow(10.0, gain_db / 20.0), phase); };
    SceneConfig s;
    s.paths = {
        {cplx{1.0, 0.0}, 0.0, 0.0},
        {db(-10.0, 0.9), 8.0, 0.0},
        {db(-14.0, -2.1), 21.0, 0.0},
    };
    s.targets = {{db(-26.0, 0.4), 90.0, doppler_from_velocity(120.0, s.carrier_hz, s.bistatic_scale)}};
    s.fading_depth_db = 20.0;
    return s;
}

CVec synthesize_csi(const SceneConfig& scene, int m, int f, const SubcarrierGrid& grid,
                    std::span<const cplx> fading) {
    const auto paths = prepare(scene, grid, fading);
    CVec h(static_cast<std::size_t>(grid.active_count));
    accumulate(paths, slow_time(m, f, grid), h);
    return h;
}

CsiGrid synthesize_frame(const SceneConfig& scene, int f, const SubcarrierGrid& grid,
                         std::span<const cplx> fading) {
    const auto paths = prepare(scene, grid, fading);
    CsiGrid out(static_cast<std::size_t>(grid.active_count),
                static_cast<std::size_t>(grid.useful_symbols_per_frame));
    for (int m = 0; m < grid.useful_symbols_per_frame; ++m)
        accumulate(paths, slow_time(m, f, grid), out.symbol(static_cast<std::size_t>(m)));
    return out;
}

CVec observe(std::span<const cplx> h, std::span<const cplx> x, double noise_var, std::mt19937_64& rng) {
    if (!(noise_var >= 0.0)) throw ValidationError("noise_var must be non-negative");
    if (h.size() != x.size()) throw ValidationError("CSI and symbol vectors differ in length");
    CVec y(h.size());
    if (noise_var == 0.0) {
        for (std::size_t k = 0; k < h.size(); ++k) y[k] = h[k] * x[k];
        return y;
    }
    std::normal_distribution<double> gauss(0.0, std::sqrt(noise_var / 2.0));
    for (std::size_t k = 0; k < h.size(); ++k) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        y[k] = h[k] * x[k] + cplx{re, im};
    }
    return y;
}

CsiGrid observe_frame(const CsiGrid& h, const ToneGrid<cplx>& x, double noise_var, std::mt19937_64& rng) {
    if (!h.same_shape(x)) throw ValidationError("CSI and symbol grids differ in shape");
    CsiGrid y(h.tones(), h.symbols());
    for (std::size_t m = 0; m < h.symbols(); ++m) {
        const CVec col = observe(h.symbol(m), x.symbol(m), noise_var, rng);
        std::copy(col.begin(), col.end(), y.symbol(m).begin());
    }
    return y;
}

CVec fading_profile(double depth_db, std::mt19937_64& rng, const SubcarrierGrid& grid) {
    if (!(depth_db >= 0.0)) throw ValidationError("fading depth must be non-negative");
    const auto tones = static_cast<std::size_t>(grid.active_count);
    if (depth_db == 0.0) return CVec(tones, cplx{1.0, 0.0});

    // A few short-delay scatterers give the shape; the log-magnitude is then
    // stretched so that max/min hits the requested depth exactly.
    constexpr int kScatterers = 4;
    std::uniform_real_distribution<double> delay(1.0, 16.0);
    std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
    CVec raw;
    RVec log_mag(tones);
    double lo = 0.0;
    double hi = 0.0;
    do {
        raw.assign(tones, cplx{1.0, 0.0});
        for (int i = 0; i < kScatterers; ++i) {
            const cplx b{gauss(rng), gauss(rng)};
            const CVec ramp = phase_ramp(delay(rng), grid);
            for (std::size_t k = 0; k < tones; ++k) raw[k] += b * ramp[k];
        }
        for (std::size_t k = 0; k < tones; ++k) log_mag[k] = std::log(std::max(std::abs(raw[k]), 1e-12));
        const auto [mn, mx] = std::minmax_element(log_mag.begin(), log_mag.end());
        lo = *mn;
        hi = *mx;
    } while (hi - lo < 1e-6);

    const double target_span = depth_db / 20.0 * std::log(10.0);
    CVec out(tones);
    double power = 0.0;
    for (std::size_t k = 0; k < tones; ++k) {
        const double mag = std::exp((log_mag[k] - hi) * target_span / (hi - lo));
        out[k] = std::polar(mag, std::arg(raw[k]));
        power += mag * mag;
    }
    const double scale = 1.0 / std::sqrt(power / static_cast<double>(tones));
    for (auto& v : out) v *= scale;
    return out;
}

SceneConfig random_scene(std::mt19937_64& rng, const SceneConfig& base, const RandomTargetLimits& limits) {
    std::uniform_int_distribution<int> delay(limits.min_delay_bins, limits.max_delay_bins);
    std::uniform_real_distribution<double> speed(limits.min_speed_mps, limits.max_speed_mps);
    std::uniform_real_distribution<double> gain_db(limits.min_gain_db, limits.max_gain_db);
    std::uniform_real_distribution<double> phase(-kPi, kPi);
    std::bernoulli_distribution approaching(0.5);

    double reference = 0.0;
    for (const PathSpec& p : base.paths) reference = std::max(reference, std::abs(p.gain));

    PathSpec target;
    target.delay_bins = delay(rng);
    const double v = speed(rng) * (approaching(rng) ? -1.0 : 1.0);
    target.doppler_hz = doppler_from_velocity(v, base.carrier_hz, base.bistatic_scale);
    target.gain = std::polar(reference * std::pow(10.0, gain_db(rng) / 20.0), phase(rng));

    SceneConfig out = base;
    out.targets = {target};
    return out;
}

double mean_power(std::span<const CsiGrid> frames) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const CsiGrid& g : frames) {
        for (const cplx& h : g.data()) sum += std::norm(h);
        count += g.data().size();
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace dabsense

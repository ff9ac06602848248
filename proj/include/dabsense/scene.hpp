#pragma once

#include <random>
#include <vector>

#include "dabsense/common.hpp"
#include "dabsense/numerology.hpp"

namespace dabsense {

/// One propagation path. The gain rotates in slow time at `doppler_hz`
/// (zero for static paths); the delay is in sample bins (tau = delay_bins / f_s).
struct PathSpec {
    cplx gain{1.0, 0.0};
    double delay_bins = 0.0;
    double doppler_hz = 0.0;
};

struct SceneConfig {
    std::vector<PathSpec> paths;    // direct path and static multipath, shaped by the fading profile
    std::vector<PathSpec> targets;  // moving reflectors
    double noise_var = 0.0;         // post-FFT complex noise variance per resource element
    double fading_depth_db = 0.0;
    int frames = 1;
    double carrier_hz = 202.928e6;
    double bistatic_scale = 2.0;

    void validate(const SubcarrierGrid& grid = {}) const;
};

/// nu = bistatic_scale * v * carrier / c
double doppler_from_velocity(double velocity_mps, double carrier_hz, double bistatic_scale);
double velocity_from_doppler(double doppler_hz, double carrier_hz, double bistatic_scale);

/// Unit direct path at bin 0, static multipath at bins 8 (-10 dB) and 21 (-14 dB),
/// one target at bin 90 moving at 120 m/s with -26 dB gain, 20 dB fading depth.
SceneConfig default_scene();

/// CSI over the active tones at useful symbol m of frame f:
/// H_k = sum_p a_p(t) exp(-j 2 pi k delay_p / N_fft), a_p(t) = gain_p exp(j 2 pi nu_p t).
/// A non-empty `fading` multiplies the `paths` contribution tone by tone.
CVec synthesize_csi(const SceneConfig& scene, int m, int f, const SubcarrierGrid& grid = {},
                    std::span<const cplx> fading = {});

/// All useful symbols of frame f.
CsiGrid synthesize_frame(const SceneConfig& scene, int f, const SubcarrierGrid& grid = {},
                         std::span<const cplx> fading = {});

/// Y = H X + W with W circular Gaussian of total variance noise_var.
CVec observe(std::span<const cplx> h, std::span<const cplx> x, double noise_var, std::mt19937_64& rng);
CsiGrid observe_frame(const CsiGrid& h, const ToneGrid<cplx>& x, double noise_var, std::mt19937_64& rng);

/// Smooth multiplicative frequency profile over the active tones whose
/// max/min magnitude ratio is depth_db, normalised to unit mean power.
/// depth_db == 0 gives all ones.
CVec fading_profile(double depth_db, std::mt19937_64& rng, const SubcarrierGrid& grid = {});

/// Ranges used by random_scene.
struct RandomTargetLimits {
    int min_delay_bins = 55;
    int max_delay_bins = 220;
    double min_speed_mps = 50.0;
    double max_speed_mps = 240.0;
    double min_gain_db = -35.0;
    double max_gain_db = -21.0;
};

/// `base` with its targets replaced by one random target: integer delay,
/// random-sign velocity, and gain relative to the strongest path of `base`.
SceneConfig random_scene(std::mt19937_64& rng, const SceneConfig& base = default_scene(),
                         const RandomTargetLimits& limits = {});

/// Mean |H|^2 over every entry of the given frames.
double mean_power(std::span<const CsiGrid> frames);

}  // namespace dabsense

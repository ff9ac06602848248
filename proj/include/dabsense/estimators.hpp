#pragma once

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include "dabsense/common.hpp"
#include "dabsense/numerology.hpp"

namespace dabsense {

enum class Scheme { open_loop, map_direct, posterior_a0, proposed };

std::string_view scheme_name(Scheme s);
/// Throws ValidationError for unknown names.
Scheme parse_scheme(std::string_view name);
const std::array<Scheme, 4>& all_schemes();

using Posterior = std::array<double, kAlphabetSize>;

// ---------------------------------------------------------------------------
// Per-tone building blocks of the posterior-aware tracker.

/// Frequency smoothing over the ordered active list:
/// out_k = (1 - alpha) h_k + alpha * mean(neighbours of k).
/// End tones have one neighbour. Throws ValidationError unless 0 <= alpha < 1.
CVec smooth(std::span<const cplx> h, double alpha);

/// One-step CSI prediction from the previous tracked CSI.
CVec predict(std::span<const cplx> prev_tracked, double alpha);

/// |prev - predicted|^2 per tone, then a moving mean over +-window tones
/// (truncated at the band edges). window == 0 disables the averaging.
RVec prediction_variance(std::span<const cplx> prev_tracked, std::span<const cplx> predicted,
                         int window = 1);

struct TransitionDecision {
    int q = 0;
    std::array<double, kAlphabetSize> residuals{};
    bool degenerate = false;  // zero prediction: every hypothesis looks the same
};

/// Residuals |y - h_pred x_prev q|^2 over the alphabet and their argmin
/// (ties go to the lowest index).
TransitionDecision map_detect(cplx y, cplx h_pred, cplx x_prev, double like_var);

/// Posterior over transitions, proportional to exp(-r / like_var), evaluated
/// relative to the smallest residual. like_var <= 0 gives the hard limit.
Posterior posteriors(const std::array<double, kAlphabetSize>& residuals, double like_var);

/// sigma_z^2 = sigma_0^2 + |h_pred|^2 sum_q pi(q) |q / q_hat - 1|^2
double observation_variance(const Posterior& post, int q_hat, cplx h_pred, double noise_var);

struct FusionResult {
    cplx estimate;
    double gain = 0.0;
    bool degenerate = false;  // both variances zero, prediction kept
};

/// K = P / (P + R), estimate = h_pred + K (z - h_pred).
FusionResult lmmse_update(cplx h_pred, cplx z, double pred_var, double obs_var);

/// Posterior concentration of the chosen transition mapped to [0, 1].
double reliability(const Posterior& post, int q_hat);

/// G = K + eta (1 - K)
double sensing_gain(double tracking_gain, double eta);

// ---------------------------------------------------------------------------
// Frame-level estimators.

struct TrackerOptions {
    double alpha = 0.15;
    double noise_var = 0.0;
    int variance_window = 1;
    // Test hooks: override the computed gain or reliability on every tone.
    std::optional<double> forced_tracking_gain;
    std::optional<double> forced_reliability;
};

/// Recursive state of the tracker after processing one useful symbol.
struct TrackerState {
    CVec tracked_csi;
    CVec predicted_csi;
    CVec sensing_csi;
    CVec observation;  // Z = Y / X_hat
    RVec pred_var;
    RVec like_var;
    RVec obs_var;
    std::vector<Posterior> posteriors;
    RVec tracking_gain;
    RVec sensing_gain;
    RVec reliability;
    CVec recon_symbols;
    std::vector<TransitionIndex> decisions;

    /// PRS anchoring: X_hat = PRS, tracked = sensing = Y / PRS, gains 1.
    static TrackerState anchor(std::span<const cplx> y_prs, std::span<const cplx> prs);

    /// Advance to the next useful symbol given its observation.
    void advance(std::span<const cplx> y, const TrackerOptions& options);
};

struct EstimatorOutput {
    Scheme scheme = Scheme::proposed;
    SymbolGrid recon;
    CsiGrid tracking_csi;
    CsiGrid sensing_csi;
    ToneGrid<double> tracking_gain;
    ToneGrid<double> sensing_gain;
};

/// Posterior-aware tracker over one frame. Column 0 of `y_frame` is the PRS symbol.
EstimatorOutput track_frame(const CsiGrid& y_frame, std::span<const cplx> prs, const TrackerOptions& options);

/// Forces the decided transition at (tone, symbol) to be offset by `offset`
/// alphabet steps. Symbol indices count useful symbols, so symbol >= 1.
struct SlipInjection {
    std::size_t tone = 0;
    std::size_t symbol = 1;
    int offset = 1;
};

/// Two-symbol differential detection, cumulative symbol chain, direct division.
EstimatorOutput open_loop_estimate(const CsiGrid& y_frame, std::span<const cplx> prs,
                                   std::span<const SlipInjection> slips = {});

/// Prediction-aided detection that admits Z directly as both CSI outputs.
EstimatorOutput map_direct_estimate(const CsiGrid& y_frame, std::span<const cplx> prs, double alpha,
                                    double noise_var);

/// Dispatch by scheme; posterior_a0 is the tracker with alpha forced to 0.
EstimatorOutput run_scheme(Scheme scheme, const CsiGrid& y_frame, std::span<const cplx> prs,
                           const TrackerOptions& options);

}  // namespace dabsense

#include "dabsense/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dabsense {

namespace {

// |e^{j d pi/2} - 1|^2 for an alphabet offset d.
constexpr std::array<double, kAlphabetSize> kOffsetDistance{0.0, 2.0, 4.0, 2.0};

constexpr std::array<Scheme, 4> kSchemes{Scheme::open_loop, Scheme::map_direct, Scheme::posterior_a0,
                                         Scheme::proposed};

// h + g (z - h) written as a convex combination so g = 1 returns z exactly.
cplx blend(cplx h, cplx z, double g) { return (1.0 - g) * h + g * z; }

void check_frame(const CsiGrid& y_frame, std::span<const cplx> prs) {
    if (y_frame.tones() != prs.size())
        throw ValidationError("observation tone count does not match the PRS length");
    if (y_frame.symbols() < 1) throw ValidationError("observation frame has no PRS symbol");
}

EstimatorOutput make_output(Scheme scheme, const CsiGrid& y_frame, std::span<const cplx> prs) {
    const std::size_t tones = y_frame.tones();
    const std::size_t symbols = y_frame.symbols();
    EstimatorOutput out;
    out.scheme = scheme;
    out.recon.prs.assign(prs.begin(), prs.end());
    out.recon.symbols = ToneGrid<cplx>(tones, symbols);
    out.recon.transitions = ToneGrid<TransitionIndex>(tones, symbols - 1);
    out.tracking_csi = CsiGrid(tones, symbols);
    out.sensing_csi = CsiGrid(tones, symbols);
    out.tracking_gain = ToneGrid<double>(tones, symbols, 1.0);
    out.sensing_gain = ToneGrid<double>(tones, symbols, 1.0);

    std::copy(prs.begin(), prs.end(), out.recon.symbols.symbol(0).begin());
    for (std::size_t k = 0; k < tones; ++k) {
        const cplx h0 = y_frame(k, 0) / prs[k];
        out.tracking_csi(k, 0) = h0;
        out.sensing_csi(k, 0) = h0;
    }
    return out;
}

}  // namespace

std::string_view scheme_name(Scheme s) {
    switch (s) {
        case Scheme::open_loop: return "open_loop";
        case Scheme::map_direct: return "map_direct";
        case Scheme::posterior_a0: return "posterior_a0";
        case Scheme::proposed: return "proposed";
    }
    return "unknown";
}

Scheme parse_scheme(std::string_view name) {
    for (Scheme s : kSchemes) {
        if (scheme_name(s) == name) return s;
    }
    throw ValidationError("unknown scheme '" + std::string(name) + "'");
}

const std::array<Scheme, 4>& all_schemes() { return kSchemes; }

CVec smooth(std::span<const cplx> h, double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw ValidationError("smoothing factor must lie in [0, 1)");
    const std::size_t n = h.size();
    CVec out(h.begin(), h.end());
    if (n < 2 || alpha == 0.0) return out;

    out[0] = (1.0 - alpha) * h[0] + alpha * h[1];
    for (std::size_t k = 1; k + 1 < n; ++k) out[k] = (1.0 - alpha) * h[k] + 0.5 * alpha * (h[k - 1] + h[k + 1]);
    out[n - 1] = (1.0 - alpha) * h[n - 1] + alpha * h[n - 2];
    return out;
}

CVec predict(std::span<const cplx> prev_tracked, double alpha) { return smooth(prev_tracked, alpha); }

RVec prediction_variance(std::span<const cplx> prev_tracked, std::span<const cplx> predicted, int window) {
    if (prev_tracked.size() != predicted.size())
        throw ValidationError("prediction variance inputs differ in length");
    if (window < 0) throw ValidationError("averaging window must be non-negative");
    const std::size_t n = prev_tracked.size();
    RVec raw(n);
    for (std::size_t k = 0; k < n; ++k) raw[k] = std::norm(prev_tracked[k] - predicted[k]);
    if (window == 0 || n == 0) return raw;

    // Running-sum moving average, truncated at both ends.
    RVec prefix(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) prefix[k + 1] = prefix[k] + raw[k];
    RVec out(n);
    const auto w = static_cast<std::size_t>(window);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t lo = k >= w ? k - w : 0;
        const std::size_t hi = std::min(n - 1, k + w);
        out[k] = std::max(0.0, (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1));
    }
    return out;
}

TransitionDecision map_detect(cplx y, cplx h_pred, cplx x_prev, double /*like_var*/) {
    TransitionDecision d;
    if (h_pred == cplx{}) {
        d.residuals.fill(std::norm(y));
        d.q = 0;
        d.degenerate = true;
        return d;
    }
    const cplx ref = h_pred * x_prev;
    const auto& alphabet = transition_alphabet();
    for (int q = 0; q < kAlphabetSize; ++q) {
        d.residuals[q] = std::norm(y - ref * alphabet[q]);
        if (d.residuals[q] < d.residuals[d.q]) d.q = q;
    }
    return d;
}

Posterior posteriors(const std::array<double, kAlphabetSize>& residuals, double like_var) {
    const double r_min = *std::min_element(residuals.begin(), residuals.end());
    Posterior p{};
    if (!(like_var > 0.0)) {
        // Zero-variance limit: all mass on the minimal residual(s).
        int ties = 0;
        for (int q = 0; q < kAlphabetSize; ++q) ties += residuals[q] == r_min;
        for (int q = 0; q < kAlphabetSize; ++q) p[q] = residuals[q] == r_min ? 1.0 / ties : 0.0;
        return p;
    }
    double total = 0.0;
    for (int q = 0; q < kAlphabetSize; ++q) {
        p[q] = std::exp(-(residuals[q] - r_min) / like_var);
        total += p[q];
    }
    for (double& v : p) v /= total;
    return p;
}

double observation_variance(const Posterior& post, int q_hat, cplx h_pred, double noise_var) {
    double ambiguity = 0.0;
    for (int q = 0; q < kAlphabetSize; ++q)
        ambiguity += post[q] * kOffsetDistance[static_cast<std::size_t>((q - q_hat + kAlphabetSize) % kAlphabetSize)];
    return noise_var + std::norm(h_pred) * ambiguity;
}

FusionResult lmmse_update(cplx h_pred, cplx z, double pred_var, double obs_var) {
    if (!(pred_var >= 0.0) || !(obs_var >= 0.0)) throw ValidationError("fusion variances must be non-negative");
    const double total = pred_var + obs_var;
    if (total == 0.0) return {h_pred, 0.0, true};
    const double gain = pred_var / total;
    return {blend(h_pred, z, gain), gain, false};
}

double reliability(const Posterior& post, int q_hat) {
    constexpr double uniform = 1.0 / kAlphabetSize;
    const double eta = (post[static_cast<std::size_t>(q_hat)] - uniform) / (1.0 - uniform);
    return std::clamp(eta, 0.0, 1.0);
}

double sensing_gain(double tracking_gain, double eta) { return tracking_gain + eta * (1.0 - tracking_gain); }

TrackerState TrackerState::anchor(std::span<const cplx> y_prs, std::span<const cplx> prs) {
    if (y_prs.size() != prs.size()) throw ValidationError("PRS observation length mismatch");
    const std::size_t n = prs.size();
    TrackerState s;
    s.tracked_csi.resize(n);
    for (std::size_t k = 0; k < n; ++k) s.tracked_csi[k] = y_prs[k] / prs[k];
    s.predicted_csi = s.tracked_csi;
    s.sensing_csi = s.tracked_csi;
    s.observation = s.tracked_csi;
    s.pred_var.assign(n, 0.0);
    s.like_var.assign(n, 0.0);
    s.obs_var.assign(n, 0.0);
    s.posteriors.assign(n, Posterior{1.0, 0.0, 0.0, 0.0});
    s.tracking_gain.assign(n, 1.0);
    s.sensing_gain.assign(n, 1.0);
    s.reliability.assign(n, 1.0);
    s.recon_symbols.assign(prs.begin(), prs.end());
    s.decisions.assign(n, 0);
    return s;
}

void TrackerState::advance(std::span<const cplx> y, const TrackerOptions& options) {
    const std::size_t n = tracked_csi.size();
    if (y.size() != n) throw ValidationError("observation length does not match the tracker state");

    predicted_csi = predict(tracked_csi, options.alpha);
    pred_var = prediction_variance(tracked_csi, predicted_csi, options.variance_window);

    for (std::size_t k = 0; k < n; ++k) {
        const cplx h_pred = predicted_csi[k];
        like_var[k] = options.noise_var + pred_var[k];

        const TransitionDecision det = map_detect(y[k], h_pred, recon_symbols[k], like_var[k]);
        decisions[k] = static_cast<TransitionIndex>(det.q);
        recon_symbols[k] *= transition_alphabet()[static_cast<std::size_t>(det.q)];
        observation[k] = y[k] / recon_symbols[k];

        posteriors[k] = dabsense::posteriors(det.residuals, like_var[k]);
        obs_var[k] = observation_variance(posteriors[k], det.q, h_pred, options.noise_var);

        const FusionResult fused = lmmse_update(h_pred, observation[k], pred_var[k], obs_var[k]);
        const double k_gain = options.forced_tracking_gain.value_or(fused.gain);
        tracking_gain[k] = k_gain;
        tracked_csi[k] = blend(h_pred, observation[k], k_gain);

        reliability[k] = options.forced_reliability.value_or(dabsense::reliability(posteriors[k], det.q));
        sensing_gain[k] = dabsense::sensing_gain(k_gain, reliability[k]);
        sensing_csi[k] = blend(h_pred, observation[k], sensing_gain[k]);
    }
}

EstimatorOutput track_frame(const CsiGrid& y_frame, std::span<const cplx> prs, const TrackerOptions& options) {
    check_frame(y_frame, prs);
    if (!(options.noise_var >= 0.0)) throw ValidationError("noise_var must be non-negative");
    EstimatorOutput out = make_output(Scheme::proposed, y_frame, prs);

    TrackerState state = TrackerState::anchor(y_frame.symbol(0), prs);
    for (std::size_t m = 1; m < y_frame.symbols(); ++m) {
        state.advance(y_frame.symbol(m), options);
        std::copy(state.recon_symbols.begin(), state.recon_symbols.end(), out.recon.symbols.symbol(m).begin());
        std::copy(state.decisions.begin(), state.decisions.end(), out.recon.transitions.symbol(m - 1).begin());
        std::copy(state.tracked_csi.begin(), state.tracked_csi.end(), out.tracking_csi.symbol(m).begin());
        std::copy(state.sensing_csi.begin(), state.sensing_csi.end(), out.sensing_csi.symbol(m).begin());
        std::copy(state.tracking_gain.begin(), state.tracking_gain.end(), out.tracking_gain.symbol(m).begin());
        std::copy(state.sensing_gain.begin(), state.sensing_gain.end(), out.sensing_gain.symbol(m).begin());
    }
    return out;
}

EstimatorOutput open_loop_estimate(const CsiGrid& y_frame, std::span<const cplx> prs,
                                   std::span<const SlipInjection> slips) {
    check_frame(y_frame, prs);
    EstimatorOutput out = make_output(Scheme::open_loop, y_frame, prs);
    const auto& alphabet = transition_alphabet();
    for (std::size_t m = 1; m < y_frame.symbols(); ++m) {
        for (std::size_t k = 0; k < y_frame.tones(); ++k) {
            int q = nearest_transition(y_frame(k, m) * std::conj(y_frame(k, m - 1)));
            for (const SlipInjection& slip : slips) {
                if (slip.tone == k && slip.symbol == m)
                    q = ((q + slip.offset) % kAlphabetSize + kAlphabetSize) % kAlphabetSize;
            }
            out.recon.transitions(k, m - 1) = static_cast<TransitionIndex>(q);
            const cplx x_hat = out.recon.symbols(k, m - 1) * alphabet[static_cast<std::size_t>(q)];
            out.recon.symbols(k, m) = x_hat;
            out.tracking_csi(k, m) = y_frame(k, m) / x_hat;
        }
    }
    out.sensing_csi = out.tracking_csi;
    return out;
}

EstimatorOutput map_direct_estimate(const CsiGrid& y_frame, std::span<const cplx> prs, double alpha,
                                    double noise_var) {
    check_frame(y_frame, prs);
    if (!(noise_var >= 0.0)) throw ValidationError("noise_var must be non-negative");
    EstimatorOutput out = make_output(Scheme::map_direct, y_frame, prs);
    const auto& alphabet = transition_alphabet();
    for (std::size_t m = 1; m < y_frame.symbols(); ++m) {
        const CVec h_pred = predict(out.tracking_csi.symbol(m - 1), alpha);
        for (std::size_t k = 0; k < y_frame.tones(); ++k) {
            const TransitionDecision det = map_detect(y_frame(k, m), h_pred[k], out.recon.symbols(k, m - 1), noise_var);
            out.recon.transitions(k, m - 1) = static_cast<TransitionIndex>(det.q);
            const cplx x_hat = out.recon.symbols(k, m - 1) * alphabet[static_cast<std::size_t>(det.q)];
            out.recon.symbols(k, m) = x_hat;
            out.tracking_csi(k, m) = y_frame(k, m) / x_hat;
        }
    }
    out.sensing_csi = out.tracking_csi;
    return out;
}

EstimatorOutput run_scheme(Scheme scheme, const CsiGrid& y_frame, std::span<const cplx> prs,
                           const TrackerOptions& options) {
    switch (scheme) {
        case Scheme::open_loop: return open_loop_estimate(y_frame, prs);
        case Scheme::map_direct: return map_direct_estimate(y_frame, prs, options.alpha, options.noise_var);
        case Scheme::posterior_a0: {
            TrackerOptions a0 = options;
            a0.alpha = 0.0;
            EstimatorOutput out = track_frame(y_frame, prs, a0);
            out.scheme = Scheme::posterior_a0;
            return out;
        }
        case Scheme::proposed: return track_frame(y_frame, prs, options);
    }
    throw ValidationError("unknown scheme");
}

}  // namespace dabsense

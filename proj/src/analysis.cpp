#include "dabsense/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dabsense/common.hpp"

namespace dabsense {

namespace {

void require_non_negative(double v, const char* what) {
    if (!(v >= 0.0)) throw ValidationError(std::string(what) + " must be non-negative");
}

double safe_ratio(double num, double den) {
    if (den > 0.0) return num / den;
    return num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

}  // namespace

double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double slip_bound(double gamma) {
    require_non_negative(gamma, "transition SNR");
    return std::min(1.0, 3.0 * q_function(std::sqrt(gamma)));
}

double gamma_proposed(double h_pred_pow, double noise_var, double pred_var) {
    require_non_negative(h_pred_pow, "prediction power");
    require_non_negative(noise_var, "noise variance");
    require_non_negative(pred_var, "prediction variance");
    return safe_ratio(h_pred_pow, noise_var + pred_var);
}

double gamma_open_loop(double h_pow, double noise_var, double delta_h_var) {
    require_non_negative(h_pow, "channel power");
    require_non_negative(noise_var, "noise variance");
    require_non_negative(delta_h_var, "channel variation variance");
    return safe_ratio(h_pow * h_pow, 2.0 * h_pow * noise_var + noise_var * noise_var + delta_h_var);
}

double rho_alpha(double alpha) { return (1.0 - alpha) * (1.0 - alpha) + 0.5 * alpha * alpha; }

double pred_mse_gain(double alpha, double err_var, double curvature_pow) {
    return (2.0 * alpha - 1.5 * alpha * alpha) * err_var - 0.25 * alpha * alpha * curvature_pow;
}

double gamma_gain(double alpha, double noise_var, double prev_var, double process_var) {
    require_non_negative(noise_var, "noise variance");
    require_non_negative(prev_var, "previous estimation variance");
    require_non_negative(process_var, "process variance");
    const double num = noise_var + prev_var + process_var;
    const double den = noise_var + rho_alpha(alpha) * prev_var + process_var;
    return den > 0.0 ? num / den : 1.0;
}

double slip_ratio_bound(double gain, double gamma0) {
    require_non_negative(gain, "SNR gain");
    require_non_negative(gamma0, "transition SNR");
    const double base = q_function(std::sqrt(gamma0));
    return base > 0.0 ? q_function(std::sqrt(gain * gamma0)) / base : 0.0;
}

double posterior_variance(double pred_var, double obs_var) {
    require_non_negative(pred_var, "prediction variance");
    require_non_negative(obs_var, "observation variance");
    const double total = pred_var + obs_var;
    return total > 0.0 ? pred_var * obs_var / total : 0.0;
}

std::pair<double, double> mse_reduction_factors(double pred_var, double obs_var) {
    require_non_negative(pred_var, "prediction variance");
    require_non_negative(obs_var, "observation variance");
    const double total = pred_var + obs_var;
    const double k = total > 0.0 ? pred_var / total : 0.0;
    return {k, 1.0 - k};
}

double ambiguity_injection_bound(double gain, double h_pred_pow, double off_mass) {
    require_non_negative(h_pred_pow, "prediction power");
    if (!(off_mass >= 0.0 && off_mass <= 1.0)) throw ValidationError("off-decision mass must lie in [0, 1]");
    return 4.0 * gain * gain * h_pred_pow * off_mass;
}

TransitionSnrReport transition_snr_report(double h_pred_pow, double noise_var, double pred_var, double delta_h_var) {
    TransitionSnrReport r;
    r.h_pred_pow = h_pred_pow;
    r.noise_var = noise_var;
    r.pred_var = pred_var;
    r.delta_h_var = delta_h_var;
    r.gamma_proposed = gamma_proposed(h_pred_pow, noise_var, pred_var);
    r.gamma_open_loop = gamma_open_loop(h_pred_pow, noise_var, delta_h_var);
    r.slip_bound = slip_bound(r.gamma_proposed);
    r.slip_bound_open_loop = slip_bound(r.gamma_open_loop);
    return r;
}

}  // namespace dabsense

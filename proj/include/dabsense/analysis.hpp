#pragma once

#include <utility>

namespace dabsense {

/// Standard normal tail, 0.5 erfc(x / sqrt 2).
double q_function(double x);

/// min(1, 3 Q(sqrt(gamma))). Throws ValidationError for gamma < 0.
double slip_bound(double gamma);

/// |H_pred|^2 / (sigma0^2 + sigma_p^2)
double gamma_proposed(double h_pred_pow, double noise_var, double pred_var);

/// |H|^4 / (2 |H|^2 sigma0^2 + sigma0^4 + sigma_dH^2)
double gamma_open_loop(double h_pow, double noise_var, double delta_h_var);

/// Filtered-error variance factor (1 - alpha)^2 + alpha^2 / 2.
double rho_alpha(double alpha);

/// Prediction MSE reduction (2 alpha - 1.5 alpha^2) sigma_E^2 - (alpha^2 / 4) |C|^2.
double pred_mse_gain(double alpha, double err_var, double curvature_pow);

/// (sigma0^2 + P + Q) / (sigma0^2 + rho_alpha P + Q)
double gamma_gain(double alpha, double noise_var, double prev_var, double process_var);

/// Slip-rate ratio limit Q(sqrt(gain * gamma0)) / Q(sqrt(gamma0)).
double slip_ratio_bound(double gain, double gamma0);

/// P R / (P + R); zero when both are zero.
double posterior_variance(double pred_var, double obs_var);

/// (K, 1 - K): posterior variance relative to the observation and to the prediction.
std::pair<double, double> mse_reduction_factors(double pred_var, double obs_var);

/// 4 K^2 |H_pred|^2 (1 - pi(q_hat))
double ambiguity_injection_bound(double gain, double h_pred_pow, double off_mass);

struct TransitionSnrReport {
    double h_pred_pow = 0.0;
    double noise_var = 0.0;
    double pred_var = 0.0;
    double delta_h_var = 0.0;
    double gamma_proposed = 0.0;
    double gamma_open_loop = 0.0;
    double slip_bound = 0.0;
    double slip_bound_open_loop = 0.0;
};

/// Both transition SNRs and their slip bounds for one operating point;
/// the open-loop side takes |H|^2 = h_pred_pow.
TransitionSnrReport transition_snr_report(double h_pred_pow, double noise_var, double pred_var, double delta_h_var);

}  // namespace dabsense

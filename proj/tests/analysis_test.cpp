#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "dabsense/analysis.hpp"
#include "dabsense/common.hpp"

using namespace dabsense;

TEST_SUITE("examples/analysis") {
    TEST_CASE("Q function and slip bound") {
        CHECK(q_function(0.0) == doctest::Approx(0.5));
        CHECK(q_function(1.0) == doctest::Approx(0.158655).epsilon(1e-5));
        CHECK(slip_bound(1.0) == doctest::Approx(0.476).epsilon(1e-3));
        CHECK(slip_bound(0.0) == 1.0);
        CHECK_THROWS_AS(slip_bound(-0.1), ValidationError);
    }

    TEST_CASE("smoothing factors") {
        CHECK(rho_alpha(0.0) == 1.0);
        CHECK(rho_alpha(0.15) == doctest::Approx(0.73375));
        CHECK(pred_mse_gain(0.15, 1.0, 0.0) == doctest::Approx(0.26625));
        CHECK(pred_mse_gain(0.0, 1.0, 5.0) == 0.0);
    }

    TEST_CASE("transition SNRs") {
        CHECK(gamma_open_loop(1.0, 1.0, 0.0) == doctest::Approx(1.0 / 3.0));
        CHECK(gamma_proposed(1.0, 1.0, 0.0) == doctest::Approx(1.0));
        // 3 dB high-SNR advantage with exact prediction and a static channel.
        const double nv = 1e-6;
        CHECK(gamma_proposed(1.0, nv, 0.0) / gamma_open_loop(1.0, nv, 0.0) == doctest::Approx(2.0).epsilon(1e-5));
        CHECK(gamma_open_loop(1.0, 0.0, 0.0) == std::numeric_limits<double>::infinity());
    }

    TEST_CASE("SNR gain from smoothing") {
        CHECK(gamma_gain(0.15, 1.0, 0.0, 0.3) == doctest::Approx(1.0));
        CHECK(gamma_gain(0.15, 0.0, 1.0, 0.0) == doctest::Approx(1.0 / rho_alpha(0.15)));
        CHECK(gamma_gain(0.0, 0.4, 0.7, 0.1) == doctest::Approx(1.0));
        CHECK(slip_ratio_bound(1.0, 4.0) == doctest::Approx(1.0));
        CHECK(slip_ratio_bound(2.0, 4.0) < 1.0);
    }

    TEST_CASE("fusion variance") {
        CHECK(posterior_variance(1.0, 1.0) == doctest::Approx(0.5));
        CHECK(posterior_variance(0.0, 2.0) == 0.0);
        CHECK(posterior_variance(0.0, 0.0) == 0.0);
        const auto [k, one_minus_k] = mse_reduction_factors(3.0, 1.0);
        CHECK(k == doctest::Approx(0.75));
        CHECK(one_minus_k == doctest::Approx(0.25));
        CHECK(posterior_variance(3.0, 1.0) == doctest::Approx(k * 1.0));
        CHECK(posterior_variance(3.0, 1.0) == doctest::Approx(one_minus_k * 3.0));
    }

    TEST_CASE("ambiguity bound scales with K squared") {
        const double b = ambiguity_injection_bound(0.1, 2.0, 0.3);
        CHECK(b == doctest::Approx(4 * 0.01 * 2.0 * 0.3));
        CHECK(ambiguity_injection_bound(0.2, 2.0, 0.3) == doctest::Approx(4.0 * b));
        CHECK(ambiguity_injection_bound(0.0, 2.0, 0.3) == 0.0);
        CHECK_THROWS_AS(ambiguity_injection_bound(0.1, 2.0, 1.5), ValidationError);
    }

    TEST_CASE("report bundles both detectors") {
        const TransitionSnrReport r = transition_snr_report(1.0, 0.1, 0.02, 0.001);
        CHECK(r.gamma_proposed == doctest::Approx(gamma_proposed(1.0, 0.1, 0.02)));
        CHECK(r.gamma_open_loop == doctest::Approx(gamma_open_loop(1.0, 0.1, 0.001)));
        CHECK(r.slip_bound == doctest::Approx(slip_bound(r.gamma_proposed)));
        CHECK(r.slip_bound_open_loop == doctest::Approx(slip_bound(r.gamma_open_loop)));
    }
}

TEST_SUITE("properties/analysis") {
    TEST_CASE("Q function matches a Monte Carlo tail") {
        std::mt19937_64 rng(41);
        std::normal_distribution<double> g;
        const int n = 400000;
        int above = 0;
        for (int i = 0; i < n; ++i) above += g(rng) > 1.5;
        const double p = static_cast<double>(above) / n;
        CHECK(std::abs(p - q_function(1.5)) < 4 * std::sqrt(p * (1 - p) / n));
    }

    TEST_CASE("slip bound is monotone and capped") {
        double prev = 2.0;
        for (double gdb = -10.0; gdb <= 30.0; gdb += 0.5) {
            const double b = slip_bound(std::pow(10.0, gdb / 10.0));
            CHECK(b <= 1.0);
            CHECK(b >= 0.0);
            CHECK(b <= prev);
            prev = b;
        }
    }

    TEST_CASE("posterior variance never exceeds either input") {
        std::mt19937_64 rng(42);
        std::uniform_real_distribution<double> u(0.0, 5.0);
        for (int i = 0; i < 1000; ++i) {
            const double p = u(rng);
            const double r = u(rng);
            const double post = posterior_variance(p, r);
            CHECK(post <= std::min(p, r) + 1e-15);
            const auto [k, one_minus_k] = mse_reduction_factors(p, r);
            CHECK(k + one_minus_k == doctest::Approx(1.0));
            CHECK(k >= 0.0);
            CHECK(k <= 1.0);
        }
    }

    TEST_CASE("smoothing lowers filtered error for small alpha") {
        for (double a = 0.01; a < 0.8; a += 0.01) {
            CHECK(rho_alpha(a) < 1.0);
            CHECK(gamma_gain(a, 0.2, 1.0, 0.0) > 1.0);
        }
        CHECK(rho_alpha(0.9) > 0.0);
    }
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dabsense/analysis.hpp"
#include "dabsense/estimators.hpp"
#include "dabsense/metrics.hpp"
#include "dabsense/scene.hpp"

using namespace dabsense;

namespace {

struct Frame {
    CVec prs;
    CsiGrid truth;
    SymbolGrid symbols;
    CsiGrid y;
    double noise_var = 0.0;
};

Frame make_frame(const SceneConfig& scene, double snr_db, std::uint64_t seed, bool noiseless = false) {
    std::mt19937_64 rng(seed);
    const SubcarrierGrid g;
    Frame f;
    const CVec fade = fading_profile(scene.fading_depth_db, rng, g);
    f.truth = synthesize_frame(scene, 0, g, fade);
    f.prs = random_prs(1536, rng);
    f.symbols = encode_frame(f.prs, random_transitions(1536, 75, rng));
    f.noise_var = noiseless ? 0.0 : mean_power(std::span<const CsiGrid>(&f.truth, 1)) / std::pow(10.0, snr_db / 10.0);
    f.y = observe_frame(f.truth, f.symbols.symbols, f.noise_var, rng);
    return f;
}

SceneConfig static_scene() {
    SceneConfig s = default_scene();
    s.targets.clear();
    return s;
}

cplx cn(std::mt19937_64& rng, double var) {
    std::normal_distribution<double> g(0.0, std::sqrt(var / 2.0));
    const double re = g(rng);
    return {re, g(rng)};
}

}  // namespace

TEST_SUITE("examples/estimators") {
    TEST_CASE("smoothing") {
        const CVec h{{1, 2}, {-3, 0.5}, {0.2, 0.1}, {4, -4}};
        CHECK(smooth(h, 0.0) == h);
        const CVec c(9, cplx{0.3, -0.7});
        for (double a : {0.1, 0.5, 0.9}) {
            const CVec out = smooth(c, a);
            for (const cplx& v : out) CHECK(std::abs(v - c[0]) < 1e-15);
        }
        const CVec triple{0.0, 1.0, 0.0};
        CHECK(std::abs(smooth(triple, 0.15)[1] - 0.85) < 1e-15);
        CHECK_THROWS_AS(smooth(h, 1.0), ValidationError);
        CHECK_THROWS_AS(smooth(h, -0.1), ValidationError);
    }

    TEST_CASE("prediction") {
        const CVec h{{1, 2}, {-3, 0.5}, {0.2, 0.1}};
        CHECK(predict(h, 0.0) == h);
        // Static noiseless channel with an exact previous estimate: nothing to predict.
        const CVec flat(32, std::polar(0.8, 1.1));
        const CVec p = predict(flat, 0.15);
        for (std::size_t k = 0; k < flat.size(); ++k) CHECK(std::abs(p[k] - flat[k]) < 1e-15);
    }

    TEST_CASE("filtered error variance follows rho_alpha") {
        std::mt19937_64 rng(21);
        const double alpha = 0.15;
        const double err_var = 0.3;
        const std::size_t n = 200000;
        CVec noisy(n);
        for (auto& v : noisy) v = 1.0 + cn(rng, err_var);
        const CVec p = predict(noisy, alpha);
        double sum = 0.0;
        double sum2 = 0.0;
        for (std::size_t k = 1; k + 1 < n; ++k) {
            const double e = std::norm(p[k] - 1.0);
            sum += e;
            sum2 += e * e;
        }
        const double m = sum / (n - 2);
        const double se = std::sqrt((sum2 / (n - 2) - m * m) / (n - 2));
        CHECK(std::abs(m - rho_alpha(alpha) * err_var) < 4 * se);
    }

    TEST_CASE("prediction variance") {
        const CVec h{{1, 2}, {-3, 0.5}, {0.2, 0.1}};
        for (double v : prediction_variance(h, predict(h, 0.0))) CHECK(v == 0.0);

        CVec prev(5, cplx{});
        CVec pred(5, cplx{});
        prev[2] = {3.0, 0.0};  // spike of power 9
        const RVec raw = prediction_variance(prev, pred, 0);
        const RVec avg = prediction_variance(prev, pred, 1);
        CHECK(raw[2] == doctest::Approx(9.0));
        CHECK(avg[2] == doctest::Approx(3.0));
        CHECK(avg[1] == doctest::Approx(3.0));
        CHECK(avg[0] == 0.0);

        std::mt19937_64 rng(3);
        CVec a(50);
        CVec b(50);
        for (std::size_t k = 0; k < 50; ++k) {
            a[k] = cn(rng, 1.0);
            b[k] = cn(rng, 1.0);
        }
        for (int w : {0, 1, 3}) {
            for (double v : prediction_variance(a, b, w)) CHECK(v >= 0.0);
        }
    }

    TEST_CASE("detection on a noiseless exact prediction") {
        std::mt19937_64 rng(4);
        for (int i = 0; i < 20; ++i) {
            const cplx h = cn(rng, 1.0);
            const cplx x_prev = random_prs(1, rng)[0];
            const int q = static_cast<int>(rng() % 4);
            const TransitionDecision d = map_detect(h * x_prev * transition_value(q), h, x_prev, 0.1);
            CHECK(d.q == q);
            CHECK(d.residuals[static_cast<std::size_t>(q)] < 1e-24);
            CHECK_FALSE(d.degenerate);
        }
    }

    TEST_CASE("residual pattern around the chosen transition") {
        const cplx h = std::polar(1.7, 0.3);
        const cplx x_prev = transition_value(2);
        const TransitionDecision d = map_detect(h * x_prev * std::polar(1.0, kPi / 4), h, x_prev, 1.0);
        const double p = std::norm(h);
        CHECK(d.q == 0);
        CHECK(d.residuals[0] == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(d.residuals[1] == doctest::Approx(2 * p));
        CHECK(d.residuals[2] == doctest::Approx(4 * p));
        CHECK(d.residuals[3] == doctest::Approx(2 * p));
    }

    TEST_CASE("detection equals the exhaustive likelihood maximum") {
        std::mt19937_64 rng(5);
        for (int i = 0; i < 1000; ++i) {
            const cplx h = cn(rng, 1.0);
            const cplx x_prev = random_prs(1, rng)[0];
            const cplx y = cn(rng, 2.0);
            const double var = 0.3;
            int best = 0;
            double best_ll = -1e300;
            for (int q = 0; q < 4; ++q) {
                const double ll = -std::norm(y - h * x_prev * transition_value(q)) / var - std::log(kPi * var);
                if (ll > best_ll) {
                    best_ll = ll;
                    best = q;
                }
            }
            CHECK(map_detect(y, h, x_prev, var).q == best);
        }
    }

    TEST_CASE("zero prediction is a degenerate decision") {
        const TransitionDecision d = map_detect({0.3, -0.2}, cplx{}, 1.0, 1.0);
        CHECK(d.degenerate);
        CHECK(d.q == 0);
        for (double r : d.residuals) CHECK(r == doctest::Approx(std::norm(cplx{0.3, -0.2})));
    }

    TEST_CASE("posteriors") {
        const Posterior flat = posteriors({2.0, 2.0, 2.0, 2.0}, 0.7);
        for (double p : flat) CHECK(p == doctest::Approx(0.25));

        const double var = 0.01;
        const Posterior peaked = posteriors({0.0, 1e6 * var, 1e6 * var, 1e6 * var}, var);
        CHECK(std::abs(peaked[0] - 1.0) < 1e-12);

        const std::array<double, 4> r{0.3, 1.2, 0.05, 2.0};
        const Posterior p = posteriors(r, 0.5);
        CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        const std::array<double, 4> r_perm{r[2], r[0], r[3], r[1]};
        const Posterior pp = posteriors(r_perm, 0.5);
        CHECK(pp[0] == doctest::Approx(p[2]));
        CHECK(pp[1] == doctest::Approx(p[0]));
        CHECK(pp[2] == doctest::Approx(p[3]));
        CHECK(pp[3] == doctest::Approx(p[1]));
    }

    TEST_CASE("observation variance") {
        const cplx h{0.6, -0.8};
        CHECK(observation_variance({0, 0, 1, 0}, 2, h, 0.05) == doctest::Approx(0.05));
        CHECK(observation_variance({0.25, 0.25, 0.25, 0.25}, 1, h, 0.05) == doctest::Approx(0.05 + 2.0));
        std::mt19937_64 rng(6);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int i = 0; i < 100; ++i) {
            Posterior p{u(rng), u(rng), u(rng), u(rng)};
            const double s = p[0] + p[1] + p[2] + p[3];
            for (double& v : p) v /= s;
            CHECK(observation_variance(p, static_cast<int>(i % 4), cn(rng, 1.0), 0.2) >= 0.2);
        }
    }

    TEST_CASE("lmmse update") {
        const cplx h{1.0, 0.5};
        const cplx z{-0.2, 0.9};
        FusionResult r = lmmse_update(h, z, 0.0, 0.3);
        CHECK(r.gain == 0.0);
        CHECK(r.estimate == h);
        r = lmmse_update(h, z, 0.3, 1e-14);
        CHECK(r.gain == doctest::Approx(1.0));
        CHECK(std::abs(r.estimate - z) < 1e-12);
        r = lmmse_update(h, z, 0.4, 0.4);
        CHECK(r.gain == doctest::Approx(0.5));
        CHECK(std::abs(r.estimate - 0.5 * (h + z)) < 1e-15);
        r = lmmse_update(h, z, 0.0, 0.0);
        CHECK(r.degenerate);
        CHECK(r.gain == 0.0);
        CHECK(r.estimate == h);
        CHECK_THROWS_AS(lmmse_update(h, z, -1.0, 1.0), ValidationError);
    }

    TEST_CASE("reliability and sensing gain") {
        CHECK(reliability({0.25, 0.25, 0.25, 0.25}, 0) == doctest::Approx(0.0));
        CHECK(reliability({0.0, 1.0, 0.0, 0.0}, 1) == doctest::Approx(1.0));
        CHECK(reliability({0.625, 0.125, 0.125, 0.125}, 0) == doctest::Approx(0.5));
        CHECK(reliability({0.1, 0.2, 0.3, 0.4}, 0) == 0.0);
        CHECK(sensing_gain(0.3, 0.0) == doctest::Approx(0.3));
        CHECK(sensing_gain(0.3, 1.0) == doctest::Approx(1.0));
        CHECK(sensing_gain(0.2, 0.5) == doctest::Approx(0.6));
    }

    TEST_CASE("tracker on a noiseless static channel") {
        const Frame f = make_frame(static_scene(), 0.0, 7, true);
        TrackerOptions o;
        o.noise_var = 0.0;
        const EstimatorOutput out = track_frame(f.y, f.prs, o);
        CHECK(symbol_error_rate(out.recon, f.symbols) == 0.0);
        CHECK(nmse_db(out.tracking_csi, f.truth) < -100.0);
    }

    TEST_CASE("PRS initialisation") {
        const Frame f = make_frame(default_scene(), 5.0, 8);
        TrackerOptions o;
        o.noise_var = f.noise_var;
        for (Scheme s : all_schemes()) {
            const EstimatorOutput out = run_scheme(s, f.y, f.prs, o);
            for (std::size_t k = 0; k < 1536; ++k) {
                CHECK(out.tracking_csi(k, 0) == f.y(k, 0) / f.prs[k]);
                CHECK(out.sensing_csi(k, 0) == f.y(k, 0) / f.prs[k]);
            }
        }
    }

    TEST_CASE("sensing CSI approaches Z as the posterior concentrates") {
        const Frame f = make_frame(default_scene(), 30.0, 9);
        TrackerOptions o;
        o.noise_var = f.noise_var;
        TrackerState st = TrackerState::anchor(f.y.symbol(0), f.prs);
        for (std::size_t m = 1; m < 20; ++m) {
            st.advance(f.y.symbol(m), o);
            for (std::size_t k = 0; k < 1536; ++k) {
                const double slack = (1.0 - st.reliability[k]) * std::abs(st.observation[k] - st.predicted_csi[k]);
                CHECK(std::abs(st.sensing_csi[k] - st.observation[k]) <= slack + 1e-12);
            }
        }
    }

    TEST_CASE("open loop on a noiseless static channel") {
        const Frame f = make_frame(static_scene(), 0.0, 10, true);
        const EstimatorOutput out = open_loop_estimate(f.y, f.prs);
        CHECK(symbol_error_rate(out.recon, f.symbols) == 0.0);
        for (std::size_t i = 0; i < f.truth.data().size(); ++i)
            CHECK(std::abs(out.tracking_csi.data()[i] - f.truth.data()[i]) < 1e-12);
    }

    TEST_CASE("a forced open-loop slip persists to the end of the frame") {
        const Frame f = make_frame(default_scene(), 0.0, 11, true);
        const std::size_t tone = 700;
        const std::size_t m0 = 30;
        const SlipInjection slip{tone, m0, 1};
        const EstimatorOutput out = open_loop_estimate(f.y, f.prs, std::span(&slip, 1));
        const cplx eps = out.recon.symbols(tone, m0) / f.symbols.symbols(tone, m0);
        CHECK(std::abs(std::abs(eps) - 1.0) < 1e-12);
        CHECK(std::abs(eps - 1.0) > 0.5);
        for (std::size_t m = 0; m < m0; ++m) CHECK(std::abs(out.recon.symbols(tone, m) - f.symbols.symbols(tone, m)) < 1e-12);
        for (std::size_t m = m0; m < 76; ++m) {
            CHECK(std::abs(out.recon.symbols(tone, m) / f.symbols.symbols(tone, m) - eps) < 1e-12);
            // Noiseless CSI error is the unit-modulus slip factor.
            CHECK(std::abs(out.tracking_csi(tone, m) - f.truth(tone, m) / eps) < 1e-12);
        }
    }

    TEST_CASE("map direct without noise matches the tracker") {
        const Frame f = make_frame(default_scene(), 0.0, 12, true);
        TrackerOptions o;
        o.noise_var = 0.0;
        const EstimatorOutput direct = map_direct_estimate(f.y, f.prs, o.alpha, 0.0);
        const EstimatorOutput prop = track_frame(f.y, f.prs, o);
        CHECK(direct.recon.symbols == prop.recon.symbols);
        for (std::size_t i = 0; i < f.truth.data().size(); ++i) {
            CHECK(std::abs(direct.tracking_csi.data()[i] - prop.tracking_csi.data()[i]) < 1e-12);
            CHECK(std::abs(direct.sensing_csi.data()[i] - prop.sensing_csi.data()[i]) < 1e-12);
        }
        for (double g : direct.tracking_gain.data()) CHECK(g == 1.0);
        for (double g : direct.sensing_gain.data()) CHECK(g == 1.0);
        CHECK(direct.tracking_csi == direct.sensing_csi);
    }

    TEST_CASE("map direct tracks worse than the fused tracker") {
        NmseAccumulator direct;
        NmseAccumulator prop;
        for (int trial = 0; trial < 20; ++trial) {
            const Frame f = make_frame(default_scene(), 8.0, 100 + trial);
            TrackerOptions o;
            o.noise_var = f.noise_var;
            direct.add(map_direct_estimate(f.y, f.prs, o.alpha, o.noise_var).tracking_csi, f.truth);
            prop.add(track_frame(f.y, f.prs, o).tracking_csi, f.truth);
        }
        CHECK(direct.db() >= prop.db());
    }
}

TEST_SUITE("properties/estimators") {
    TEST_CASE("tracker state invariants") {
        const Frame f = make_frame(default_scene(), 3.0, 13);
        TrackerOptions o;
        o.noise_var = f.noise_var;
        TrackerState st = TrackerState::anchor(f.y.symbol(0), f.prs);
        for (std::size_t m = 1; m < 76; ++m) {
            st.advance(f.y.symbol(m), o);
            for (std::size_t k = 0; k < 1536; ++k) {
                const Posterior& p = st.posteriors[k];
                CHECK(std::abs(p[0] + p[1] + p[2] + p[3] - 1.0) < 1e-9);
                for (double v : p) {
                    CHECK(v >= 0.0);
                    CHECK(v <= 1.0);
                }
                CHECK(st.tracking_gain[k] >= 0.0);
                CHECK(st.tracking_gain[k] <= st.sensing_gain[k] + 1e-15);
                CHECK(st.sensing_gain[k] <= 1.0);
                CHECK(st.reliability[k] >= 0.0);
                CHECK(st.reliability[k] <= 1.0);
                CHECK(st.like_var[k] == doctest::Approx(o.noise_var + st.pred_var[k]));
                CHECK(st.obs_var[k] >= o.noise_var);
            }
        }
    }

    TEST_CASE("fusion is never worse than either input") {
        // Fixed truth, Gaussian prediction and observation errors with known variances.
        std::mt19937_64 rng(14);
        const cplx h{0.4, -1.1};
        for (double ratio : {0.1, 1.0, 10.0}) {
            const double r_var = 0.2;
            const double p_var = ratio * r_var;
            const int n = 10000;
            RVec post(n);
            RVec pred(n);
            RVec obs(n);
            for (int i = 0; i < n; ++i) {
                const cplx hp = h + cn(rng, p_var);
                const cplx z = h + cn(rng, r_var);
                post[i] = std::norm(lmmse_update(hp, z, p_var, r_var).estimate - h);
                pred[i] = std::norm(hp - h);
                obs[i] = std::norm(z - h);
            }
            auto mean_se = [n](const RVec& v) {
                const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
                double s2 = 0.0;
                for (double x : v) s2 += (x - m) * (x - m);
                return std::pair{m, std::sqrt(s2 / (n - 1) / n)};
            };
            const auto [m_post, se_post] = mean_se(post);
            const double best = std::min(mean_se(pred).first, mean_se(obs).first);
            CHECK(m_post <= best + 3 * se_post);
            CHECK(m_post == doctest::Approx(posterior_variance(p_var, r_var)).epsilon(0.05));
        }
    }

    TEST_CASE("ambiguity injection stays under its bound") {
        std::mt19937_64 rng(15);
        const cplx h{1.0, 0.0};
        const double nv = 0.4;
        const double p_var = 0.05;
        const int n = 20000;
        double injected = 0.0;
        double bound = 0.0;
        for (int i = 0; i < n; ++i) {
            const cplx h_pred = h + cn(rng, p_var);
            const cplx x_prev = transition_value(static_cast<int>(rng() % 4));
            const int q = static_cast<int>(rng() % 4);
            const cplx y = h * x_prev * transition_value(q) + cn(rng, nv);
            const TransitionDecision d = map_detect(y, h_pred, x_prev, nv + p_var);
            const Posterior post = posteriors(d.residuals, nv + p_var);
            const double r = observation_variance(post, d.q, h_pred, nv);
            const double k = lmmse_update(h_pred, y, p_var, r).gain;
            const cplx eps = transition_value(q) / transition_value(d.q);
            injected += k * k * std::norm(h_pred) * std::norm(eps - 1.0);
            bound += ambiguity_injection_bound(k, std::norm(h_pred), 1.0 - post[static_cast<std::size_t>(d.q)]);
        }
        CHECK(injected / n <= bound / n);
    }

    TEST_CASE("dividing by a unit symbol keeps the noise variance") {
        std::mt19937_64 rng(16);
        const int n = 100000;
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            const cplx x_hat = transition_value(static_cast<int>(rng() % 4));
            s += std::norm(cn(rng, 0.3) / x_hat);
        }
        CHECK(s / n == doctest::Approx(0.3).epsilon(0.02));
    }

    TEST_CASE("forced unit gains reduce the tracker to map direct") {
        const Frame f = make_frame(default_scene(), 4.0, 17);
        for (double alpha : {0.0, 0.15}) {
            TrackerOptions o;
            o.alpha = alpha;
            o.noise_var = f.noise_var;
            o.forced_tracking_gain = 1.0;
            o.forced_reliability = 1.0;
            const EstimatorOutput forced = track_frame(f.y, f.prs, o);
            const EstimatorOutput direct = map_direct_estimate(f.y, f.prs, alpha, f.noise_var);
            CHECK(forced.recon.symbols == direct.recon.symbols);
            CHECK(forced.tracking_csi == direct.tracking_csi);
            CHECK(forced.sensing_csi == direct.sensing_csi);
        }
    }

    TEST_CASE("posterior_a0 freezes the tracked CSI at the PRS estimate") {
        const Frame f = make_frame(default_scene(), 5.0, 18);
        TrackerOptions o;
        o.noise_var = f.noise_var;
        const EstimatorOutput out = run_scheme(Scheme::posterior_a0, f.y, f.prs, o);
        CHECK(out.scheme == Scheme::posterior_a0);
        for (std::size_t m = 1; m < 76; ++m) {
            for (std::size_t k = 0; k < 1536; k += 101) {
                CHECK(out.tracking_csi(k, m) == out.tracking_csi(k, 0));
                CHECK(out.tracking_gain(k, m) == 0.0);
            }
        }
    }

    TEST_CASE("scheme names round-trip") {
        for (Scheme s : all_schemes()) CHECK(parse_scheme(scheme_name(s)) == s);
        CHECK_THROWS_AS(parse_scheme("kalman"), ValidationError);
    }

    TEST_CASE("frame shape checks") {
        const CsiGrid y(8, 4);
        CHECK_THROWS_AS(track_frame(y, CVec(7, 1.0), {}), ValidationError);
        CHECK_THROWS_AS(open_loop_estimate(y, CVec(9, 1.0)), ValidationError);
        CHECK_THROWS_AS(map_direct_estimate(CsiGrid(8, 0), CVec(8, 1.0), 0.1, 0.1), ValidationError);
    }
}

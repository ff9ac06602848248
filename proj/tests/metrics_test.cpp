#include <doctest.h>

#include <cmath>
#include <set>

#include "dabsense/metrics.hpp"

using namespace dabsense;

namespace {

SymbolGrid frame_symbols(std::size_t tones, std::size_t transitions, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const CVec prs = random_prs(tones, rng);
    return encode_frame(prs, random_transitions(tones, transitions, rng));
}

// 81 x 101 map of ones on a 2 Hz axis centred on 0 Hz.
RangeDopplerMap flat_map(double level = 1.0) {
    RangeDopplerMap m;
    for (int r = 0; r < 81; ++r) m.range_bins.push_back(r);
    for (int j = 0; j < 101; ++j) m.doppler_hz.push_back(-100.0 + 2.0 * j);
    m.values.assign(m.rows() * m.cols(), cplx{std::sqrt(level), 0.0});
    return m;
}

}  // namespace

TEST_SUITE("examples/metrics") {
    TEST_CASE("symbol error rate") {
        const SymbolGrid truth = frame_symbols(1536, 75, 1);
        CHECK(symbol_error_rate(truth, truth) == 0.0);

        SymbolGrid all_wrong = truth;
        for (std::size_t m = 1; m < 76; ++m)
            for (std::size_t k = 0; k < 1536; ++k) all_wrong.symbols(k, m) *= cplx{0.0, 1.0};
        CHECK(symbol_error_rate(all_wrong, truth) == 1.0);

        SymbolGrid one_wrong = truth;
        one_wrong.symbols(10, 40) *= -1.0;
        CHECK(symbol_error_rate(one_wrong, truth) == doctest::Approx(1.0 / (1536.0 * 75.0)));

        // The PRS symbol is not scored.
        SymbolGrid prs_wrong = truth;
        prs_wrong.symbols(3, 0) *= -1.0;
        CHECK(symbol_error_rate(prs_wrong, truth) == 0.0);
    }

    TEST_CASE("NMSE") {
        CsiGrid h(16, 4);
        std::mt19937_64 rng(2);
        std::normal_distribution<double> g;
        for (auto& v : h.data()) {
            const double re = g(rng);
            v = {re, g(rng)};
        }
        CHECK(nmse_db(h, h) == -kDbCap);
        CHECK(nmse_db(CsiGrid(16, 4), h) == doctest::Approx(0.0));
        CsiGrid twice = h;
        for (auto& v : twice.data()) v *= 2.0;
        CHECK(nmse_db(twice, h) == doctest::Approx(0.0));
        CHECK_THROWS_AS(nmse_db(h, CsiGrid(16, 4)), ValidationError);
        CHECK_THROWS_AS(nmse_db(h, CsiGrid(16, 3)), ValidationError);
    }

    TEST_CASE("target-to-background ratio") {
        RangeDopplerMap m = flat_map();
        const RegionSpec region = region_for(m, 40, 30.0);
        CHECK(region.target_col == 65);
        CHECK(region.dc_col == 50);
        CHECK(tbr_db(m, region) == doctest::Approx(0.0));
        m(40, 65) = 10.0;
        CHECK(tbr_db(m, region) == doctest::Approx(20.0));
    }

    TEST_CASE("focus ratios") {
        RangeDopplerMap m = flat_map(0.0);
        const RegionSpec region = region_for(m, 40, 30.0);
        m(40, 65) = 10.0;
        CHECK(range_focus_db(m, region) == kDbCap);
        CHECK(doppler_focus_db(m, region) == kDbCap);

        const RangeDopplerMap ones = flat_map();
        CHECK(range_focus_db(ones, region) == doctest::Approx(0.0));
        CHECK(doppler_focus_db(ones, region) == doctest::Approx(0.0));

        RangeDopplerMap peaked = flat_map();
        peaked(40, 65) = 10.0;
        CHECK(range_focus_db(peaked, region) == doctest::Approx(20.0));
        CHECK(doppler_focus_db(peaked, region) == doctest::Approx(20.0));
        const MapQuality q = map_quality(peaked, region);
        CHECK(q.tbr_db == doctest::Approx(20.0));
    }

    TEST_CASE("average gains") {
        const ToneGrid<double> zero(8, 5, 0.0);
        const ToneGrid<double> one(8, 5, 1.0);
        ToneGrid<double> half(8, 5, 0.5);
        half(0, 0) = 99.0;  // PRS column is not averaged
        const std::vector<ToneGrid<double>> t0{zero};
        const std::vector<ToneGrid<double>> t1{one};
        const std::vector<ToneGrid<double>> th{half};
        CHECK(average_gains(t0, t0).tracking == 0.0);
        CHECK(average_gains(t1, t1).sensing == 1.0);
        const AverageGains g = average_gains(th, t1);
        CHECK(g.tracking == doctest::Approx(0.5));
        CHECK(g.sensing == doctest::Approx(1.0));
    }

    TEST_CASE("power ratio edge cases") {
        CHECK(power_ratio_db(0.0, 0.0) == 0.0);
        CHECK(power_ratio_db(1.0, 0.0) == kDbCap);
        CHECK(power_ratio_db(0.0, 1.0) == -kDbCap);
        CHECK(power_ratio_db(1e-40, 1.0) == -kDbCap);
        CHECK(power_ratio_db(10.0, 1.0) == doctest::Approx(10.0));
    }
}

TEST_SUITE("properties/metrics") {
    TEST_CASE("ratios are invariant to map scaling") {
        std::mt19937_64 rng(3);
        std::normal_distribution<double> g;
        RangeDopplerMap m = flat_map();
        for (auto& v : m.values) {
            const double re = g(rng);
            v = {re, g(rng)};
        }
        m(30, 80) = 12.0;
        const RegionSpec region = region_for(m, 30, 60.0);
        const MapQuality a = map_quality(m, region);
        for (auto& v : m.values) v *= cplx{0.0, -37.5};
        const MapQuality b = map_quality(m, region);
        CHECK(a.tbr_db == doctest::Approx(b.tbr_db).epsilon(1e-12));
        CHECK(a.range_focus_db == doctest::Approx(b.range_focus_db).epsilon(1e-12));
        CHECK(a.doppler_focus_db == doctest::Approx(b.doppler_focus_db).epsilon(1e-12));
    }

    TEST_CASE("background set matches an explicit construction") {
        std::mt19937_64 rng(4);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        RangeDopplerMap m = flat_map();
        for (auto& v : m.values) v = std::polar(u(rng), 6.0 * u(rng));
        // Target near the map edge so the window is clipped, DC inside the window.
        const RegionSpec region = region_for(m, 5, -50.0);
        std::set<std::pair<int, int>> window;
        std::set<std::pair<int, int>> excluded;
        for (int i = region.target_row - region.window_range; i <= region.target_row + region.window_range; ++i)
            for (int j = region.target_col - region.window_doppler; j <= region.target_col + region.window_doppler; ++j)
                if (i >= 0 && i < 81 && j >= 0 && j < 101) window.insert({i, j});
        for (int i = region.target_row - region.guard_range; i <= region.target_row + region.guard_range; ++i)
            for (int j = region.target_col - region.guard_doppler; j <= region.target_col + region.guard_doppler; ++j)
                excluded.insert({i, j});
        for (int i = 0; i < 81; ++i)
            for (int j = region.dc_col - region.dc_guard; j <= region.dc_col + region.dc_guard; ++j) excluded.insert({i, j});
        double sum = 0.0;
        int n = 0;
        for (const auto& cell : window) {
            if (excluded.count(cell)) continue;
            sum += m.power(static_cast<std::size_t>(cell.first), static_cast<std::size_t>(cell.second));
            ++n;
        }
        double peak = 0.0;
        for (const auto& cell : excluded) {
            if (std::abs(cell.second - region.dc_col) <= region.dc_guard &&
                (std::abs(cell.first - region.target_row) > region.guard_range ||
                 std::abs(cell.second - region.target_col) > region.guard_doppler))
                continue;
            if (window.count(cell))
                peak = std::max(peak, m.power(static_cast<std::size_t>(cell.first), static_cast<std::size_t>(cell.second)));
        }
        CHECK(tbr_db(m, region) == doctest::Approx(10.0 * std::log10(peak / (sum / n))).epsilon(1e-12));
    }

    TEST_CASE("SER stays in [0, 1] and NMSE is finite") {
        const SymbolGrid truth = frame_symbols(64, 10, 5);
        std::mt19937_64 rng(6);
        for (int i = 0; i < 50; ++i) {
            SymbolGrid est = truth;
            for (auto& x : est.symbols.data())
                if (rng() % 3 == 0) x *= transition_value(static_cast<int>(rng() % 4));
            const double ser = symbol_error_rate(est, truth);
            CHECK(ser >= 0.0);
            CHECK(ser <= 1.0);
            CsiGrid a(64, 11);
            CsiGrid b(64, 11, cplx{1.0, 0.0});
            for (std::size_t k = 0; k < a.data().size(); ++k) a.data()[k] = est.symbols.data()[k];
            CHECK(std::isfinite(nmse_db(a, b)));
        }
    }

    TEST_CASE("pooled NMSE weights by reference power") {
        CsiGrid t1(4, 1, cplx{1.0, 0.0});
        CsiGrid t2(4, 1, cplx{3.0, 0.0});
        CsiGrid e1(4, 1, cplx{2.0, 0.0});  // error power 4 on reference 4
        CsiGrid e2 = t2;                    // error 0 on reference 36
        NmseAccumulator acc;
        acc.add(e1, t1);
        acc.add(e2, t2);
        CHECK(acc.db() == doctest::Approx(10.0 * std::log10(4.0 / 40.0)));
        CHECK_THROWS_AS(NmseAccumulator{}.db(), ValidationError);
    }

    TEST_CASE("region validation") {
        RegionSpec r;
        CHECK_NOTHROW(r.validate());
        r.guard_range = 40;
        CHECK_THROWS_AS(r.validate(), ValidationError);
        r = RegionSpec{};
        r.dc_guard = -1;
        CHECK_THROWS_AS(r.validate(), ValidationError);
        RangeDopplerMap m = flat_map();
        RegionSpec outside;
        outside.target_row = 200;
        CHECK_THROWS_AS(tbr_db(m, outside), InvalidIndexError);
    }
}

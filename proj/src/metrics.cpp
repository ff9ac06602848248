#include "dabsense/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace dabsense {

namespace {

cplx snap(cplx x) {
    const double a = std::abs(x);
    return a > 0.0 ? x / a : x;
}

struct Bounds {
    int lo;
    int hi;  // inclusive
};

Bounds clip(int centre, int half, std::size_t size) {
    return {std::max(0, centre - half), std::min(static_cast<int>(size) - 1, centre + half)};
}

double mainlobe_peak(const RangeDopplerMap& map, const RegionSpec& g) {
    const Bounds rows = clip(g.target_row, g.guard_range, map.rows());
    const Bounds cols = clip(g.target_col, g.guard_doppler, map.cols());
    double peak = 0.0;
    for (int i = rows.lo; i <= rows.hi; ++i) {
        for (int j = cols.lo; j <= cols.hi; ++j)
            peak = std::max(peak, map.power(static_cast<std::size_t>(i), static_cast<std::size_t>(j)));
    }
    return peak;
}

void check_target(const RangeDopplerMap& map, const RegionSpec& g) {
    g.validate();
    if (g.target_row < 0 || g.target_row >= static_cast<int>(map.rows()) || g.target_col < 0 ||
        g.target_col >= static_cast<int>(map.cols()))
        throw InvalidIndexError("target cell lies outside the map");
}

}  // namespace

double power_ratio_db(double num, double den) {
    if (num == 0.0 && den == 0.0) return 0.0;
    if (den == 0.0) return kDbCap;
    if (num == 0.0) return -kDbCap;
    return std::clamp(10.0 * std::log10(num / den), -kDbCap, kDbCap);
}

SymbolErrorCount count_symbol_errors(const SymbolGrid& est, const SymbolGrid& truth) {
    if (!est.symbols.same_shape(truth.symbols)) throw ValidationError("symbol grids differ in shape");
    SymbolErrorCount c;
    for (std::size_t m = 1; m < truth.symbols.symbols(); ++m) {
        for (std::size_t k = 0; k < truth.symbols.tones(); ++k) {
            c.errors += std::abs(snap(est.symbols(k, m)) - snap(truth.symbols(k, m))) > 1e-9;
            ++c.cells;
        }
    }
    return c;
}

double symbol_error_rate(const SymbolGrid& est, const SymbolGrid& truth) {
    return count_symbol_errors(est, truth).rate();
}

void NmseAccumulator::add(const CsiGrid& est, const CsiGrid& truth) {
    if (!est.same_shape(truth)) throw ValidationError("CSI grids differ in shape");
    for (std::size_t i = 0; i < truth.data().size(); ++i) {
        error += std::norm(est.data()[i] - truth.data()[i]);
        reference += std::norm(truth.data()[i]);
    }
}

double NmseAccumulator::db() const {
    if (!(reference > 0.0)) throw ValidationError("NMSE reference has zero power");
    return power_ratio_db(error, reference);
}

double nmse_db(const CsiGrid& est, const CsiGrid& truth) {
    NmseAccumulator acc;
    acc.add(est, truth);
    return acc.db();
}

void RegionSpec::validate() const {
    if (guard_range < 0 || guard_doppler < 0 || dc_guard < 0) throw ValidationError("guards must be non-negative");
    if (guard_range > window_range || guard_doppler > window_doppler)
        throw ValidationError("guards must not exceed the evaluation window");
}

RegionSpec region_for(const RangeDopplerMap& map, int r0, double nu0) {
    RegionSpec g;
    g.target_row = static_cast<int>(map.row_of(r0));
    g.target_col = static_cast<int>(map.nearest_col(nu0));
    if (map.cols() >= 2) {
        const double step = map.doppler_hz[1] - map.doppler_hz[0];
        g.dc_col = static_cast<int>(std::lround(-map.doppler_hz[0] / step));
    } else {
        g.dc_col = 0;
    }
    return g;
}

double tbr_db(const RangeDopplerMap& map, const RegionSpec& g) {
    check_target(map, g);
    const Bounds rows = clip(g.target_row, g.window_range, map.rows());
    const Bounds cols = clip(g.target_col, g.window_doppler, map.cols());
    double sum = 0.0;
    std::size_t count = 0;
    for (int i = rows.lo; i <= rows.hi; ++i) {
        for (int j = cols.lo; j <= cols.hi; ++j) {
            const bool in_main = std::abs(i - g.target_row) <= g.guard_range && std::abs(j - g.target_col) <= g.guard_doppler;
            const bool in_dc = std::abs(j - g.dc_col) <= g.dc_guard;
            if (in_main || in_dc) continue;
            sum += map.power(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
            ++count;
        }
    }
    if (count == 0) throw ValidationError("empty background region");
    return power_ratio_db(mainlobe_peak(map, g), sum / static_cast<double>(count));
}

double range_focus_db(const RangeDopplerMap& map, const RegionSpec& g) {
    check_target(map, g);
    const Bounds rows = clip(g.target_row, g.window_range, map.rows());
    const Bounds cut_cols = clip(g.target_col, g.guard_doppler, map.cols());
    double sum = 0.0;
    std::size_t count = 0;
    for (int i = rows.lo; i <= rows.hi; ++i) {
        if (std::abs(i - g.target_row) <= g.guard_range) continue;
        double cut = 0.0;
        for (int j = cut_cols.lo; j <= cut_cols.hi; ++j)
            cut = std::max(cut, map.power(static_cast<std::size_t>(i), static_cast<std::size_t>(j)));
        sum += cut;
        ++count;
    }
    if (count == 0) throw ValidationError("empty range sidelobe set");
    return power_ratio_db(mainlobe_peak(map, g), sum / static_cast<double>(count));
}

double doppler_focus_db(const RangeDopplerMap& map, const RegionSpec& g) {
    check_target(map, g);
    const Bounds cols = clip(g.target_col, g.window_doppler, map.cols());
    const Bounds cut_rows = clip(g.target_row, g.guard_range, map.rows());
    double sum = 0.0;
    std::size_t count = 0;
    for (int j = cols.lo; j <= cols.hi; ++j) {
        if (std::abs(j - g.target_col) <= g.guard_doppler || std::abs(j - g.dc_col) <= g.dc_guard) continue;
        double cut = 0.0;
        for (int i = cut_rows.lo; i <= cut_rows.hi; ++i)
            cut = std::max(cut, map.power(static_cast<std::size_t>(i), static_cast<std::size_t>(j)));
        sum += cut;
        ++count;
    }
    if (count == 0) throw ValidationError("empty Doppler sidelobe set");
    return power_ratio_db(mainlobe_peak(map, g), sum / static_cast<double>(count));
}

MapQuality map_quality(const RangeDopplerMap& map, const RegionSpec& region) {
    return {tbr_db(map, region), range_focus_db(map, region), doppler_focus_db(map, region)};
}

void GainAverager::add(const ToneGrid<double>& tracking, const ToneGrid<double>& sensing) {
    if (!tracking.same_shape(sensing)) throw ValidationError("gain grids differ in shape");
    for (std::size_t m = 1; m < tracking.symbols(); ++m) {
        for (std::size_t k = 0; k < tracking.tones(); ++k) {
            tracking_sum += tracking(k, m);
            sensing_sum += sensing(k, m);
            ++count;
        }
    }
}

AverageGains average_gains(std::span<const ToneGrid<double>> tracking, std::span<const ToneGrid<double>> sensing) {
    if (tracking.size() != sensing.size()) throw ValidationError("gain trace counts differ");
    GainAverager acc;
    for (std::size_t i = 0; i < tracking.size(); ++i) acc.add(tracking[i], sensing[i]);
    return {acc.mean_tracking(), acc.mean_sensing()};
}

}  // namespace dabsense

#pragma once

#include <cstdint>

#include "dabsense/common.hpp"
#include "dabsense/numerology.hpp"
#include "dabsense/rdm.hpp"

namespace dabsense {

/// dB values are clamped to +-kDbCap so exact matches and empty backgrounds stay finite.
inline constexpr double kDbCap = 300.0;

/// 10 log10(num / den) clamped to +-kDbCap; 0/0 reads as 0 dB.
double power_ratio_db(double num, double den);

struct SymbolErrorCount {
    std::uint64_t errors = 0;
    std::uint64_t cells = 0;
    double rate() const { return cells ? static_cast<double>(errors) / static_cast<double>(cells) : 0.0; }
    SymbolErrorCount& operator+=(const SymbolErrorCount& o) {
        errors += o.errors;
        cells += o.cells;
        return *this;
    }
};

/// Compares symbols m >= 1 after snapping both to unit modulus (tolerance 1e-9).
SymbolErrorCount count_symbol_errors(const SymbolGrid& est, const SymbolGrid& truth);
double symbol_error_rate(const SymbolGrid& est, const SymbolGrid& truth);

/// Pooled NMSE over any number of (estimate, truth) pairs.
struct NmseAccumulator {
    double error = 0.0;
    double reference = 0.0;
    void add(const CsiGrid& est, const CsiGrid& truth);
    /// Throws ValidationError if no reference power was accumulated.
    double db() const;
};

double nmse_db(const CsiGrid& est, const CsiGrid& truth);

/// Target neighbourhood in map index space (row = range index, col = Doppler index).
/// dc_col may fall outside the map when only a window of the Doppler axis was evaluated.
struct RegionSpec {
    int target_row = 0;
    int target_col = 0;
    int dc_col = 0;
    int guard_range = 2;
    int guard_doppler = 2;
    int window_range = 38;
    int window_doppler = 26;
    int dc_guard = 2;

    void validate() const;
};

/// Region around the map cell nearest to (range bin r0, Doppler nu0), default guards and windows.
/// The zero-Doppler column is located from the (uniform) Doppler axis even if 0 Hz is off the map.
RegionSpec region_for(const RangeDopplerMap& map, int r0, double nu0);

/// max |G|^2 over the mainlobe over mean |G|^2 over window \ (mainlobe u DC guard), in dB.
double tbr_db(const RangeDopplerMap& map, const RegionSpec& region);
/// Mainlobe peak over RMS of the range cut on the sidelobe ranges, in dB.
double range_focus_db(const RangeDopplerMap& map, const RegionSpec& region);
/// Mainlobe peak over RMS of the Doppler cut on the sidelobe Dopplers outside the DC guard, in dB.
double doppler_focus_db(const RangeDopplerMap& map, const RegionSpec& region);

struct MapQuality {
    double tbr_db = 0.0;
    double range_focus_db = 0.0;
    double doppler_focus_db = 0.0;
};
MapQuality map_quality(const RangeDopplerMap& map, const RegionSpec& region);

/// Running means of the tracking and sensing gains over symbols m >= 1.
struct GainAverager {
    double tracking_sum = 0.0;
    double sensing_sum = 0.0;
    std::uint64_t count = 0;
    void add(const ToneGrid<double>& tracking, const ToneGrid<double>& sensing);
    double mean_tracking() const { return count ? tracking_sum / static_cast<double>(count) : 0.0; }
    double mean_sensing() const { return count ? sensing_sum / static_cast<double>(count) : 0.0; }
};

struct AverageGains {
    double tracking = 0.0;
    double sensing = 0.0;
};
AverageGains average_gains(std::span<const ToneGrid<double>> tracking, std::span<const ToneGrid<double>> sensing);

}  // namespace dabsense

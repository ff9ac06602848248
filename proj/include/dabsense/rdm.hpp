#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dabsense/common.hpp"
#include "dabsense/numerology.hpp"

namespace dabsense {

enum class WindowKind { hann, rect };

std::string_view window_name(WindowKind w);
WindowKind parse_window(std::string_view name);

/// Taper over n slow-time samples. Hann is the symmetric form; n == 1 gives {1}.
RVec make_window(WindowKind kind, std::size_t n);

/// Complex map G(r, nu), row-major with one row per range bin.
struct RangeDopplerMap {
    std::vector<int> range_bins;
    RVec doppler_hz;
    CVec values;
    std::string window_id;

    std::size_t rows() const { return range_bins.size(); }
    std::size_t cols() const { return doppler_hz.size(); }
    cplx& operator()(std::size_t i, std::size_t j) { return values[i * cols() + j]; }
    const cplx& operator()(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }
    double power(std::size_t i, std::size_t j) const { return std::norm((*this)(i, j)); }

    /// Bistatic range c * r / f_s of row i.
    double range_m(std::size_t i, double sample_rate = 2.048e6) const;

    /// (row, col) of the largest |G|; first occurrence on ties.
    std::pair<std::size_t, std::size_t> argmax() const;
    /// Row holding range bin r; throws InvalidIndexError if absent.
    std::size_t row_of(int r) const;
    /// Column whose Doppler value is closest to nu.
    std::size_t nearest_col(double nu) const;
};

/// Active-tone vector placed at FFT bins (k mod N); zeros on DC and guards.
CVec embed_full_grid(std::span<const cplx> h_active, const SubcarrierGrid& grid = {});

/// Unitary inverse DFT: x[n] = N^{-1/2} sum_b X[b] e^{+j 2 pi b n / N}.
CVec csi_to_cir(std::span<const cplx> full_grid);

/// CIR rows 0..range_count-1 of every symbol of one frame, shaped [range_count x M].
ToneGrid<cplx> frame_cir(const CsiGrid& csi, std::size_t range_count, const SubcarrierGrid& grid = {});

/// Within-frame first difference along slow time: out(r, m-1) = h(r, m) - h(r, m-1).
/// Throws ValidationError when the frame has fewer than two symbols.
ToneGrid<cplx> slow_time_difference(const ToneGrid<cplx>& cir);

/// Differenced samples of several frames laid end to end with their slow times.
struct SlowTimeRecord {
    ToneGrid<cplx> samples;  // [range bins x total samples]
    RVec times;
};

/// Sample m-1 of the differenced frame f is stamped with t_{m,f}.
SlowTimeRecord build_record(std::span<const CsiGrid> frames, std::size_t range_count,
                            const SubcarrierGrid& grid = {});

/// Evenly spaced grid over [-span, +span]; points == 1 gives {0}.
RVec doppler_grid(double span_hz, int points);

/// G(r, nu) = sum_t w_t x(r, t) e^{-j 2 pi nu t} by direct summation over the
/// given slow times, evaluated only on the requested range bins and Doppler values.
RangeDopplerMap form_map(const ToneGrid<cplx>& samples, std::span<const double> times,
                         std::span<const double> window, std::span<const int> range_set,
                         std::span<const double> doppler_hz, std::string window_id = "custom");

struct MapOptions {
    int range_count = 0;  // 0 means cp_len
    double doppler_span_hz = 400.0;
    int doppler_points = 513;
    WindowKind window = WindowKind::hann;
};

/// Full map from sensing CSI over consecutive frames.
RangeDopplerMap sensing_map(std::span<const CsiGrid> frames, const MapOptions& options = {},
                            const SubcarrierGrid& grid = {});

/// Map on an explicit set of range bins and Doppler values (same record and taper as sensing_map).
RangeDopplerMap sensing_map_window(const SlowTimeRecord& record, WindowKind window, std::span<const int> range_set,
                                   std::span<const double> doppler_hz);

/// CSV with header "range_bin,doppler_hz,power,phase_rad".
void write_map_csv(const RangeDopplerMap& map, std::ostream& os);

/// Little-endian: uint32 rows, uint32 cols, then rows*cols (float32 re, float32 im) pairs, row-major.
void write_map_binary(const RangeDopplerMap& map, std::ostream& os);
/// Reads the binary layout back; axis labels are not stored and come back as indices.
RangeDopplerMap read_map_binary(std::istream& is);

}  // namespace dabsense

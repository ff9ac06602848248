#include "dabsense/rdm.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>

namespace dabsense {

namespace {

// Planning is not thread-safe in FFTW; execution of an existing plan on new
// arrays is, so plans are created once per size under a lock.
fftw_plan backward_plan(int n) {
    static std::mutex mu;
    static std::map<int, fftw_plan> plans;
    std::lock_guard lock(mu);
    auto it = plans.find(n);
    if (it != plans.end()) return it->second;
    std::vector<fftw_complex> scratch_in(static_cast<std::size_t>(n));
    std::vector<fftw_complex> scratch_out(static_cast<std::size_t>(n));
    fftw_plan p = fftw_plan_dft_1d(n, scratch_in.data(), scratch_out.data(), FFTW_BACKWARD,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!p) throw std::runtime_error("FFTW could not create a plan");
    plans.emplace(n, p);
    return p;
}

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw ValidationError("truncated map file");
    return std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 | std::uint32_t{b[3]} << 24;
}

}  // namespace

std::string_view window_name(WindowKind w) { return w == WindowKind::hann ? "hann" : "rect"; }

WindowKind parse_window(std::string_view name) {
    if (name == "hann") return WindowKind::hann;
    if (name == "rect") return WindowKind::rect;
    throw ValidationError("unknown window '" + std::string(name) + "'");
}

RVec make_window(WindowKind kind, std::size_t n) {
    RVec w(n, 1.0);
    if (kind == WindowKind::rect || n < 2) return w;
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n - 1));
    return w;
}

double RangeDopplerMap::range_m(std::size_t i, double sample_rate) const {
    return kSpeedOfLight * range_bins.at(i) / sample_rate;
}

std::pair<std::size_t, std::size_t> RangeDopplerMap::argmax() const {
    if (values.empty()) throw ValidationError("empty map");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (std::norm(values[i]) > std::norm(values[best])) best = i;
    }
    return {best / cols(), best % cols()};
}

std::size_t RangeDopplerMap::row_of(int r) const {
    auto it = std::find(range_bins.begin(), range_bins.end(), r);
    if (it == range_bins.end()) throw InvalidIndexError("range bin " + std::to_string(r) + " not in map");
    return static_cast<std::size_t>(it - range_bins.begin());
}

std::size_t RangeDopplerMap::nearest_col(double nu) const {
    if (doppler_hz.empty()) throw ValidationError("empty Doppler axis");
    std::size_t best = 0;
    for (std::size_t j = 1; j < doppler_hz.size(); ++j) {
        if (std::abs(doppler_hz[j] - nu) < std::abs(doppler_hz[best] - nu)) best = j;
    }
    return best;
}

CVec embed_full_grid(std::span<const cplx> h_active, const SubcarrierGrid& grid) {
    if (h_active.size() != static_cast<std::size_t>(grid.active_count))
        throw ValidationError("active CSI length does not match the grid");
    CVec full(static_cast<std::size_t>(grid.fft_size));
    const std::vector<int> ks = active_indices(grid);
    for (std::size_t i = 0; i < ks.size(); ++i)
        full[static_cast<std::size_t>(map_active_to_fft_bin(ks[i], grid))] = h_active[i];
    return full;
}

CVec csi_to_cir(std::span<const cplx> full_grid) {
    const auto n = static_cast<int>(full_grid.size());
    if (n == 0) return {};
    CVec in(full_grid.begin(), full_grid.end());
    CVec out(full_grid.size());
    fftw_execute_dft(backward_plan(n), reinterpret_cast<fftw_complex*>(in.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (auto& v : out) v *= scale;
    return out;
}

ToneGrid<cplx> frame_cir(const CsiGrid& csi, std::size_t range_count, const SubcarrierGrid& grid) {
    if (range_count > static_cast<std::size_t>(grid.fft_size))
        throw ValidationError("range count exceeds the FFT size");
    ToneGrid<cplx> out(range_count, csi.symbols());
    for (std::size_t m = 0; m < csi.symbols(); ++m) {
        const CVec cir = csi_to_cir(embed_full_grid(csi.symbol(m), grid));
        std::copy_n(cir.begin(), range_count, out.symbol(m).begin());
    }
    return out;
}

ToneGrid<cplx> slow_time_difference(const ToneGrid<cplx>& cir) {
    if (cir.symbols() < 2) throw ValidationError("slow-time differencing needs at least two symbols");
    ToneGrid<cplx> out(cir.tones(), cir.symbols() - 1);
    for (std::size_t m = 1; m < cir.symbols(); ++m) {
        for (std::size_t r = 0; r < cir.tones(); ++r) out(r, m - 1) = cir(r, m) - cir(r, m - 1);
    }
    return out;
}

SlowTimeRecord build_record(std::span<const CsiGrid> frames, std::size_t range_count, const SubcarrierGrid& grid) {
    if (frames.empty()) throw ValidationError("no frames to process");
    const std::size_t per_frame = frames.front().symbols() >= 1 ? frames.front().symbols() - 1 : 0;
    SlowTimeRecord rec;
    rec.samples = ToneGrid<cplx>(range_count, per_frame * frames.size());
    rec.times.reserve(per_frame * frames.size());
    for (std::size_t f = 0; f < frames.size(); ++f) {
        if (frames[f].symbols() != per_frame + 1) throw ValidationError("frames differ in symbol count");
        const ToneGrid<cplx> diff = slow_time_difference(frame_cir(frames[f], range_count, grid));
        for (std::size_t m = 1; m <= per_frame; ++m) {
            auto dst = rec.samples.symbol(f * per_frame + m - 1);
            auto src = diff.symbol(m - 1);
            std::copy(src.begin(), src.end(), dst.begin());
            rec.times.push_back(slow_time(static_cast<int>(m), static_cast<int>(f), grid));
        }
    }
    return rec;
}

RVec doppler_grid(double span_hz, int points) {
    if (points < 1) throw ValidationError("Doppler grid needs at least one point");
    if (!(span_hz >= 0.0)) throw ValidationError("Doppler span must be non-negative");
    if (points == 1) return {0.0};
    RVec nu(static_cast<std::size_t>(points));
    const double step = 2.0 * span_hz / (points - 1);
    for (int i = 0; i < points; ++i) nu[static_cast<std::size_t>(i)] = -span_hz + step * i;
    if (points % 2) nu[static_cast<std::size_t>(points / 2)] = 0.0;
    return nu;
}

RangeDopplerMap form_map(const ToneGrid<cplx>& samples, std::span<const double> times,
                         std::span<const double> window, std::span<const int> range_set,
                         std::span<const double> doppler_hz, std::string window_id) {
    if (doppler_hz.empty()) throw ValidationError("empty Doppler grid");
    const std::size_t n_t = samples.symbols();
    if (times.size() != n_t || window.size() != n_t)
        throw ValidationError("slow-time axis, window and samples differ in length");

    RangeDopplerMap map;
    map.range_bins.assign(range_set.begin(), range_set.end());
    map.doppler_hz.assign(doppler_hz.begin(), doppler_hz.end());
    map.window_id = std::move(window_id);
    map.values.assign(map.rows() * map.cols(), cplx{});

    // Phasor table e^{-j 2 pi nu t}, split into real and imaginary planes so the
    // inner product below stays plain double arithmetic.
    const std::size_t n_nu = doppler_hz.size();
    RVec e_re(n_nu * n_t);
    RVec e_im(n_nu * n_t);
    for (std::size_t j = 0; j < n_nu; ++j) {
        for (std::size_t t = 0; t < n_t; ++t) {
            const double ph = -2.0 * kPi * doppler_hz[j] * times[t];
            e_re[j * n_t + t] = std::cos(ph);
            e_im[j * n_t + t] = std::sin(ph);
        }
    }

    RVec x_re(n_t);
    RVec x_im(n_t);
    for (std::size_t i = 0; i < map.rows(); ++i) {
        const int r = range_set[i];
        if (r < 0 || static_cast<std::size_t>(r) >= samples.tones())
            throw InvalidIndexError("range bin " + std::to_string(r) + " outside the record");
        for (std::size_t t = 0; t < n_t; ++t) {
            const cplx v = window[t] * samples(static_cast<std::size_t>(r), t);
            x_re[t] = v.real();
            x_im[t] = v.imag();
        }
        for (std::size_t j = 0; j < n_nu; ++j) {
            const double* er = e_re.data() + j * n_t;
            const double* ei = e_im.data() + j * n_t;
            double acc_re = 0.0;
            double acc_im = 0.0;
            for (std::size_t t = 0; t < n_t; ++t) {
                acc_re += x_re[t] * er[t] - x_im[t] * ei[t];
                acc_im += x_re[t] * ei[t] + x_im[t] * er[t];
            }
            map(i, j) = {acc_re, acc_im};
        }
    }
    return map;
}

RangeDopplerMap sensing_map_window(const SlowTimeRecord& record, WindowKind window, std::span<const int> range_set,
                                   std::span<const double> doppler_hz) {
    const RVec w = make_window(window, record.times.size());
    return form_map(record.samples, record.times, w, range_set, doppler_hz, std::string(window_name(window)));
}

RangeDopplerMap sensing_map(std::span<const CsiGrid> frames, const MapOptions& options, const SubcarrierGrid& grid) {
    const int range_count = options.range_count > 0 ? options.range_count : grid.cp_len;
    if (range_count > grid.cp_len) throw ValidationError("range set exceeds the cyclic prefix support");
    const SlowTimeRecord rec = build_record(frames, static_cast<std::size_t>(range_count), grid);
    std::vector<int> ranges(static_cast<std::size_t>(range_count));
    for (int r = 0; r < range_count; ++r) ranges[static_cast<std::size_t>(r)] = r;
    const RVec nu = doppler_grid(options.doppler_span_hz, options.doppler_points);
    return sensing_map_window(rec, options.window, ranges, nu);
}

void write_map_csv(const RangeDopplerMap& map, std::ostream& os) {
    os << "range_bin,doppler_hz,power,phase_rad\n";
    char buf[128];
    for (std::size_t i = 0; i < map.rows(); ++i) {
        for (std::size_t j = 0; j < map.cols(); ++j) {
            const cplx v = map(i, j);
            std::snprintf(buf, sizeof buf, "%d,%.6f,%.9g,%.9g\n", map.range_bins[i], map.doppler_hz[j], std::norm(v),
                          std::arg(v));
            os << buf;
        }
    }
}

void write_map_binary(const RangeDopplerMap& map, std::ostream& os) {
    put_u32(os, static_cast<std::uint32_t>(map.rows()));
    put_u32(os, static_cast<std::uint32_t>(map.cols()));
    for (const cplx& v : map.values) {
        for (float part : {static_cast<float>(v.real()), static_cast<float>(v.imag())})
            put_u32(os, std::bit_cast<std::uint32_t>(part));
    }
}

RangeDopplerMap read_map_binary(std::istream& is) {
    const std::uint32_t rows = get_u32(is);
    const std::uint32_t cols = get_u32(is);
    RangeDopplerMap map;
    map.range_bins.resize(rows);
    for (std::uint32_t i = 0; i < rows; ++i) map.range_bins[i] = static_cast<int>(i);
    map.doppler_hz.resize(cols);
    for (std::uint32_t j = 0; j < cols; ++j) map.doppler_hz[j] = j;
    map.values.resize(std::size_t{rows} * cols);
    for (cplx& v : map.values) {
        const float re = std::bit_cast<float>(get_u32(is));
        const float im = std::bit_cast<float>(get_u32(is));
        v = {re, im};
    }
    return map;
}

}  // namespace dabsense

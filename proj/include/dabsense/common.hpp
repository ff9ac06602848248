#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dabsense {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;
using RVec = std::vector<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 299792458.0;

/// Bad input shape, range, or value passed to a library operation.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Subcarrier index outside the active set.
class InvalidIndexError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Dense [tones x symbols] matrix for one frame.
///
/// Storage is symbol-major: all tones of symbol m are contiguous, so
/// `symbol(m)` is a span over the active-tone vector of that OFDM symbol.
template <typename T>
class ToneGrid {
public:
    ToneGrid() = default;
    ToneGrid(std::size_t tones, std::size_t symbols, T fill = T{})
        : tones_(tones), symbols_(symbols), data_(tones * symbols, fill) {}

    std::size_t tones() const { return tones_; }
    std::size_t symbols() const { return symbols_; }
    bool empty() const { return data_.empty(); }

    T& operator()(std::size_t k, std::size_t m) { return data_[m * tones_ + k]; }
    const T& operator()(std::size_t k, std::size_t m) const { return data_[m * tones_ + k]; }

    std::span<T> symbol(std::size_t m) { return {data_.data() + m * tones_, tones_}; }
    std::span<const T> symbol(std::size_t m) const { return {data_.data() + m * tones_, tones_}; }

    const std::vector<T>& data() const { return data_; }
    std::vector<T>& data() { return data_; }

    bool same_shape(const ToneGrid& other) const {
        return tones_ == other.tones_ && symbols_ == other.symbols_;
    }

    friend bool operator==(const ToneGrid&, const ToneGrid&) = default;

private:
    std::size_t tones_ = 0;
    std::size_t symbols_ = 0;
    std::vector<T> data_;
};

/// Complex CSI H[k, m] over the active tones of one frame.
using CsiGrid = ToneGrid<cplx>;

}  // namespace dabsense

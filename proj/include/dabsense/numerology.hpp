#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "dabsense/common.hpp"

namespace dabsense {

/// DAB+ Mode-I numerology. Defaults are the broadcast constants; `null_len`
/// is kept overridable because published descriptions disagree on it.
struct SubcarrierGrid {
    int fft_size = 2048;
    int cp_len = 504;
    int active_count = 1536;
    double sample_rate = 2.048e6;
    double subcarrier_spacing = 1000.0;
    int useful_symbols_per_frame = 76;  // index 0 is the PRS
    int null_len = 2656;

    int half_width() const { return active_count / 2; }
    /// (fft_size + cp_len) / sample_rate
    double symbol_duration() const;
    /// useful_symbols_per_frame * T_sym + null_len / sample_rate
    double frame_duration() const;

    void validate() const;
};

/// Signed active indices -K/2..-1, 1..K/2 in ascending order.
std::vector<int> active_indices(const SubcarrierGrid& grid);

/// Maps a signed active index to its FFT bin (k mod fft_size).
/// Throws InvalidIndexError for k == 0 or |k| beyond the active half-width.
int map_active_to_fft_bin(int k, const SubcarrierGrid& grid = {});

/// Time of useful symbol m in frame f: f * T_fr + m * T_sym.
double slow_time(int m, int f, const SubcarrierGrid& grid = {});

// Differential pi/4-QPSK transition alphabet e^{j(pi/4 + q pi/2)}.
inline constexpr int kAlphabetSize = 4;
using TransitionIndex = std::uint8_t;

cplx transition_value(int q);
const std::array<cplx, kAlphabetSize>& transition_alphabet();

/// Alphabet index whose point is nearest (in angle) to z. Only the phase of z
/// matters; z == 0 maps to index 0.
int nearest_transition(cplx z);

/// True and reconstructed symbols of one frame.
///
/// `symbols` is [K x M] with column 0 equal to the PRS; `transitions` is
/// [K x (M-1)] where transitions(k, m-1) carries symbol m-1 -> m.
struct SymbolGrid {
    CVec prs;
    ToneGrid<cplx> symbols;
    ToneGrid<TransitionIndex> transitions;
};

/// Differentially encodes a frame anchored on `prs`.
/// Throws ValidationError for a non-unit-modulus PRS, a tone-count mismatch,
/// or a transition index outside 0..3.
SymbolGrid encode_frame(std::span<const cplx> prs, const ToneGrid<TransitionIndex>& transitions);

/// Recovers transition indices from consecutive-symbol ratios snapped to the alphabet.
ToneGrid<TransitionIndex> decode_transitions(const ToneGrid<cplx>& symbols);

/// Seeded unit-modulus PRS drawn from the alphabet points.
CVec random_prs(std::size_t tones, std::mt19937_64& rng);

/// Uniform i.i.d. transition indices, [tones x transitions].
ToneGrid<TransitionIndex> random_transitions(std::size_t tones, std::size_t transitions,
                                             std::mt19937_64& rng);

}  // namespace dabsense

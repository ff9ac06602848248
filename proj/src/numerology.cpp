#include "dabsense/numerology.hpp"

#include <cmath>
#include <string>

namespace dabsense {

double SubcarrierGrid::symbol_duration() const {
    return static_cast<double>(fft_size + cp_len) / sample_rate;
}

double SubcarrierGrid::frame_duration() const {
    return useful_symbols_per_frame * symbol_duration() + static_cast<double>(null_len) / sample_rate;
}

void SubcarrierGrid::validate() const {
    if (fft_size <= 0 || cp_len < 0 || null_len < 0)
        throw ValidationError("grid sizes must be non-negative and fft_size positive");
    if (active_count <= 0 || active_count % 2 != 0 || active_count >= fft_size)
        throw ValidationError("active_count must be even, positive and below fft_size");
    if (useful_symbols_per_frame < 1)
        throw ValidationError("a frame needs at least the PRS symbol");
    if (!(sample_rate > 0.0))
        throw ValidationError("sample_rate must be positive");
    if (std::abs(subcarrier_spacing * fft_size - sample_rate) > 1e-6 * sample_rate)
        throw ValidationError("subcarrier_spacing * fft_size must equal sample_rate");
}

std::vector<int> active_indices(const SubcarrierGrid& grid) {
    const int half = grid.half_width();
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(grid.active_count));
    for (int k = -half; k <= half; ++k) {
        if (k != 0) out.push_back(k);
    }
    return out;
}

int map_active_to_fft_bin(int k, const SubcarrierGrid& grid) {
    if (k == 0 || std::abs(k) > grid.half_width())
        throw InvalidIndexError("subcarrier index " + std::to_string(k) + " is not active");
    const int n = grid.fft_size;
    return ((k % n) + n) % n;
}

double slow_time(int m, int f, const SubcarrierGrid& grid) {
    return f * grid.frame_duration() + m * grid.symbol_duration();
}

const std::array<cplx, kAlphabetSize>& transition_alphabet() {
    static const std::array<cplx, kAlphabetSize> points = [] {
        std::array<cplx, kAlphabetSize> p{};
        for (int q = 0; q < kAlphabetSize; ++q) p[q] = std::polar(1.0, kPi / 4 + q * kPi / 2);
        return p;
    }();
    return points;
}

cplx transition_value(int q) {
    if (q < 0 || q >= kAlphabetSize) throw ValidationError("transition index out of range");
    return transition_alphabet()[static_cast<std::size_t>(q)];
}

int nearest_transition(cplx z) {
    // Decision regions of the rotated alphabet are the four quadrants.
    double phase = std::arg(z);
    if (phase < 0) phase += 2 * kPi;
    int q = static_cast<int>(std::floor(phase / (kPi / 2)));
    return q >= kAlphabetSize ? 0 : q;
}

SymbolGrid encode_frame(std::span<const cplx> prs, const ToneGrid<TransitionIndex>& transitions) {
    const std::size_t tones = prs.size();
    if (transitions.symbols() > 0 && transitions.tones() != tones)
        throw ValidationError("transition grid tone count does not match PRS");
    for (const cplx& x : prs) {
        if (std::abs(std::abs(x) - 1.0) > 1e-9) throw ValidationError("PRS must be unit modulus");
    }
    const std::size_t symbols = transitions.symbols() + 1;

    SymbolGrid out;
    out.prs.assign(prs.begin(), prs.end());
    out.transitions = transitions.symbols() > 0 ? transitions : ToneGrid<TransitionIndex>(tones, 0);
    out.symbols = ToneGrid<cplx>(tones, symbols);
    std::copy(prs.begin(), prs.end(), out.symbols.symbol(0).begin());
    const auto& alphabet = transition_alphabet();
    for (std::size_t m = 1; m < symbols; ++m) {
        for (std::size_t k = 0; k < tones; ++k) {
            const TransitionIndex q = transitions(k, m - 1);
            if (q >= kAlphabetSize) throw ValidationError("transition index out of range");
            out.symbols(k, m) = out.symbols(k, m - 1) * alphabet[q];
        }
    }
    return out;
}

ToneGrid<TransitionIndex> decode_transitions(const ToneGrid<cplx>& symbols) {
    const std::size_t transitions = symbols.symbols() > 0 ? symbols.symbols() - 1 : 0;
    ToneGrid<TransitionIndex> out(symbols.tones(), transitions);
    for (std::size_t m = 1; m < symbols.symbols(); ++m) {
        for (std::size_t k = 0; k < symbols.tones(); ++k) {
            const cplx ratio = symbols(k, m) * std::conj(symbols(k, m - 1));
            out(k, m - 1) = static_cast<TransitionIndex>(nearest_transition(ratio));
        }
    }
    return out;
}

CVec random_prs(std::size_t tones, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, kAlphabetSize - 1);
    CVec prs(tones);
    for (auto& x : prs) x = transition_alphabet()[static_cast<std::size_t>(pick(rng))];
    return prs;
}

ToneGrid<TransitionIndex> random_transitions(std::size_t tones, std::size_t transitions,
                                             std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, kAlphabetSize - 1);
    ToneGrid<TransitionIndex> out(tones, transitions);
    for (auto& q : out.data()) q = static_cast<TransitionIndex>(pick(rng));
    return out;
}

}  // namespace dabsense

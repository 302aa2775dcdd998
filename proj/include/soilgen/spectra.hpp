#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "soilgen/common.hpp"

namespace soilgen {

// Canonical 1 nm grid: 400..2499 nm inclusive.
constexpr int kGridSize = 2100;
constexpr int kGridStart = 400;
constexpr int kGridEnd = 2499;
constexpr int kBandCount = 42;
constexpr int kBandWidth = 50;
constexpr int kCoarseSize = 525;
constexpr int kCoarseStep = 4;

/// Reflectance fractions on the canonical grid. The measured region is one
/// contiguous run whose first wavelength is divisible by 50 and whose last
/// wavelength + 1 is divisible by 50; everything outside is zero with
/// mask = false.
struct Spectrum {
    std::vector<double> values = std::vector<double>(kGridSize, 0.0);
    std::vector<uint8_t> mask = std::vector<uint8_t>(kGridSize, 0);
    std::string meta;

    static Spectrum full(std::vector<double> vals, std::string meta = {});

    int first_measured() const;  // grid index of the first measured slot
    int last_measured() const;   // grid index of the last measured slot
    int measured_count() const;
    bool fully_measured() const;

    void validate() const;  // throws on any invariant violation
};

/// 42 wavebands of 50 slots each; row-major flattening reproduces the grid.
struct WavebandTensor {
    std::vector<double> bands = std::vector<double>(kBandCount * kBandWidth, 0.0);
    std::array<uint8_t, kBandCount> band_mask{};
};

/// 525 values on the 4 nm grid starting at 400 nm.
struct CoarseSpectrum {
    std::vector<double> values = std::vector<double>(kCoarseSize, 0.0);
};

double absorbance_to_reflectance(double a);

/// Clips raw (wavelength, reflectance) samples to the canonical range,
/// interpolates to 1 nm, and snaps the endpoints to the 50 nm rule.
Spectrum trim_to_canonical(const std::vector<std::pair<double, double>>& raw);

WavebandTensor reshape_to_wavebands(const Spectrum& s);

/// Spectrum must be fully measured.
CoarseSpectrum downsample_4nm(const Spectrum& s);

/// Linear interpolation back to 1 nm; 2497-2499 nm extend the last segment.
Spectrum upsample_linear(const CoarseSpectrum& c);

/// Savitzky-Golay smoothing over the measured region. `window_nm` is the
/// window span in nm (even, e.g. 100 -> 101 samples); edges are mirror padded.
Spectrum savgol_smooth(const Spectrum& s, int window_nm, int order);

}  // namespace soilgen

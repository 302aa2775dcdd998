#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "soilgen/spectra.hpp"

namespace soilgen::radio {

/// One camera channel: ascending (wavelength nm, sensitivity >= 0) knots,
/// linearly interpolated between knots.
struct ResponseChannel {
    std::string name;
    std::vector<std::pair<double, double>> table;

    double lo() const { return table.front().first; }
    double hi() const { return table.back().first; }
    void validate() const;
};

struct CameraResponse {
    std::vector<ResponseChannel> channels;

    void validate() const;
    /// CSV with header `wavelength_nm,<channel>,...`, one row per knot.
    static CameraResponse from_csv(const std::filesystem::path& path);
};

/// Relative spectral flux of the light source; same table conventions.
struct SourceSpectrum {
    std::vector<std::pair<double, double>> table;

    double lo() const { return table.front().first; }
    double hi() const { return table.back().first; }
    void validate() const;
    static SourceSpectrum from_csv(const std::filesystem::path& path);
    static SourceSpectrum flat(double lo, double hi, double flux = 1.0);
};

struct Band {
    double lo = 0.0, hi = 0.0;
};

/// Numerator integral of the band equations: the integral of
/// rho * C * S over the band. All three factors are piecewise linear, so the
/// integrand is cubic between adjacent knots and a per-cell Simpson rule on
/// the union knot grid evaluates the integral exactly.
double band_integral(const Spectrum& rho, const ResponseChannel& c, const SourceSpectrum& s,
                     Band band);

/// Band-effective reflectivity: numerator over the integral of S alone (the
/// published form); `normalize_by_cs` divides by the integral of C*S instead.
double band_reflectivity(const Spectrum& rho, const ResponseChannel& c, const SourceSpectrum& s,
                         Band band, bool normalize_by_cs = false);

/// Same arithmetic with a transmissivity spectrum (soil patches use tau = 0).
double band_transmissivity(const Spectrum& tau, const ResponseChannel& c, const SourceSpectrum& s,
                           Band band, bool normalize_by_cs = false);

/// Axis-aligned patch rectangle in pixels; every scene pixel must belong to
/// exactly one patch.
struct ScenePatch {
    int x = 0, y = 0, w = 0, h = 0;
    Spectrum spectrum;
    int label = 0;
    double smc = -1.0;         // negative = not annotated
    std::string property_ref;  // free-form pointer into a property corpus
};

struct SceneLight {
    SourceSpectrum source;
    double zenith_deg = 0.0;
};

struct SceneCamera {
    CameraResponse response;
    int width = 0, height = 0;
    double exposure = 1.0;
};

struct SoilScene {
    std::vector<ScenePatch> patches;
    SceneLight light;
    SceneCamera camera;

    void validate() const;
};

/// Scene JSON loader; relative paths resolve against the scene file.
SoilScene load_scene(const std::filesystem::path& path);

/// Row-major [y][x][channel] double raster.
struct FloatImage {
    int width = 0, height = 0, channels = 0;
    std::vector<double> data;

    double& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
};

struct U8Image {
    int width = 0, height = 0, channels = 0;
    std::vector<uint8_t> data;
};

struct LabelMap {
    int width = 0, height = 0;
    std::vector<int> labels;  // patch label per pixel

    int at(int y, int x) const { return labels[static_cast<size_t>(y) * width + x]; }
};

struct RenderResult {
    FloatImage raster;    // per-channel band reflectivity * cos(zenith) * exposure
    U8Image tonemapped;   // clamp [0,1] then scale to 255
    LabelMap labels;
    nlohmann::json legend;  // per patch: label, smc, property reference
};

RenderResult render_scene(const SoilScene& scene);

/// Per-channel arithmetic mean over the patch's pixels of an 8-bit raster,
/// scaled from 0-255 to 0-1.
std::vector<double> mean_patch_color(const U8Image& img, const LabelMap& labels, int patch_label);

/// Raw float image: magic "SGIMG001", u64-le JSON header length, JSON header
/// (width/height/channels), then row-major little-endian f32 samples.
void write_float_image(const std::filesystem::path& path, const FloatImage& img);
FloatImage read_float_image(const std::filesystem::path& path);

void write_png_rgb8(const std::filesystem::path& path, const U8Image& img);
U8Image read_png_rgb8(const std::filesystem::path& path);

/// Indexed PNG of the label map (palette position = rank of the label id)
/// plus a JSON legend mapping palette indices back to labels.
void write_png_labels(const std::filesystem::path& png_path, const LabelMap& labels,
                      const nlohmann::json& legend, const std::filesystem::path& legend_path);
LabelMap read_png_labels(const std::filesystem::path& png_path,
                         const std::filesystem::path& legend_path);

/// Two-column text table (wavelength nm, reflectance) over 400-2499; the
/// `rows_2101` variant appends a 2500 nm row extrapolated from the last
/// segment for consumers that expect 2101 rows.
void export_prosail_soil(const Spectrum& s, const std::filesystem::path& path,
                         bool rows_2101 = false);

}  // namespace soilgen::radio

#include "soilgen/radiometry.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <initializer_list>

#include "io_util.hpp"
#include "soilgen/io.hpp"

namespace soilgen::radio {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace detail;

namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
constexpr char kImageMagic[8] = {'S', 'G', 'I', 'M', 'G', '0', '0', '1'};

using Table = std::vector<std::pair<double, double>>;

void validate_table(const Table& t, const char* what) {
    SG_CHECK(t.size() >= 2, value_error, what, " needs at least two knots");
    for (size_t i = 0; i < t.size(); ++i) {
        SG_CHECK(std::isfinite(t[i].first) && std::isfinite(t[i].second), value_error, what,
                 " has a non-finite entry at knot ", i);
        SG_CHECK(t[i].second >= 0.0, value_error, what, " is negative at ", t[i].first, " nm");
        if (i > 0)
            SG_CHECK(t[i].first > t[i - 1].first, value_error, what,
                     " wavelengths must ascend (knot ", i, ")");
    }
}

/// Linear interpolation; x must lie within the knot span.
double table_at(const Table& t, double x) {
    auto it = std::upper_bound(t.begin(), t.end(), x,
                               [](double v, const std::pair<double, double>& p) {
                                   return v < p.first;
                               });
    if (it == t.begin()) return t.front().second;
    if (it == t.end()) return t.back().second;
    const auto& [x1, y1] = *it;
    const auto& [x0, y0] = *(it - 1);
    return y0 + (x - x0) / (x1 - x0) * (y1 - y0);
}

/// Spectrum value at a fractional wavelength inside the measured run.
double rho_at(const Spectrum& s, double x) {
    double pos = x - kGridStart;
    double fl = std::floor(pos);
    auto i = static_cast<size_t>(fl);
    double u = pos - fl;
    if (u == 0.0 || i + 1 >= static_cast<size_t>(kGridSize)) return s.values[i];
    return s.values[i] + u * (s.values[i + 1] - s.values[i]);
}

void check_band(Band band) {
    SG_CHECK(std::isfinite(band.lo) && std::isfinite(band.hi) && band.lo < band.hi, value_error,
             "malformed band [", band.lo, ", ", band.hi, "]");
}

/// Band endpoints, every table knot strictly inside the band, and (optionally)
/// the integer-nm spectrum grid points, sorted and deduplicated. Between
/// adjacent knots every factor of the integrand is a plain line.
std::vector<double> band_knots(Band band, std::initializer_list<const Table*> tables,
                               bool with_grid) {
    std::vector<double> k;
    k.push_back(band.lo);
    if (with_grid)
        for (double w = std::floor(band.lo) + 1.0; w < band.hi; w += 1.0) k.push_back(w);
    for (const Table* t : tables)
        for (const auto& [x, y] : *t)
            if (x > band.lo && x < band.hi) k.push_back(x);
    k.push_back(band.hi);
    std::sort(k.begin(), k.end());
    k.erase(std::unique(k.begin(), k.end()), k.end());
    return k;
}

/// Per-cell Simpson rule. The integrand is a product of at most three linear
/// factors, i.e. a cubic on every cell, so this evaluates the integral
/// exactly (up to rounding).
template <typename F>
double simpson_cells(const std::vector<double>& knots, F f) {
    long double acc = 0.0L;
    double fa = f(knots[0]);
    for (size_t i = 1; i < knots.size(); ++i) {
        double a = knots[i - 1], b = knots[i];
        double fm = f(0.5 * (a + b));
        double fb = f(b);
        acc += static_cast<long double>((b - a) / 6.0) *
               static_cast<long double>(fa + 4.0 * fm + fb);
        fa = fb;
    }
    return static_cast<double>(acc);
}

void check_coverage(const Spectrum& rho, const ResponseChannel& c, const SourceSpectrum& s,
                    Band band) {
    double rlo = kGridStart + rho.first_measured();
    double rhi = kGridStart + rho.last_measured();
    SG_CHECK(band.lo >= rlo && band.hi <= rhi, precondition_error, "band [", band.lo, ", ",
             band.hi, "] outside spectrum coverage [", rlo, ", ", rhi, "]");
    SG_CHECK(band.lo >= c.lo() && band.hi <= c.hi(), precondition_error, "band [", band.lo, ", ",
             band.hi, "] outside channel coverage [", c.lo(), ", ", c.hi(), "]");
    SG_CHECK(band.lo >= s.lo() && band.hi <= s.hi(), precondition_error, "band [", band.lo, ", ",
             band.hi, "] outside source coverage [", s.lo(), ", ", s.hi(), "]");
}

}  // namespace

void ResponseChannel::validate() const {
    SG_CHECK(!name.empty(), value_error, "channel without a name");
    validate_table(table, name.c_str());
}

void CameraResponse::validate() const {
    SG_CHECK(!channels.empty(), value_error, "camera response has no channels");
    for (size_t i = 0; i < channels.size(); ++i) {
        channels[i].validate();
        for (size_t j = 0; j < i; ++j)
            SG_CHECK(channels[j].name != channels[i].name, value_error,
                     "duplicate channel name '", channels[i].name, "'");
    }
}

void SourceSpectrum::validate() const { validate_table(table, "source spectrum"); }

namespace {

/// Shared reader for the `wavelength_nm,<value...>` table CSVs.
std::pair<std::vector<std::string>, std::vector<Table>> read_table_csv(const fs::path& path) {
    auto f = open_in(path);
    std::string line;
    SG_CHECK(static_cast<bool>(std::getline(f, line)), io_error, path.string(), ": empty file");
    auto header = split_line(line);
    SG_CHECK(header.size() >= 2 && header[0] == "wavelength_nm", io_error, path.string(),
             ": header must start with 'wavelength_nm' and name at least one column");

    std::vector<std::string> names(header.begin() + 1, header.end());
    std::vector<Table> tables(names.size());
    size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_line(line);
        SG_CHECK(fields.size() == header.size(), io_error, path.string(), ":", line_no,
                 ": expected ", header.size(), " fields, got ", fields.size());
        double wl = parse_number(fields[0], path, line_no);
        for (size_t c = 0; c < tables.size(); ++c)
            tables[c].emplace_back(wl, parse_number(fields[c + 1], path, line_no));
    }
    return {std::move(names), std::move(tables)};
}

}  // namespace

CameraResponse CameraResponse::from_csv(const fs::path& path) {
    auto [names, tables] = read_table_csv(path);
    CameraResponse r;
    r.channels.resize(names.size());
    for (size_t c = 0; c < names.size(); ++c) {
        r.channels[c].name = std::move(names[c]);
        r.channels[c].table = std::move(tables[c]);
    }
    try {
        r.validate();
    } catch (const error& e) {
        throw io_error(detail::cat(path.string(), ": ", e.what()));
    }
    return r;
}

SourceSpectrum SourceSpectrum::from_csv(const fs::path& path) {
    auto [names, tables] = read_table_csv(path);
    SG_CHECK(tables.size() == 1, io_error, path.string(),
             ": a source spectrum has exactly one value column, got ", tables.size());
    SourceSpectrum s;
    s.table = std::move(tables[0]);
    try {
        s.validate();
    } catch (const error& e) {
        throw io_error(detail::cat(path.string(), ": ", e.what()));
    }
    return s;
}

SourceSpectrum SourceSpectrum::flat(double lo, double hi, double flux) {
    SG_CHECK(std::isfinite(lo) && std::isfinite(hi) && lo < hi, value_error,
             "flat source needs lo < hi");
    SG_CHECK(std::isfinite(flux) && flux >= 0.0, value_error, "flat source flux must be >= 0");
    return SourceSpectrum{{{lo, flux}, {hi, flux}}};
}

double band_integral(const Spectrum& rho, const ResponseChannel& c, const SourceSpectrum& s,
                     Band band) {
    rho.validate();
    c.validate();
    s.validate();
    check_band(band);
    check_coverage(rho, c, s, band);
    auto knots = band_knots(band, {&c.table, &s.table}, /*with_grid=*/true);
    return simpson_cells(knots, [&](double x) {
        return rho_at(rho, x) * table_at(c.table, x) * table_at(s.table, x);
    });
}

double band_reflectivity(const Spectrum& rho, const ResponseChannel& c, const SourceSpectrum& s,
                         Band band, bool normalize_by_cs) {
    double num = band_integral(rho, c, s, band);
    double den;
    if (normalize_by_cs) {
        auto knots = band_knots(band, {&c.table, &s.table}, /*with_grid=*/false);
        den = simpson_cells(knots,
                            [&](double x) { return table_at(c.table, x) * table_at(s.table, x); });
    } else {
        auto knots = band_knots(band, {&s.table}, /*with_grid=*/false);
        den = simpson_cells(knots, [&](double x) { return table_at(s.table, x); });
    }
    SG_CHECK(den > 0.0, value_error, "no source energy in band [", band.lo, ", ", band.hi, "]");
    return num / den;
}

double band_transmissivity(const Spectrum& tau, const ResponseChannel& c, const SourceSpectrum& s,
                           Band band, bool normalize_by_cs) {
    return band_reflectivity(tau, c, s, band, normalize_by_cs);
}

void SoilScene::validate() const {
    SG_CHECK(!patches.empty(), value_error, "scene has no patches");
    camera.response.validate();
    light.source.validate();
    SG_CHECK(camera.width >= 1 && camera.height >= 1, value_error, "camera raster must be >= 1x1");
    SG_CHECK(std::isfinite(camera.exposure) && camera.exposure > 0.0, value_error,
             "exposure must be positive");
    SG_CHECK(std::isfinite(light.zenith_deg) && light.zenith_deg >= 0.0 &&
                 light.zenith_deg <= 90.0,
             value_error, "zenith angle must lie in [0, 90] degrees");

    std::vector<uint8_t> covered(static_cast<size_t>(camera.width) * camera.height, 0);
    for (size_t i = 0; i < patches.size(); ++i) {
        const ScenePatch& p = patches[i];
        p.spectrum.validate();
        SG_CHECK(p.label >= 0, value_error, "patch ", i, " has a negative label");
        for (size_t j = 0; j < i; ++j)
            SG_CHECK(patches[j].label != p.label, value_error, "duplicate patch label ", p.label);
        SG_CHECK(p.w >= 1 && p.h >= 1 && p.x >= 0 && p.y >= 0 && p.x + p.w <= camera.width &&
                     p.y + p.h <= camera.height,
                 value_error, "patch ", i, " rect [", p.x, ",", p.y, ",", p.w, ",", p.h,
                 "] leaves the ", camera.width, "x", camera.height, " raster");
        for (int y = p.y; y < p.y + p.h; ++y)
            for (int x = p.x; x < p.x + p.w; ++x) {
                uint8_t& c = covered[static_cast<size_t>(y) * camera.width + x];
                SG_CHECK(c == 0, value_error, "patches overlap at pixel (", x, ",", y, ")");
                c = 1;
            }
    }
    for (int y = 0; y < camera.height; ++y)
        for (int x = 0; x < camera.width; ++x)
            SG_CHECK(covered[static_cast<size_t>(y) * camera.width + x], value_error,
                     "pixel (", x, ",", y, ") belongs to no patch");
}

SoilScene load_scene(const fs::path& path) {
    json j = read_json_file(path);
    SG_CHECK(j.is_object() && j.contains("patches") && j.contains("camera"), io_error,
             path.string(), ": scene needs 'patches' and 'camera'");
    const fs::path base = path.parent_path();
    SoilScene scene;

    const json& cam = j.at("camera");
    SG_CHECK(cam.is_object() && cam.contains("response_csv") && cam.contains("width") &&
                 cam.contains("height"),
             io_error, path.string(), ": camera needs 'response_csv', 'width', 'height'");
    scene.camera.response = CameraResponse::from_csv(base / cam.at("response_csv").get<std::string>());
    scene.camera.width = cam.at("width").get<int>();
    scene.camera.height = cam.at("height").get<int>();
    scene.camera.exposure = cam.value("exposure", 1.0);

    if (j.contains("light")) {
        const json& l = j.at("light");
        SG_CHECK(l.is_object(), io_error, path.string(), ": 'light' must be an object");
        scene.light.zenith_deg = l.value("zenith_deg", 0.0);
        if (l.contains("source_csv"))
            scene.light.source = SourceSpectrum::from_csv(base / l.at("source_csv").get<std::string>());
        else
            scene.light.source = SourceSpectrum::flat(kGridStart, kGridEnd);
    } else {
        scene.light.source = SourceSpectrum::flat(kGridStart, kGridEnd);
    }

    SG_CHECK(j.at("patches").is_array(), io_error, path.string(), ": 'patches' must be a list");
    for (const json& pj : j.at("patches")) {
        SG_CHECK(pj.is_object() && pj.contains("rect") && pj.contains("label"), io_error,
                 path.string(), ": each patch needs 'rect' and 'label'");
        const json& rect = pj.at("rect");
        SG_CHECK(rect.is_array() && rect.size() == 4, io_error, path.string(),
                 ": patch rect must be [x, y, w, h]");
        ScenePatch p;
        p.x = rect[0].get<int>();
        p.y = rect[1].get<int>();
        p.w = rect[2].get<int>();
        p.h = rect[3].get<int>();
        p.label = pj.at("label").get<int>();
        p.smc = pj.value("smc", -1.0);
        p.property_ref = pj.value("property", "");

        if (pj.contains("values")) {
            auto vals = pj.at("values").get<std::vector<double>>();
            SG_CHECK(vals.size() == static_cast<size_t>(kGridSize), io_error, path.string(),
                     ": patch 'values' needs ", kGridSize, " entries, got ", vals.size());
            p.spectrum = Spectrum::full(std::move(vals));
        } else if (pj.contains("constant")) {
            p.spectrum = Spectrum::full(
                std::vector<double>(kGridSize, pj.at("constant").get<double>()));
        } else if (pj.contains("spectrum_csv")) {
            fs::path csv = base / pj.at("spectrum_csv").get<std::string>();
            auto cols = io::read_spectra_csv(csv);
            size_t pick = 0;
            if (pj.contains("column")) {
                std::string id = pj.at("column").get<std::string>();
                while (pick < cols.size() && cols[pick].id != id) ++pick;
                SG_CHECK(pick < cols.size(), io_error, csv.string(), ": no column '", id, "'");
            } else {
                SG_CHECK(cols.size() == 1, io_error, csv.string(),
                         ": several columns; pick one with 'column'");
            }
            p.spectrum = trim_to_canonical(cols[pick].samples);
            p.spectrum.meta = cols[pick].id;
        } else {
            throw io_error(detail::cat(path.string(),
                                       ": patch needs 'values', 'constant', or 'spectrum_csv'"));
        }
        scene.patches.push_back(std::move(p));
    }

    scene.validate();
    return scene;
}

RenderResult render_scene(const SoilScene& scene) {
    scene.validate();
    const int W = scene.camera.width, H = scene.camera.height;
    const int C = static_cast<int>(scene.camera.response.channels.size());
    const double factor = std::cos(scene.light.zenith_deg * kDegToRad) * scene.camera.exposure;

    RenderResult out;
    out.raster = {W, H, C, std::vector<double>(static_cast<size_t>(W) * H * C, 0.0)};
    out.labels = {W, H, std::vector<int>(static_cast<size_t>(W) * H, 0)};
    out.legend = json::array();

    std::vector<double> px(static_cast<size_t>(C));
    for (const ScenePatch& p : scene.patches) {
        for (int c = 0; c < C; ++c) {
            const ResponseChannel& ch = scene.camera.response.channels[static_cast<size_t>(c)];
            double rho_o = band_reflectivity(p.spectrum, ch, scene.light.source,
                                             Band{ch.lo(), ch.hi()});
            px[static_cast<size_t>(c)] = rho_o * factor;
        }
        for (int y = p.y; y < p.y + p.h; ++y)
            for (int x = p.x; x < p.x + p.w; ++x) {
                for (int c = 0; c < C; ++c)
                    out.raster.at(y, x, c) = px[static_cast<size_t>(c)];
                out.labels.labels[static_cast<size_t>(y) * W + x] = p.label;
            }
        json entry = {{"label", p.label}};
        if (p.smc >= 0.0) entry["smc"] = p.smc;
        if (!p.property_ref.empty()) entry["property"] = p.property_ref;
        out.legend.push_back(std::move(entry));
    }

    out.tonemapped = {W, H, C, std::vector<uint8_t>(out.raster.data.size())};
    for (size_t i = 0; i < out.raster.data.size(); ++i)
        out.tonemapped.data[i] =
            static_cast<uint8_t>(std::lround(std::clamp(out.raster.data[i], 0.0, 1.0) * 255.0));
    return out;
}

std::vector<double> mean_patch_color(const U8Image& img, const LabelMap& labels,
                                     int patch_label) {
    SG_CHECK(img.width == labels.width && img.height == labels.height, shape_error,
             "image is ", img.width, "x", img.height, " but label map is ", labels.width, "x",
             labels.height);
    SG_CHECK(img.channels >= 1 &&
                 img.data.size() ==
                     static_cast<size_t>(img.width) * img.height * img.channels,
             shape_error, "pixel buffer does not match its dimensions");

    std::vector<double> sum(static_cast<size_t>(img.channels), 0.0);
    size_t n = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            if (labels.at(y, x) != patch_label) continue;
            ++n;
            const uint8_t* p =
                img.data.data() + (static_cast<size_t>(y) * img.width + x) * img.channels;
            for (int c = 0; c < img.channels; ++c) sum[static_cast<size_t>(c)] += p[c];
        }
    SG_CHECK(n > 0, precondition_error, "patch ", patch_label, " absent from the label map");
    for (double& v : sum) v /= static_cast<double>(n) * 255.0;
    return sum;
}

void write_float_image(const fs::path& path, const FloatImage& img) {
    SG_CHECK(img.width >= 1 && img.height >= 1 && img.channels >= 1, value_error,
             "image dimensions must be >= 1");
    SG_CHECK(img.data.size() == static_cast<size_t>(img.width) * img.height * img.channels,
             shape_error, "pixel buffer does not match its dimensions");
    json header = {{"width", img.width},
                   {"height", img.height},
                   {"channels", img.channels},
                   {"dtype", "f32le"}};
    std::string hs = header.dump();

    auto f = open_out(path, std::ios::binary);
    f.write(kImageMagic, sizeof kImageMagic);
    uint64_t len = hs.size();
    f.write(reinterpret_cast<const char*>(&len), sizeof len);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    std::vector<float> buf(img.data.size());
    for (size_t i = 0; i < img.data.size(); ++i) buf[i] = static_cast<float>(img.data[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    SG_CHECK(f.good(), io_error, "write failed for ", path.string());
}

FloatImage read_float_image(const fs::path& path) {
    auto f = open_in(path, std::ios::binary);
    char magic[8];
    f.read(magic, sizeof magic);
    SG_CHECK(f.gcount() == sizeof magic && std::memcmp(magic, kImageMagic, 8) == 0, io_error,
             path.string(), ": not a float image");
    uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof len);
    SG_CHECK(f.good() && len > 0 && len < (1u << 20), io_error, path.string(),
             ": corrupt image header length");
    std::string hs(len, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(len));
    SG_CHECK(f.good(), io_error, path.string(), ": truncated image header");
    json header = json::parse(hs, nullptr, false);
    SG_CHECK(!header.is_discarded() && header.contains("width") && header.contains("height") &&
                 header.contains("channels"),
             io_error, path.string(), ": corrupt image header");
    SG_CHECK(header.value("dtype", "f32le") == "f32le", io_error, path.string(),
             ": unsupported dtype '", header.value("dtype", ""), "'");

    FloatImage img;
    img.width = header.at("width").get<int>();
    img.height = header.at("height").get<int>();
    img.channels = header.at("channels").get<int>();
    SG_CHECK(img.width >= 1 && img.height >= 1 && img.channels >= 1, io_error, path.string(),
             ": bad image dimensions");
    size_t n = static_cast<size_t>(img.width) * img.height * img.channels;
    std::vector<float> buf(n);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
    SG_CHECK(f.gcount() == static_cast<std::streamsize>(n * sizeof(float)), io_error,
             path.string(), ": truncated image payload");
    img.data.resize(n);
    for (size_t i = 0; i < n; ++i) img.data[i] = static_cast<double>(buf[i]);
    return img;
}

namespace {

struct PngWriteGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngWriteGuard() {
        if (png) png_destroy_write_struct(&png, &info);
        if (fp) std::fclose(fp);
    }
};

struct PngReadGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngReadGuard() {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        if (fp) std::fclose(fp);
    }
};

void close_checked(FILE*& fp, const fs::path& path) {
    int rc = std::fclose(fp);
    fp = nullptr;
    SG_CHECK(rc == 0, io_error, "write failed for ", path.string());
}

/// Deterministic, well-separated palette colors (golden-angle hue walk).
std::array<uint8_t, 3> palette_color(size_t i) {
    double h = std::fmod(static_cast<double>(i) * 137.50776405003785, 360.0) / 60.0;
    double s = 0.62, v = 0.93;
    int k = static_cast<int>(h) % 6;
    double f = h - std::floor(h);
    double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
    double r, g, b;
    switch (k) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
    auto u8 = [](double x) { return static_cast<uint8_t>(std::lround(x * 255.0)); };
    return {u8(r), u8(g), u8(b)};
}

}  // namespace

void write_png_rgb8(const fs::path& path, const U8Image& img) {
    SG_CHECK(img.width >= 1 && img.height >= 1, value_error, "image dimensions must be >= 1");
    SG_CHECK(img.channels == 3, value_error, "rgb png needs 3 channels, got ", img.channels);
    SG_CHECK(img.data.size() == static_cast<size_t>(img.width) * img.height * 3, shape_error,
             "pixel buffer does not match its dimensions");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());

    PngWriteGuard g;
    std::vector<png_bytep> rows(static_cast<size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<size_t>(y)] =
            const_cast<png_bytep>(img.data.data() + static_cast<size_t>(y) * img.width * 3);

    g.fp = std::fopen(path.c_str(), "wb");
    SG_CHECK(g.fp, io_error, "cannot open ", path.string(), " for writing");
    g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    g.info = g.png ? png_create_info_struct(g.png) : nullptr;
    SG_CHECK(g.png && g.info, io_error, "libpng initialization failed");
    if (setjmp(png_jmpbuf(g.png))) throw io_error("png write failed for " + path.string());

    png_init_io(g.png, g.fp);
    png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(g.png, g.info);
    png_write_image(g.png, rows.data());
    png_write_end(g.png, nullptr);
    close_checked(g.fp, path);
}

U8Image read_png_rgb8(const fs::path& path) {
    PngReadGuard g;
    U8Image img;
    std::vector<png_bytep> rows;

    g.fp = std::fopen(path.c_str(), "rb");
    SG_CHECK(g.fp, io_error, "cannot open ", path.string(), " for reading");
    g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    g.info = g.png ? png_create_info_struct(g.png) : nullptr;
    SG_CHECK(g.png && g.info, io_error, "libpng initialization failed");
    if (setjmp(png_jmpbuf(g.png))) throw io_error(path.string() + ": not a readable png");

    png_init_io(g.png, g.fp);
    png_read_info(g.png, g.info);
    png_set_expand(g.png);
    if (png_get_bit_depth(g.png, g.info) == 16) png_set_strip_16(g.png);
    png_byte color = png_get_color_type(g.png, g.info);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(g.png);
    png_set_strip_alpha(g.png);
    png_read_update_info(g.png, g.info);

    img.width = static_cast<int>(png_get_image_width(g.png, g.info));
    img.height = static_cast<int>(png_get_image_height(g.png, g.info));
    img.channels = png_get_channels(g.png, g.info);
    SG_CHECK(img.channels == 3 && png_get_bit_depth(g.png, g.info) == 8, io_error, path.string(),
             ": not an 8-bit rgb image");
    img.data.resize(static_cast<size_t>(img.width) * img.height * 3);
    rows.resize(static_cast<size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<size_t>(y)] = img.data.data() + static_cast<size_t>(y) * img.width * 3;
    png_read_image(g.png, rows.data());
    png_read_end(g.png, nullptr);
    return img;
}

void write_png_labels(const fs::path& png_path, const LabelMap& labels, const json& legend,
                      const fs::path& legend_path) {
    SG_CHECK(labels.width >= 1 && labels.height >= 1, value_error,
             "label map dimensions must be >= 1");
    SG_CHECK(labels.labels.size() == static_cast<size_t>(labels.width) * labels.height,
             shape_error, "label buffer does not match its dimensions");

    std::vector<int> ids(labels.labels);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    SG_CHECK(ids.size() <= 256, value_error, "indexed png holds at most 256 labels, got ",
             ids.size());

    std::vector<uint8_t> indices(labels.labels.size());
    for (size_t i = 0; i < labels.labels.size(); ++i) {
        auto it = std::lower_bound(ids.begin(), ids.end(), labels.labels[i]);
        indices[i] = static_cast<uint8_t>(it - ids.begin());
    }

    json meta = {{"index_to_label", ids}, {"patches", legend}};
    auto lf = open_out(legend_path);
    lf << meta.dump(2) << '\n';
    SG_CHECK(lf.good(), io_error, "write failed for ", legend_path.string());

    if (png_path.has_parent_path()) fs::create_directories(png_path.parent_path());
    PngWriteGuard g;
    std::vector<png_bytep> rows(static_cast<size_t>(labels.height));
    for (int y = 0; y < labels.height; ++y)
        rows[static_cast<size_t>(y)] = indices.data() + static_cast<size_t>(y) * labels.width;
    std::vector<png_color> palette(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) {
        auto [r, gg, b] = palette_color(i);
        palette[i] = {r, gg, b};
    }

    g.fp = std::fopen(png_path.c_str(), "wb");
    SG_CHECK(g.fp, io_error, "cannot open ", png_path.string(), " for writing");
    g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    g.info = g.png ? png_create_info_struct(g.png) : nullptr;
    SG_CHECK(g.png && g.info, io_error, "libpng initialization failed");
    if (setjmp(png_jmpbuf(g.png))) throw io_error("png write failed for " + png_path.string());

    png_init_io(g.png, g.fp);
    png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(labels.width),
                 static_cast<png_uint_32>(labels.height), 8, PNG_COLOR_TYPE_PALETTE,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_PLTE(g.png, g.info, palette.data(), static_cast<int>(palette.size()));
    png_write_info(g.png, g.info);
    png_write_image(g.png, rows.data());
    png_write_end(g.png, nullptr);
    close_checked(g.fp, png_path);
}

LabelMap read_png_labels(const fs::path& png_path, const fs::path& legend_path) {
    json meta = read_json_file(legend_path);
    SG_CHECK(meta.is_object() && meta.contains("index_to_label"), io_error, legend_path.string(),
             ": legend needs 'index_to_label'");
    auto ids = meta.at("index_to_label").get<std::vector<int>>();

    PngReadGuard g;
    LabelMap lm;
    std::vector<uint8_t> indices;
    std::vector<png_bytep> rows;

    g.fp = std::fopen(png_path.c_str(), "rb");
    SG_CHECK(g.fp, io_error, "cannot open ", png_path.string(), " for reading");
    g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    g.info = g.png ? png_create_info_struct(g.png) : nullptr;
    SG_CHECK(g.png && g.info, io_error, "libpng initialization failed");
    if (setjmp(png_jmpbuf(g.png))) throw io_error(png_path.string() + ": not a readable png");

    png_init_io(g.png, g.fp);
    png_read_info(g.png, g.info);
    SG_CHECK(png_get_color_type(g.png, g.info) == PNG_COLOR_TYPE_PALETTE, io_error,
             png_path.string(), ": not an indexed image");
    if (png_get_bit_depth(g.png, g.info) < 8) png_set_packing(g.png);
    png_read_update_info(g.png, g.info);

    lm.width = static_cast<int>(png_get_image_width(g.png, g.info));
    lm.height = static_cast<int>(png_get_image_height(g.png, g.info));
    indices.resize(static_cast<size_t>(lm.width) * lm.height);
    rows.resize(static_cast<size_t>(lm.height));
    for (int y = 0; y < lm.height; ++y)
        rows[static_cast<size_t>(y)] = indices.data() + static_cast<size_t>(y) * lm.width;
    png_read_image(g.png, rows.data());
    png_read_end(g.png, nullptr);

    lm.labels.resize(indices.size());
    for (size_t i = 0; i < indices.size(); ++i) {
        SG_CHECK(indices[i] < ids.size(), io_error, png_path.string(), ": palette index ",
                 static_cast<int>(indices[i]), " missing from the legend");
        lm.labels[i] = ids[indices[i]];
    }
    return lm;
}

void export_prosail_soil(const Spectrum& s, const fs::path& path, bool rows_2101) {
    s.validate();
    SG_CHECK(s.fully_measured(), precondition_error,
             "prosail export needs a full-range spectrum");
    auto f = open_out(path);
    for (int i = 0; i < kGridSize; ++i)
        f << (kGridStart + i) << ' ' << format_value(s.values[static_cast<size_t>(i)]) << '\n';
    if (rows_2101) {
        // One step past the grid, linearly extended from the last segment.
        double v = 2.0 * s.values[kGridSize - 1] - s.values[kGridSize - 2];
        f << (kGridEnd + 1) << ' ' << format_value(std::clamp(v, 0.0, 1.5)) << '\n';
    }
    SG_CHECK(f.good(), io_error, "write failed for ", path.string());
}

}  // namespace soilgen::radio

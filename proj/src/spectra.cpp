#include "soilgen/spectra.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace soilgen {

Spectrum Spectrum::full(std::vector<double> vals, std::string meta) {
    SG_CHECK(vals.size() == kGridSize, shape_error, "Spectrum::full wants ", kGridSize,
             " values, got ", vals.size());
    Spectrum s;
    s.values = std::move(vals);
    s.mask.assign(kGridSize, 1);
    s.meta = std::move(meta);
    return s;
}

int Spectrum::first_measured() const {
    for (int i = 0; i < kGridSize; ++i)
        if (mask[static_cast<size_t>(i)]) return i;
    return -1;
}

int Spectrum::last_measured() const {
    for (int i = kGridSize - 1; i >= 0; --i)
        if (mask[static_cast<size_t>(i)]) return i;
    return -1;
}

int Spectrum::measured_count() const {
    int n = 0;
    for (uint8_t m : mask) n += (m != 0);
    return n;
}

bool Spectrum::fully_measured() const { return measured_count() == kGridSize; }

void Spectrum::validate() const {
    SG_CHECK(values.size() == kGridSize && mask.size() == kGridSize, shape_error,
             "Spectrum must hold exactly ", kGridSize, " slots");
    int lo = first_measured();
    SG_CHECK(lo >= 0, value_error, "Spectrum has no measured slots");
    int hi = last_measured();
    for (int i = lo; i <= hi; ++i)
        SG_CHECK(mask[static_cast<size_t>(i)], value_error,
                 "measured region must be contiguous; gap at ", kGridStart + i, " nm");
    SG_CHECK((kGridStart + lo) % 50 == 0, value_error, "first measured wavelength ",
             kGridStart + lo, " nm is not divisible by 50");
    SG_CHECK((kGridStart + hi + 1) % 50 == 0, value_error, "last measured wavelength ",
             kGridStart + hi, " nm + 1 is not divisible by 50");
    for (int i = 0; i < kGridSize; ++i) {
        SG_CHECK(std::isfinite(values[static_cast<size_t>(i)]), value_error,
                 "non-finite value at ", kGridStart + i, " nm");
        if (!mask[static_cast<size_t>(i)])
            SG_CHECK(values[static_cast<size_t>(i)] == 0.0, value_error,
                     "unmeasured slot at ", kGridStart + i, " nm must be exactly 0");
    }
}

double absorbance_to_reflectance(double a) {
    SG_CHECK(std::isfinite(a), value_error, "absorbance must be finite, got ", a);
    return 1.0 / std::pow(10.0, a);
}

Spectrum trim_to_canonical(const std::vector<std::pair<double, double>>& raw) {
    SG_CHECK(raw.size() >= 2, precondition_error, "need at least 2 raw samples, got ",
             raw.size());
    for (size_t i = 1; i < raw.size(); ++i)
        SG_CHECK(raw[i].first > raw[i - 1].first, precondition_error,
                 "wavelengths must be strictly increasing (", raw[i - 1].first, " then ",
                 raw[i].first, ")");

    double wl_lo = raw.front().first, wl_hi = raw.back().first;
    int first = static_cast<int>(std::ceil(std::max(wl_lo, static_cast<double>(kGridStart))));
    int last = static_cast<int>(std::floor(std::min(wl_hi, static_cast<double>(kGridEnd))));
    // snap to the 50 nm rule: raise the start, lower the end
    first = ((first + 49) / 50) * 50;
    last = ((last + 1) / 50) * 50 - 1;
    SG_CHECK(first <= last, value_error, "no measured overlap with the ", kGridStart, "-",
             kGridEnd, " nm grid after trimming");

    Spectrum s;
    size_t seg = 0;
    for (int wl = first; wl <= last; ++wl) {
        double x = static_cast<double>(wl);
        while (seg + 2 < raw.size() && raw[seg + 1].first <= x) ++seg;
        const auto& [x0, y0] = raw[seg];
        const auto& [x1, y1] = raw[seg + 1];
        double t = (x - x0) / (x1 - x0);
        int idx = wl - kGridStart;
        s.values[static_cast<size_t>(idx)] = (1.0 - t) * y0 + t * y1;  // exact at the knots
        s.mask[static_cast<size_t>(idx)] = 1;
    }
    return s;
}

WavebandTensor reshape_to_wavebands(const Spectrum& s) {
    s.validate();
    WavebandTensor wb;
    for (int b = 0; b < kBandCount; ++b) {
        bool all = true;
        for (int j = 0; j < kBandWidth; ++j)
            all = all && s.mask[static_cast<size_t>(b * kBandWidth + j)];
        wb.band_mask[static_cast<size_t>(b)] = all ? 1 : 0;
        if (all)
            for (int j = 0; j < kBandWidth; ++j)
                wb.bands[static_cast<size_t>(b * kBandWidth + j)] =
                    s.values[static_cast<size_t>(b * kBandWidth + j)];
    }
    return wb;
}

CoarseSpectrum downsample_4nm(const Spectrum& s) {
    s.validate();
    SG_CHECK(s.fully_measured(), precondition_error,
             "downsample_4nm needs a fully measured spectrum");
    CoarseSpectrum c;
    for (int k = 0; k < kCoarseSize; ++k)
        c.values[static_cast<size_t>(k)] = s.values[static_cast<size_t>(k * kCoarseStep)];
    return c;
}

Spectrum upsample_linear(const CoarseSpectrum& c) {
    SG_CHECK(c.values.size() == kCoarseSize, shape_error, "CoarseSpectrum must hold ",
             kCoarseSize, " values");
    Spectrum s;
    s.mask.assign(kGridSize, 1);
    const int last_knot = (kCoarseSize - 1) * kCoarseStep;  // grid index 2096
    for (int i = 0; i < kGridSize; ++i) {
        if (i <= last_knot) {
            int k = std::min(i / kCoarseStep, kCoarseSize - 2);
            double t = static_cast<double>(i - k * kCoarseStep) / kCoarseStep;
            s.values[static_cast<size_t>(i)] =
                c.values[static_cast<size_t>(k)] +
                t * (c.values[static_cast<size_t>(k + 1)] - c.values[static_cast<size_t>(k)]);
        } else {
            double slope = (c.values[kCoarseSize - 1] - c.values[kCoarseSize - 2]) / kCoarseStep;
            s.values[static_cast<size_t>(i)] =
                c.values[kCoarseSize - 1] + slope * (i - last_knot);
        }
    }
    return s;
}

Spectrum savgol_smooth(const Spectrum& s, int window_nm, int order) {
    s.validate();
    SG_CHECK(window_nm > 0 && window_nm % 2 == 0, value_error, "window span must be even so ",
             "the sample window (span+1) is odd and centered; got ", window_nm, " nm");
    int w = window_nm + 1;
    SG_CHECK(order >= 0 && order < w, value_error, "polynomial order ", order,
             " must be below window size ", w);
    int lo = s.first_measured(), hi = s.last_measured();
    int n = hi - lo + 1;
    SG_CHECK(w <= n, value_error, "window of ", w, " samples exceeds the measured region (", n,
             " samples)");

    // convolution weights: value at the window centre of the LSQ polynomial fit
    int m = (w - 1) / 2;
    Eigen::MatrixXd X(w, order + 1);
    for (int j = -m; j <= m; ++j) {
        double p = 1.0;
        for (int q = 0; q <= order; ++q) {
            X(j + m, q) = p;
            p *= static_cast<double>(j);
        }
    }
    Eigen::VectorXd e0 = Eigen::VectorXd::Zero(order + 1);
    e0(0) = 1.0;
    Eigen::VectorXd h = X * (X.transpose() * X).ldlt().solve(e0);

    Spectrum out = s;
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = -m; j <= m; ++j) {
            int p = i + j;
            if (p < 0) p = -p;                      // mirror, not repeating the edge
            else if (p >= n) p = 2 * (n - 1) - p;
            acc += h(j + m) * s.values[static_cast<size_t>(lo + p)];
        }
        out.values[static_cast<size_t>(lo + i)] = acc;
    }
    return out;
}

}  // namespace soilgen

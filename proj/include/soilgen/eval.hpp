#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "soilgen/diffusion.hpp"
#include "soilgen/io.hpp"
#include "soilgen/nn/rng.hpp"
#include "soilgen/padding.hpp"
#include "soilgen/spectra.hpp"

namespace soilgen::eval {

/// Root mean square error in percent reflectance: sqrt(mean((pred-truth)^2)) * 100.
/// Both spectra must be fully measured.
double rmse_pair(const Spectrum& pred, const Spectrum& truth);

/// Squared Pearson correlation across wavelengths, clamped to [0, 1].
/// Throws value_error when either argument has zero variance.
double r2_pair(const Spectrum& pred, const Spectrum& truth);

/// Same metrics restricted to the inclusive wavelength window [lo_nm, hi_nm];
/// both spectra must be measured over the whole window.
double rmse_range(const Spectrum& pred, const Spectrum& truth, int lo_nm, int hi_nm);
double r2_range(const Spectrum& pred, const Spectrum& truth, int lo_nm, int hi_nm);

struct EvalReport {
    std::string protocol;
    std::vector<std::string> ids;  // one entry per evaluated sample
    std::vector<double> rmse;      // percent reflectance
    std::vector<double> r2;
    double mean_rmse = 0.0;
    double mean_r2 = 0.0;
    size_t n = 0;        // evaluated samples
    size_t skipped = 0;  // samples excluded by the protocol
};

/// Assembles a report; means are the plain arithmetic average of the rows.
EvalReport make_report(std::string protocol, std::vector<std::string> ids,
                       std::vector<double> rmse, std::vector<double> r2, size_t skipped = 0);

nlohmann::json to_json(const EvalReport& report);
void write_report_json(const std::filesystem::path& path, const EvalReport& report);
/// CSV table: one row per sample plus a trailing "mean" row.
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);

/// Inclusive wavelength window in nm that the padding protocol zeroes out.
struct ZeroBand {
    int lo_nm = 0;
    int hi_nm = 0;
};

/// Zero-band reconstruction protocol: for each band, blanks the window, runs
/// the reconstruction, and scores it over the blanked window only. Samples
/// that do not cover the window (or would lose their whole measured run) are
/// skipped and counted. One report per band, in input order.
std::vector<EvalReport> run_padding_protocol(const io::Corpus& corpus,
                                             const pad::PaddingModel& model,
                                             const std::vector<ZeroBand>& bands);

/// Generic variant for stubbing the reconstruction; `reconstruct` receives the
/// blanked spectrum and must return one measured over the blanked window.
using Reconstructor = std::function<Spectrum(const Spectrum&)>;
std::vector<EvalReport> run_padding_protocol(const io::Corpus& corpus,
                                             const Reconstructor& reconstruct,
                                             const std::vector<ZeroBand>& bands);

struct AblationSpec {
    enum class Mode { all, drop_manufacturer, drop_random_k, subset };
    Mode mode = Mode::all;
    int k = 1;                      // drop_random_k: properties to drop (1 or 2)
    std::vector<std::string> keep;  // subset: property names to retain
    uint64_t seed = 0;              // rng stream for drop_random_k
    int n_seeds = 10;               // ensemble size per sample
    uint64_t base_seed = 1;
};

/// Lower-cased property name of a "property: value unit" sentence (text before
/// the first colon); the whole sentence when no colon is present.
std::string property_name(const std::string& sentence);

/// Applies the ablation rule to one sample's sentences. Returns false when the
/// sample must be skipped (a named property is absent in subset mode).
/// drop_random_k keeps the sample intact rather than reduce it below one
/// sentence.
bool select_sentences(const std::vector<std::string>& sentences, const AblationSpec& spec,
                      nn::Rng& rng, std::vector<std::string>& out);

/// Conditional-generation ablation: per sample, filters the sentences per
/// `spec`, generates the seed-ensemble mean, and scores it against the
/// measured spectrum. Partially measured truth is padded with `padder` when
/// given, otherwise scored over its measured run. Samples whose sentence set
/// filters to empty are skipped and counted.
EvalReport run_ablation_protocol(const io::Corpus& corpus, const sogm::SogmModel& model,
                                 const AblationSpec& spec,
                                 const pad::PaddingModel* padder = nullptr);

/// Synthetic corpus: reflectance = base + slope * u - depth * gauss(1400, 60)
/// with u the normalized grid position, all three controls exposed as
/// "property: value" sentences built from the same (rounded) numbers the
/// curves use. Ground-truth parameters land in corpus.truth.
struct ToyCorpusSpec {
    size_t count = 100;
    uint64_t seed = 0;
    double noise_std = 0.0;
    bool manufacturer = false;  // add an Alpha/Beta sentence; Beta lifts base by 0.015
    bool wet = false;           // attach a wet counterpart per sample
};

io::Corpus make_toy_corpus(const ToyCorpusSpec& spec);

}  // namespace soilgen::eval

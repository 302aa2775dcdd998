#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "soilgen/spectra.hpp"

namespace soilgen::io {

/// One column of a spectra CSV in source units, before standardization.
struct RawColumn {
    std::string id;
    std::vector<std::pair<double, double>> samples;  // (wavelength nm, value)
};

/// Header `wavelength_nm,<id>,...`; one row per wavelength; blank = missing.
std::vector<RawColumn> read_spectra_csv(const std::filesystem::path& path);

/// Writes canonical spectra on the 1 nm grid, blanks at unmeasured slots.
void write_spectra_csv(const std::filesystem::path& path, const std::vector<std::string>& ids,
                       const std::vector<Spectrum>& spectra);

/// Binary cache: magic, JSON header (count, ids, measured runs), then
/// row-major little-endian float32 N x 2100.
void write_spectra_cache(const std::filesystem::path& path, const std::vector<std::string>& ids,
                         const std::vector<Spectrum>& spectra);
std::pair<std::vector<std::string>, std::vector<Spectrum>> read_spectra_cache(
    const std::filesystem::path& path);

struct PropertyRecord {
    std::string id;
    std::vector<std::string> sentences;
};

std::vector<PropertyRecord> read_properties_json(const std::filesystem::path& path);
void write_properties_json(const std::filesystem::path& path,
                           const std::vector<PropertyRecord>& records);

/// A loaded corpus: spectra standardized to canonical reflectance, property
/// sentences aligned by sample id. Wet data and generator truth are optional.
struct Corpus {
    std::vector<std::string> ids;
    std::vector<Spectrum> spectra;
    std::vector<std::vector<std::string>> sentences;

    std::vector<Spectrum> wet_spectra;  // empty, or aligned with ids
    std::vector<double> smc;            // percent, aligned with wet_spectra

    nlohmann::json truth;  // generator parameters when synthetic

    bool has_wet() const { return !wet_spectra.empty(); }
    size_t size() const { return ids.size(); }
};

/// Reads a corpus manifest (kind "soilgen-corpus") and loads everything it
/// references; paths resolve relative to the manifest file.
Corpus load_corpus(const std::filesystem::path& manifest_path);

/// Writes spectra.csv / properties.json / optional wet + truth files plus the
/// manifest into `dir`; returns the manifest path.
std::filesystem::path write_corpus(const std::filesystem::path& dir, const Corpus& corpus);

}  // namespace soilgen::io

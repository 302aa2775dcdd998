#include "soilgen/io.hpp"

#include <bit>
#include <cstring>
#include <unordered_map>

#include "io_util.hpp"
#include "soilgen/common.hpp"

namespace soilgen::io {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace detail;

static_assert(std::endian::native == std::endian::little,
              "cache/checkpoint formats assume a little-endian host");

namespace {

constexpr char kCacheMagic[8] = {'S', 'G', 'S', 'P', '0', '0', '0', '1'};

}  // namespace

std::vector<RawColumn> read_spectra_csv(const fs::path& path) {
    auto f = open_in(path);
    std::string line;
    SG_CHECK(static_cast<bool>(std::getline(f, line)), io_error, path.string(),
             ": empty spectra file");
    auto header = split_line(line);
    SG_CHECK(header.size() >= 2 && header[0] == "wavelength_nm", io_error, path.string(),
             ": header must start with 'wavelength_nm' and name at least one sample");

    std::vector<RawColumn> cols(header.size() - 1);
    for (size_t c = 0; c < cols.size(); ++c) {
        SG_CHECK(!header[c + 1].empty(), io_error, path.string(), ": blank sample id in header");
        for (size_t d = 0; d < c; ++d)
            SG_CHECK(cols[d].id != header[c + 1], io_error, path.string(),
                     ": duplicate sample id '", header[c + 1], "'");
        cols[c].id = header[c + 1];
    }

    size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_line(line);
        SG_CHECK(fields.size() == header.size(), io_error, path.string(), ":", line_no,
                 ": expected ", header.size(), " fields, got ", fields.size());
        double wl = parse_number(fields[0], path, line_no);
        for (size_t c = 0; c < cols.size(); ++c) {
            const std::string& field = fields[c + 1];
            if (field.empty()) continue;
            cols[c].samples.emplace_back(wl, parse_number(field, path, line_no));
        }
    }
    return cols;
}

void write_spectra_csv(const fs::path& path, const std::vector<std::string>& ids,
                       const std::vector<Spectrum>& spectra) {
    SG_CHECK(ids.size() == spectra.size(), shape_error, "ids (", ids.size(),
             ") and spectra (", spectra.size(), ") differ in count");
    for (const auto& s : spectra) s.validate();

    auto f = open_out(path);
    f << "wavelength_nm";
    for (const auto& id : ids) f << ',' << id;
    f << '\n';
    for (int i = 0; i < kGridSize; ++i) {
        f << (kGridStart + i);
        for (const auto& s : spectra) {
            f << ',';
            if (s.mask[static_cast<size_t>(i)]) f << format_value(s.values[static_cast<size_t>(i)]);
        }
        f << '\n';
    }
    SG_CHECK(f.good(), io_error, "write failed for ", path.string());
}

void write_spectra_cache(const fs::path& path, const std::vector<std::string>& ids,
                         const std::vector<Spectrum>& spectra) {
    SG_CHECK(ids.size() == spectra.size(), shape_error, "ids (", ids.size(),
             ") and spectra (", spectra.size(), ") differ in count");
    json runs = json::array();
    for (const auto& s : spectra) {
        s.validate();
        runs.push_back({s.first_measured(), s.measured_count()});
    }
    json header = {{"count", ids.size()}, {"ids", ids}, {"runs", runs}};
    std::string hs = header.dump();

    auto f = open_out(path, std::ios::binary);
    f.write(kCacheMagic, sizeof kCacheMagic);
    uint64_t len = hs.size();
    f.write(reinterpret_cast<const char*>(&len), sizeof len);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    std::vector<float> row(kGridSize);
    for (const auto& s : spectra) {
        for (int i = 0; i < kGridSize; ++i)
            row[static_cast<size_t>(i)] = static_cast<float>(s.values[static_cast<size_t>(i)]);
        f.write(reinterpret_cast<const char*>(row.data()), kGridSize * sizeof(float));
    }
    SG_CHECK(f.good(), io_error, "write failed for ", path.string());
}

std::pair<std::vector<std::string>, std::vector<Spectrum>> read_spectra_cache(
    const fs::path& path) {
    auto f = open_in(path, std::ios::binary);
    char magic[8];
    f.read(magic, sizeof magic);
    SG_CHECK(f.gcount() == sizeof magic && std::memcmp(magic, kCacheMagic, 8) == 0, io_error,
             path.string(), ": not a spectra cache");
    uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof len);
    SG_CHECK(f.good() && len > 0 && len < (1u << 30), io_error, path.string(),
             ": corrupt cache header length");
    std::string hs(len, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(len));
    SG_CHECK(f.good(), io_error, path.string(), ": truncated cache header");
    json header = json::parse(hs, nullptr, false);
    SG_CHECK(!header.is_discarded() && header.contains("count") && header.contains("ids") &&
                 header.contains("runs"),
             io_error, path.string(), ": corrupt cache header");

    size_t n = header.at("count").get<size_t>();
    auto ids = header.at("ids").get<std::vector<std::string>>();
    const auto& runs = header.at("runs");
    SG_CHECK(ids.size() == n && runs.size() == n, io_error, path.string(),
             ": cache header counts disagree");

    std::vector<Spectrum> spectra(n);
    std::vector<float> row(kGridSize);
    for (size_t k = 0; k < n; ++k) {
        f.read(reinterpret_cast<char*>(row.data()), kGridSize * sizeof(float));
        SG_CHECK(f.gcount() == static_cast<std::streamsize>(kGridSize * sizeof(float)), io_error,
                 path.string(), ": truncated cache payload at spectrum ", k);
        Spectrum& s = spectra[k];
        int first = runs[k][0].get<int>();
        int count = runs[k][1].get<int>();
        SG_CHECK(first >= 0 && count > 0 && first + count <= kGridSize, io_error, path.string(),
                 ": bad measured run in cache header");
        for (int i = 0; i < count; ++i) {
            s.values[static_cast<size_t>(first + i)] =
                static_cast<double>(row[static_cast<size_t>(first + i)]);
            s.mask[static_cast<size_t>(first + i)] = 1;
        }
        s.meta = ids[k];
        s.validate();
    }
    return {std::move(ids), std::move(spectra)};
}

std::vector<PropertyRecord> read_properties_json(const fs::path& path) {
    json j = read_json_file(path);
    SG_CHECK(j.is_array(), io_error, path.string(), ": property file must be a JSON list");
    std::vector<PropertyRecord> out;
    out.reserve(j.size());
    for (const auto& item : j) {
        SG_CHECK(item.is_object() && item.contains("id") && item.contains("sentences"), io_error,
                 path.string(), ": each record needs 'id' and 'sentences'");
        PropertyRecord r;
        r.id = item.at("id").get<std::string>();
        r.sentences = item.at("sentences").get<std::vector<std::string>>();
        out.push_back(std::move(r));
    }
    return out;
}

void write_properties_json(const fs::path& path, const std::vector<PropertyRecord>& records) {
    json j = json::array();
    for (const auto& r : records) j.push_back({{"id", r.id}, {"sentences", r.sentences}});
    auto f = open_out(path);
    f << j.dump(2) << '\n';
    SG_CHECK(f.good(), io_error, "write failed for ", path.string());
}

namespace {

std::vector<Spectrum> standardize_columns(std::vector<RawColumn> cols, bool absorbance,
                                          const fs::path& origin) {
    std::vector<Spectrum> spectra;
    spectra.reserve(cols.size());
    for (auto& col : cols) {
        if (absorbance)
            for (auto& [wl, v] : col.samples) v = absorbance_to_reflectance(v);
        try {
            spectra.push_back(trim_to_canonical(col.samples));
        } catch (const error& e) {
            throw io_error(detail::cat(origin.string(), ": sample '", col.id,
                                       "' cannot be standardized: ", e.what()));
        }
        spectra.back().meta = col.id;
    }
    return spectra;
}

}  // namespace

Corpus load_corpus(const fs::path& manifest_path) {
    json m = read_json_file(manifest_path);
    SG_CHECK(m.is_object() && m.value("kind", "") == "soilgen-corpus", io_error,
             manifest_path.string(), ": not a soilgen-corpus manifest");
    const fs::path base = manifest_path.parent_path();
    std::string unit = m.value("unit", "reflectance");
    SG_CHECK(unit == "reflectance" || unit == "absorbance", io_error, manifest_path.string(),
             ": unit must be 'reflectance' or 'absorbance', got '", unit, "'");

    Corpus corpus;
    if (m.contains("spectra_cache")) {
        auto [ids, spectra] = read_spectra_cache(base / m.at("spectra_cache").get<std::string>());
        corpus.ids = std::move(ids);
        corpus.spectra = std::move(spectra);
    } else {
        SG_CHECK(m.contains("spectra_csv"), io_error, manifest_path.string(),
                 ": needs 'spectra_csv' or 'spectra_cache'");
        fs::path csv = base / m.at("spectra_csv").get<std::string>();
        auto cols = read_spectra_csv(csv);
        for (const auto& c : cols) corpus.ids.push_back(c.id);
        corpus.spectra = standardize_columns(std::move(cols), unit == "absorbance", csv);
    }

    std::unordered_map<std::string, size_t> index;
    index.reserve(corpus.size());
    for (size_t i = 0; i < corpus.ids.size(); ++i) index.emplace(corpus.ids[i], i);

    corpus.sentences.assign(corpus.size(), {});
    if (m.contains("properties")) {
        auto records = read_properties_json(base / m.at("properties").get<std::string>());
        for (auto& r : records) {
            auto it = index.find(r.id);
            if (it != index.end()) corpus.sentences[it->second] = std::move(r.sentences);
        }
    }

    if (m.contains("wet")) {
        const json& w = m.at("wet");
        SG_CHECK(w.is_object() && w.contains("spectra_csv") && w.contains("smc"), io_error,
                 manifest_path.string(), ": wet block needs 'spectra_csv' and 'smc'");
        fs::path csv = base / w.at("spectra_csv").get<std::string>();
        auto cols = read_spectra_csv(csv);
        auto wets = standardize_columns(std::move(cols), unit == "absorbance", csv);
        corpus.wet_spectra.resize(corpus.size());
        corpus.smc.assign(corpus.size(), 0.0);
        std::vector<uint8_t> seen(corpus.size(), 0);
        for (auto& ws : wets) {
            auto it = index.find(ws.meta);
            SG_CHECK(it != index.end(), io_error, csv.string(), ": wet sample '", ws.meta,
                     "' has no dry counterpart");
            seen[it->second] = 1;
            corpus.wet_spectra[it->second] = std::move(ws);
        }
        const json& smc = w.at("smc");
        for (size_t i = 0; i < corpus.ids.size(); ++i) {
            SG_CHECK(seen[i], io_error, manifest_path.string(), ": sample '", corpus.ids[i],
                     "' missing from the wet spectra");
            SG_CHECK(smc.contains(corpus.ids[i]), io_error, manifest_path.string(),
                     ": sample '", corpus.ids[i], "' missing from wet.smc");
            corpus.smc[i] = smc.at(corpus.ids[i]).get<double>();
            SG_CHECK(corpus.smc[i] >= 0.0, io_error, manifest_path.string(),
                     ": negative moisture for '", corpus.ids[i], "'");
        }
    }

    if (m.contains("truth")) corpus.truth = read_json_file(base / m.at("truth").get<std::string>());
    return corpus;
}

fs::path write_corpus(const fs::path& dir, const Corpus& corpus) {
    SG_CHECK(corpus.ids.size() == corpus.spectra.size() &&
                 corpus.ids.size() == corpus.sentences.size(),
             shape_error, "corpus vectors are not aligned");
    fs::create_directories(dir);

    write_spectra_csv(dir / "spectra.csv", corpus.ids, corpus.spectra);
    std::vector<PropertyRecord> records;
    records.reserve(corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i)
        records.push_back({corpus.ids[i], corpus.sentences[i]});
    write_properties_json(dir / "properties.json", records);

    json m = {{"kind", "soilgen-corpus"},
              {"unit", "reflectance"},
              {"spectra_csv", "spectra.csv"},
              {"properties", "properties.json"}};

    if (corpus.has_wet()) {
        SG_CHECK(corpus.wet_spectra.size() == corpus.size() && corpus.smc.size() == corpus.size(),
                 shape_error, "wet vectors are not aligned with the corpus");
        write_spectra_csv(dir / "wet_spectra.csv", corpus.ids, corpus.wet_spectra);
        json smc = json::object();
        for (size_t i = 0; i < corpus.size(); ++i) smc[corpus.ids[i]] = corpus.smc[i];
        m["wet"] = {{"spectra_csv", "wet_spectra.csv"}, {"smc", smc}};
    }
    if (!corpus.truth.is_null()) {
        auto f = open_out(dir / "truth.json");
        f << corpus.truth.dump(2) << '\n';
        m["truth"] = "truth.json";
    }

    auto f = open_out(dir / "manifest.json");
    f << m.dump(2) << '\n';
    SG_CHECK(f.good(), io_error, "write failed for ", (dir / "manifest.json").string());
    return dir / "manifest.json";
}

}  // namespace soilgen::io

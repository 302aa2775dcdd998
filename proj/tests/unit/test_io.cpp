#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "soilgen/io.hpp"
#include "soilgen/nn/rng.hpp"

using namespace soilgen;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("soilgen-io-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

Spectrum random_spectrum(nn::Rng& rng, int first_band, int band_count) {
    Spectrum s;
    int lo = first_band * kBandWidth;
    int hi = lo + band_count * kBandWidth;
    for (int i = lo; i < hi; ++i) {
        s.values[static_cast<size_t>(i)] = rng.uniform(0.01, 0.99);
        s.mask[static_cast<size_t>(i)] = 1;
    }
    return s;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("spectra csv round trips exactly, blanks preserved") {
    TempDir tmp;
    nn::Rng rng(21);
    std::vector<Spectrum> spectra = {random_spectrum(rng, 0, 42), random_spectrum(rng, 1, 39),
                                     random_spectrum(rng, 0, 20)};
    std::vector<std::string> ids = {"a", "b", "c"};
    fs::path csv = tmp.path / "s.csv";
    io::write_spectra_csv(csv, ids, spectra);

    auto cols = io::read_spectra_csv(csv);
    REQUIRE(cols.size() == 3);
    for (size_t c = 0; c < 3; ++c) {
        CHECK(cols[c].id == ids[c]);
        CHECK(cols[c].samples.size() == static_cast<size_t>(spectra[c].measured_count()));
        Spectrum back = trim_to_canonical(cols[c].samples);
        for (int i = 0; i < kGridSize; ++i) {
            CHECK(back.mask[static_cast<size_t>(i)] == spectra[c].mask[static_cast<size_t>(i)]);
            CHECK(back.values[static_cast<size_t>(i)] == spectra[c].values[static_cast<size_t>(i)]);
        }
    }
}

TEST_CASE("csv reader rejects malformed files") {
    TempDir tmp;
    auto write = [&](const std::string& name, const std::string& body) {
        std::ofstream f(tmp.path / name);
        f << body;
        return tmp.path / name;
    };
    CHECK_THROWS_AS(io::read_spectra_csv(tmp.path / "absent.csv"), io_error);
    CHECK_THROWS_AS(io::read_spectra_csv(write("h.csv", "nm,a\n400,0.5\n")), io_error);
    CHECK_THROWS_AS(io::read_spectra_csv(write("dup.csv", "wavelength_nm,a,a\n400,1,2\n")),
                    io_error);
    CHECK_THROWS_AS(io::read_spectra_csv(write("short.csv", "wavelength_nm,a\n400\n")), io_error);
    CHECK_THROWS_AS(io::read_spectra_csv(write("bad.csv", "wavelength_nm,a\n400,zz\n")), io_error);
    // blank cells and CRLF endings are fine
    auto cols = io::read_spectra_csv(write("ok.csv", "wavelength_nm,a,b\r\n400,,0.5\r\n401,0.25,\r\n"));
    CHECK(cols[0].samples.size() == 1);
    CHECK(cols[0].samples[0].second == 0.25);
    CHECK(cols[1].samples.size() == 1);
}

TEST_CASE("binary cache round trips and is byte-stable") {
    TempDir tmp;
    nn::Rng rng(22);
    std::vector<Spectrum> spectra = {random_spectrum(rng, 0, 42), random_spectrum(rng, 2, 30)};
    std::vector<std::string> ids = {"x1", "x2"};
    fs::path cache = tmp.path / "s.sgsp";
    io::write_spectra_cache(cache, ids, spectra);

    auto [rids, rs] = io::read_spectra_cache(cache);
    CHECK(rids == ids);
    REQUIRE(rs.size() == 2);
    for (size_t k = 0; k < 2; ++k) {
        rs[k].validate();
        CHECK(rs[k].first_measured() == spectra[k].first_measured());
        CHECK(rs[k].measured_count() == spectra[k].measured_count());
        for (int i = 0; i < kGridSize; ++i)
            CHECK(rs[k].values[static_cast<size_t>(i)] ==
                  doctest::Approx(spectra[k].values[static_cast<size_t>(i)]).epsilon(1e-7));
    }

    // write the reread content again: byte-identical file
    fs::path cache2 = tmp.path / "s2.sgsp";
    io::write_spectra_cache(cache2, rids, rs);
    CHECK(slurp(cache) == slurp(cache2));

    std::ofstream(tmp.path / "junk.sgsp") << "not a cache at all";
    CHECK_THROWS_AS(io::read_spectra_cache(tmp.path / "junk.sgsp"), io_error);
}

TEST_CASE("property records round trip") {
    TempDir tmp;
    std::vector<io::PropertyRecord> recs = {
        {"a", {"Clay: 22.0 %", "Sand: 40.0 %"}},
        {"b", {}},
    };
    io::write_properties_json(tmp.path / "p.json", recs);
    auto back = io::read_properties_json(tmp.path / "p.json");
    REQUIRE(back.size() == 2);
    CHECK(back[0].id == "a");
    CHECK(back[0].sentences == recs[0].sentences);
    CHECK(back[1].sentences.empty());

    std::ofstream(tmp.path / "bad.json") << "{\"id\": 1}";
    CHECK_THROWS_AS(io::read_properties_json(tmp.path / "bad.json"), io_error);
}

TEST_CASE("corpus writes and loads through the manifest") {
    TempDir tmp;
    nn::Rng rng(23);
    io::Corpus corpus;
    corpus.ids = {"s0", "s1"};
    corpus.spectra = {random_spectrum(rng, 0, 42), random_spectrum(rng, 0, 42)};
    corpus.sentences = {{"Clay: 20.0 %"}, {"Clay: 35.0 %", "Sand: 10.0 %"}};
    corpus.wet_spectra = {random_spectrum(rng, 0, 42), random_spectrum(rng, 0, 42)};
    corpus.smc = {12.5, 30.0};
    corpus.truth = nlohmann::json{{"kind", "toy"}, {"base", {0.2, 0.3}}};

    fs::path manifest = io::write_corpus(tmp.path / "corpus", corpus);
    io::Corpus back = io::load_corpus(manifest);
    REQUIRE(back.size() == 2);
    CHECK(back.ids == corpus.ids);
    CHECK(back.sentences == corpus.sentences);
    REQUIRE(back.has_wet());
    CHECK(back.smc == corpus.smc);
    CHECK(back.truth.at("kind") == "toy");
    for (size_t k = 0; k < 2; ++k)
        for (int i = 0; i < kGridSize; ++i) {
            CHECK(back.spectra[k].values[static_cast<size_t>(i)] ==
                  corpus.spectra[k].values[static_cast<size_t>(i)]);
            CHECK(back.wet_spectra[k].values[static_cast<size_t>(i)] ==
                  corpus.wet_spectra[k].values[static_cast<size_t>(i)]);
        }

    // determinism: writing the same corpus twice is byte-identical
    io::write_corpus(tmp.path / "again", corpus);
    for (const char* name : {"spectra.csv", "properties.json", "manifest.json", "truth.json",
                             "wet_spectra.csv"})
        CHECK(slurp(tmp.path / "corpus" / name) == slurp(tmp.path / "again" / name));
}

TEST_CASE("absorbance corpora convert on load") {
    TempDir tmp;
    fs::create_directories(tmp.path / "abs");
    {
        std::ofstream f(tmp.path / "abs" / "spectra.csv");
        f << "wavelength_nm,a\n";
        for (int wl = 400; wl <= 2499; ++wl) f << wl << ",1\n";
    }
    std::ofstream(tmp.path / "abs" / "manifest.json")
        << R"({"kind":"soilgen-corpus","unit":"absorbance","spectra_csv":"spectra.csv"})";
    io::Corpus c = io::load_corpus(tmp.path / "abs" / "manifest.json");
    REQUIRE(c.size() == 1);
    CHECK(c.spectra[0].values[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(c.sentences[0].empty());

    std::ofstream(tmp.path / "abs" / "bad.json")
        << R"({"kind":"soilgen-corpus","unit":"parsecs","spectra_csv":"spectra.csv"})";
    CHECK_THROWS_AS(io::load_corpus(tmp.path / "abs" / "bad.json"), io_error);
    std::ofstream(tmp.path / "abs" / "notc.json") << R"({"kind":"other"})";
    CHECK_THROWS_AS(io::load_corpus(tmp.path / "abs" / "notc.json"), io_error);
}

TEST_CASE("manifest with cache loads identically to csv") {
    TempDir tmp;
    nn::Rng rng(24);
    io::Corpus corpus;
    corpus.ids = {"q"};
    corpus.spectra = {random_spectrum(rng, 1, 40)};
    corpus.sentences = {{"pH in water: 6.5"}};
    fs::path manifest = io::write_corpus(tmp.path / "c", corpus);
    io::write_spectra_cache(tmp.path / "c" / "spectra.sgsp", corpus.ids, corpus.spectra);
    {
        auto m = nlohmann::json::parse(slurp(manifest));
        m["spectra_cache"] = "spectra.sgsp";
        std::ofstream f(manifest);
        f << m.dump(2) << '\n';
    }
    io::Corpus back = io::load_corpus(manifest);
    CHECK(back.spectra[0].first_measured() == corpus.spectra[0].first_measured());
    CHECK(back.sentences[0].size() == 1);
    for (int i = 0; i < kGridSize; ++i)
        CHECK(back.spectra[0].values[static_cast<size_t>(i)] ==
              doctest::Approx(corpus.spectra[0].values[static_cast<size_t>(i)]).epsilon(1e-7));
}

}  // TEST_SUITE

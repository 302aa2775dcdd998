#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "soilgen/eval.hpp"
#include "soilgen/io.hpp"

using namespace soilgen;
using namespace soilgen::eval;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("soilgen_eval_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

Spectrum const_spec(double v) { return Spectrum::full(std::vector<double>(kGridSize, v)); }

// smooth deterministic curve plus seeded jitter
Spectrum noisy_spec(double base, double amp, uint64_t seed) {
    nn::Rng rng(seed);
    std::vector<double> v(kGridSize);
    for (int i = 0; i < kGridSize; ++i) {
        double u = double(i) / (kGridSize - 1);
        v[size_t(i)] = base + amp * std::sin(6.0 * u) + 0.02 * rng.normal();
    }
    return Spectrum::full(v);
}

// spectrum measured only on grid indices [lo, hi]
Spectrum partial_spec(int lo, int hi, double v) {
    Spectrum s;
    s.values.assign(kGridSize, 0.0);
    s.mask.assign(kGridSize, 0);
    for (int i = lo; i <= hi; ++i) {
        double u = double(i) / (kGridSize - 1);
        s.values[size_t(i)] = v + 0.05 * std::sin(9.0 * u);
        s.mask[size_t(i)] = 1;
    }
    s.validate();
    return s;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// straight textbook formulas, arranged differently from the library
double oracle_rmse(const Spectrum& a, const Spectrum& b, int lo, int hi) {
    double sum = 0.0;
    int n = 0;
    for (int i = lo; i <= hi; ++i) {
        double d = a.values[size_t(i)] - b.values[size_t(i)];
        sum += d * d;
        ++n;
    }
    return 100.0 * std::sqrt(sum / n);
}

double oracle_r2(const Spectrum& a, const Spectrum& b, int lo, int hi) {
    int n = hi - lo + 1;
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (int i = lo; i <= hi; ++i) {
        double x = a.values[size_t(i)], y = b.values[size_t(i)];
        sa += x;
        sb += y;
        saa += x * x;
        sbb += y * y;
        sab += x * y;
    }
    double cov = sab - sa * sb / n;
    double va = saa - sa * sa / n;
    double vb = sbb - sb * sb / n;
    return (cov * cov) / (va * vb);
}

double sentence_number(const std::string& s) {
    size_t colon = s.find(':');
    REQUIRE(colon != std::string::npos);
    return std::strtod(s.c_str() + colon + 1, nullptr);
}

// closed form mirrored from the toy generator
double toy_curve(double base_eff, double slope, double depth, int i) {
    double u = static_cast<double>(i) / (kGridSize - 1);
    double lambda = static_cast<double>(kGridStart + i);
    double g = std::exp(-(lambda - 1400.0) * (lambda - 1400.0) / (2.0 * 60.0 * 60.0));
    return std::clamp(base_eff + slope * u - depth * g, 0.0, 1.5);
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("rmse matches a scalar oracle") {
    Spectrum t = noisy_spec(0.4, 0.1, 3);
    CHECK(rmse_pair(t, t) == 0.0);

    Spectrum flat1 = const_spec(0.3), flat2 = const_spec(0.35);
    CHECK(rmse_pair(flat2, flat1) == doctest::Approx(5.0).epsilon(1e-12));

    Spectrum p = noisy_spec(0.42, 0.08, 4);
    CHECK(std::abs(rmse_pair(p, t) - oracle_rmse(p, t, 0, kGridSize - 1)) < 1e-12);
    CHECK(std::abs(rmse_range(p, t, 700, 1299) - oracle_rmse(p, t, 300, 899)) < 1e-12);

    // full-pair metric refuses partial coverage; range variant accepts it
    Spectrum part = partial_spec(400, 2099, 0.4);  // 800-2499 nm
    CHECK_THROWS_AS(rmse_pair(part, t), precondition_error);
    CHECK_THROWS_AS(rmse_pair(t, part), precondition_error);
    CHECK(rmse_range(part, t, 800, 2499) > 0.0);
    CHECK_THROWS_AS(rmse_range(part, t, 750, 1299), precondition_error);

    CHECK_THROWS_AS(rmse_range(p, t, 900, 899), value_error);
    CHECK_THROWS_AS(rmse_range(p, t, 399, 500), value_error);
    CHECK_THROWS_AS(rmse_range(p, t, 2400, 2500), value_error);
}

TEST_CASE("r2 is squared correlation with affine invariance") {
    Spectrum t = noisy_spec(0.4, 0.1, 7);
    CHECK(r2_pair(t, t) == 1.0);

    Spectrum affine = t;
    for (double& v : affine.values) v = 0.7 * v + 0.05;
    CHECK(r2_pair(affine, t) == doctest::Approx(1.0).epsilon(1e-12));

    Spectrum p = noisy_spec(0.38, 0.05, 8);
    double r = r2_pair(p, t);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
    CHECK(std::abs(r - oracle_r2(p, t, 0, kGridSize - 1)) < 1e-12);

    // invariant under positive affine transforms of either argument
    Spectrum p2 = p;
    for (double& v : p2.values) v = 1.9 * v + 0.01;
    CHECK(r2_pair(p2, t) == doctest::Approx(r).epsilon(1e-12));
    Spectrum t2 = t;
    for (double& v : t2.values) v = 0.4 * v + 0.2;
    CHECK(r2_pair(p, t2) == doctest::Approx(r).epsilon(1e-12));

    CHECK(std::abs(r2_range(p, t, 700, 1299) - oracle_r2(p, t, 300, 899)) < 1e-12);

    CHECK_THROWS_AS(r2_pair(p, const_spec(0.5)), value_error);
    CHECK_THROWS_AS(r2_pair(const_spec(0.5), t), value_error);
}

TEST_CASE("reports average their rows exactly and serialize") {
    std::vector<std::string> ids = {"a", "b", "c"};
    std::vector<double> rmse = {1.25, 4.5, 2.125};
    std::vector<double> r2 = {0.91, 0.85, 0.99};
    EvalReport rep = make_report("demo", ids, rmse, r2, 2);

    double sr = 0.0, s2 = 0.0;
    for (size_t i = 0; i < rmse.size(); ++i) {
        sr += rmse[i];
        s2 += r2[i];
    }
    CHECK(rep.mean_rmse == sr / 3.0);
    CHECK(rep.mean_r2 == s2 / 3.0);
    CHECK(rep.n == 3);
    CHECK(rep.skipped == 2);
    CHECK(rep.protocol == "demo");

    EvalReport empty = make_report("none", {}, {}, {}, 4);
    CHECK(empty.n == 0);
    CHECK(empty.mean_rmse == 0.0);
    CHECK(empty.mean_r2 == 0.0);

    CHECK_THROWS_AS(make_report("bad", {"a"}, {1.0, 2.0}, {0.5, 0.5}), shape_error);

    TempDir tmp;
    auto jpath = tmp.path / "rep.json";
    write_report_json(jpath, rep);
    nlohmann::json j = nlohmann::json::parse(slurp(jpath));
    CHECK(j["protocol"] == "demo");
    CHECK(j["n"] == 3);
    CHECK(j["skipped"] == 2);
    CHECK(j["mean_rmse"].get<double>() == rep.mean_rmse);
    CHECK(j["mean_r2"].get<double>() == rep.mean_r2);
    REQUIRE(j["items"].size() == 3);
    CHECK(j["items"][1]["id"] == "b");
    CHECK(j["items"][1]["rmse"].get<double>() == 4.5);
    CHECK(j["items"][1]["r2"].get<double>() == 0.85);

    auto cpath = tmp.path / "rep.csv";
    write_report_csv(cpath, rep);
    std::istringstream lines(slurp(cpath));
    std::string line;
    std::vector<std::string> rows;
    while (std::getline(lines, line)) rows.push_back(line);
    REQUIRE(rows.size() == 5);  // header + 3 samples + mean
    CHECK(rows[0] == "id,rmse_percent,r2");
    CHECK(rows[1].substr(0, 2) == "a,");
    CHECK(rows[4].substr(0, 5) == "mean,");
    double mr = 0.0, m2 = 0.0;
    REQUIRE(std::sscanf(rows[4].c_str(), "mean,%lf,%lf", &mr, &m2) == 2);
    CHECK(mr == rep.mean_rmse);  // %.17g survives the round trip
    CHECK(m2 == rep.mean_r2);
}

TEST_CASE("toy corpus is seeded and matches its closed form") {
    ToyCorpusSpec spec;
    spec.count = 6;
    spec.seed = 42;

    io::Corpus a = make_toy_corpus(spec);
    io::Corpus b = make_toy_corpus(spec);
    REQUIRE(a.size() == 6);
    CHECK(a.ids == b.ids);
    CHECK(a.sentences == b.sentences);
    for (size_t s = 0; s < a.size(); ++s)
        for (int i = 0; i < kGridSize; ++i)
            CHECK(a.spectra[s].values[size_t(i)] == b.spectra[s].values[size_t(i)]);
    CHECK(a.truth == b.truth);
    CHECK(a.ids[0] == "toy-0001");
    CHECK_FALSE(a.has_wet());

    // zero noise: spectra are exactly the documented closed form
    for (size_t s = 0; s < a.size(); ++s) {
        const auto& p = a.truth["params"][a.ids[s]];
        double base_eff = p["base_effective"].get<double>();
        double slope = p["slope"].get<double>();
        double depth = p["depth"].get<double>();
        for (int i = 0; i < kGridSize; ++i)
            CHECK(a.spectra[s].values[size_t(i)] == toy_curve(base_eff, slope, depth, i));

        // sentences carry the same numbers the generator used
        REQUIRE(a.sentences[s].size() == 3);
        CHECK(property_name(a.sentences[s][0]) == "baseline albedo");
        CHECK(sentence_number(a.sentences[s][0]) == p["base"].get<double>());
        CHECK(sentence_number(a.sentences[s][1]) == slope);
        CHECK(sentence_number(a.sentences[s][2]) == depth);
        CHECK(p["base"].get<double>() == base_eff);  // no manufacturer shift
    }

    // two writes of the same corpus are byte-identical
    TempDir tmp;
    auto m1 = io::write_corpus(tmp.path / "c1", a);
    auto m2 = io::write_corpus(tmp.path / "c2", b);
    for (const char* name : {"spectra.csv", "properties.json", "truth.json"})
        CHECK(slurp(m1.parent_path() / name) == slurp(m2.parent_path() / name));

    CHECK_THROWS_AS(make_toy_corpus({.count = 0}), value_error);
    CHECK_THROWS_AS(make_toy_corpus({.count = 2, .noise_std = -0.1}), value_error);
}

TEST_CASE("toy corpus noise, manufacturer, and wet options") {
    ToyCorpusSpec spec;
    spec.count = 40;
    spec.seed = 9;
    spec.noise_std = 0.01;
    spec.manufacturer = true;
    spec.wet = true;
    io::Corpus c = make_toy_corpus(spec);

    int alpha = 0, beta = 0;
    double resid_sq = 0.0;
    size_t resid_n = 0;
    for (size_t s = 0; s < c.size(); ++s) {
        const auto& p = c.truth["params"][c.ids[s]];
        double base = p["base"].get<double>();
        double base_eff = p["base_effective"].get<double>();
        double slope = p["slope"].get<double>();
        double depth = p["depth"].get<double>();

        REQUIRE(c.sentences[s].size() == 4);
        CHECK(property_name(c.sentences[s][3]) == "manufacturer");
        std::string maker = p["manufacturer"].get<std::string>();
        if (maker == "Beta") {
            ++beta;
            CHECK(base_eff == doctest::Approx(base + 0.015).epsilon(1e-15));
        } else {
            ++alpha;
            REQUIRE(maker == "Alpha");
            CHECK(base_eff == base);
        }
        CHECK(c.sentences[s][3] == "manufacturer: " + maker);

        for (int i = 0; i < kGridSize; i += 7) {
            double d = c.spectra[s].values[size_t(i)] - toy_curve(base_eff, slope, depth, i);
            resid_sq += d * d;
            ++resid_n;
        }
    }
    CHECK(alpha > 0);
    CHECK(beta > 0);
    double resid_std = std::sqrt(resid_sq / double(resid_n));
    CHECK(resid_std == doctest::Approx(0.01).epsilon(0.3));

    REQUIRE(c.has_wet());
    REQUIRE(c.wet_spectra.size() == c.size());
    REQUIRE(c.smc.size() == c.size());
    for (size_t s = 0; s < c.size(); ++s) {
        double smc = c.smc[s];
        CHECK(smc >= 0.0);
        CHECK(smc <= 35.0);
        CHECK(c.truth["params"][c.ids[s]]["smc"].get<double>() == smc);
        double f = 0.5 * (1.0 - std::exp(-smc / 15.0));
        for (int i = 0; i < kGridSize; i += 11) {
            double u = static_cast<double>(i) / (kGridSize - 1);
            double want = c.spectra[s].values[size_t(i)] * (1.0 - f * (0.6 + 0.4 * u));
            CHECK(c.wet_spectra[s].values[size_t(i)] == want);
        }
    }
}

TEST_CASE("least-squares refit recovers the toy generator parameters") {
    ToyCorpusSpec spec;
    spec.count = 8;
    spec.seed = 21;
    spec.manufacturer = true;
    io::Corpus c = make_toy_corpus(spec);

    for (size_t s = 0; s < c.size(); ++s) {
        // basis [1, u, -g]; solve the 3x3 normal equations by elimination
        double A[3][3] = {};
        double rhs[3] = {};
        for (int i = 0; i < kGridSize; ++i) {
            double u = static_cast<double>(i) / (kGridSize - 1);
            double lambda = static_cast<double>(kGridStart + i);
            double g =
                std::exp(-(lambda - 1400.0) * (lambda - 1400.0) / (2.0 * 60.0 * 60.0));
            double phi[3] = {1.0, u, -g};
            double y = c.spectra[s].values[size_t(i)];
            for (int r = 0; r < 3; ++r) {
                for (int q = 0; q < 3; ++q) A[r][q] += phi[r] * phi[q];
                rhs[r] += phi[r] * y;
            }
        }
        for (int col = 0; col < 3; ++col) {
            int piv = col;
            for (int r = col + 1; r < 3; ++r)
                if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
            std::swap(A[col], A[piv]);
            std::swap(rhs[col], rhs[piv]);
            for (int r = 0; r < 3; ++r) {
                if (r == col) continue;
                double m = A[r][col] / A[col][col];
                for (int q = 0; q < 3; ++q) A[r][q] -= m * A[col][q];
                rhs[r] -= m * rhs[col];
            }
        }
        const auto& p = c.truth["params"][c.ids[s]];
        CHECK(std::abs(rhs[0] / A[0][0] - p["base_effective"].get<double>()) < 1e-6);
        CHECK(std::abs(rhs[1] / A[1][1] - p["slope"].get<double>()) < 1e-6);
        CHECK(std::abs(rhs[2] / A[2][2] - p["depth"].get<double>()) < 1e-6);
    }
}

TEST_CASE("padding protocol scores only the blanked window") {
    ToyCorpusSpec spec;
    spec.count = 5;
    spec.seed = 3;
    io::Corpus corpus = make_toy_corpus(spec);
    std::vector<ZeroBand> bands = {{400, 799}, {2100, 2499}};

    // perfect reconstruction: hand the original spectrum back by id
    auto original_of = [&corpus](const Spectrum& blanked) {
        for (size_t s = 0; s < corpus.size(); ++s)
            if (corpus.ids[s] == blanked.meta) return corpus.spectra[s];
        REQUIRE(false);
        return blanked;
    };
    Spectrum before = corpus.spectra[0];

    auto reports = run_padding_protocol(corpus, original_of, bands);
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].protocol == "pad-zero-400-799");
    CHECK(reports[1].protocol == "pad-zero-2100-2499");
    for (const EvalReport& r : reports) {
        CHECK(r.n == 5);
        CHECK(r.skipped == 0);
        for (double v : r.rmse) CHECK(v == 0.0);
        for (double v : r.r2) CHECK(v == 1.0);
        CHECK(r.mean_rmse == 0.0);
        CHECK(r.mean_r2 == 1.0);
    }

    // input corpus left untouched
    for (int i = 0; i < kGridSize; ++i) {
        CHECK(corpus.spectra[0].values[size_t(i)] == before.values[size_t(i)]);
        CHECK(corpus.spectra[0].mask[size_t(i)] == before.mask[size_t(i)]);
    }

    // corrupting the reconstruction outside the blanked window must not count
    auto corrupt_outside = [&](const Spectrum& blanked) {
        Spectrum rec = original_of(blanked);
        for (int i = 0; i < kGridSize; ++i)
            if (blanked.mask[size_t(i)]) rec.values[size_t(i)] += 0.1;
        return rec;
    };
    for (const EvalReport& r : run_padding_protocol(corpus, corrupt_outside, bands))
        CHECK(r.mean_rmse == 0.0);

    // while a miss inside the window counts in full
    auto corrupt_inside = [&](const Spectrum& blanked) {
        Spectrum rec = original_of(blanked);
        for (int i = 0; i < kGridSize; ++i)
            if (!blanked.mask[size_t(i)]) rec.values[size_t(i)] += 0.01;
        return rec;
    };
    for (const EvalReport& r : run_padding_protocol(corpus, corrupt_inside, bands))
        CHECK(r.mean_rmse == doctest::Approx(1.0).epsilon(1e-9));

    CHECK_THROWS_AS(run_padding_protocol(corpus, original_of, {}), value_error);
    CHECK_THROWS_AS(run_padding_protocol(corpus, original_of, {{300, 799}}), value_error);
}

TEST_CASE("padding protocol skips spectra that cannot play") {
    io::Corpus corpus;
    corpus.ids = {"full", "upper-only", "window-only"};
    corpus.spectra = {noisy_spec(0.4, 0.1, 5),        // full range
                      partial_spec(400, 2099, 0.45),  // 800-2499 nm
                      partial_spec(0, 399, 0.5)};     // 400-799 nm exactly
    corpus.sentences.resize(3);

    auto identityish = [&corpus](const Spectrum& blanked) {
        for (size_t s = 0; s < corpus.size(); ++s)
            if (corpus.ids[s] == blanked.meta) return corpus.spectra[s];
        return blanked;
    };
    corpus.spectra[0].meta = "full";
    corpus.spectra[1].meta = "upper-only";
    corpus.spectra[2].meta = "window-only";

    // 400-799: sample 2 covers nothing of it -> skipped; sample 3 would lose
    // its whole measured run -> skipped
    auto reports = run_padding_protocol(corpus, identityish, {{400, 799}, {2100, 2499}});
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].n == 1);
    CHECK(reports[0].skipped == 2);
    CHECK(reports[0].ids == std::vector<std::string>{"full"});

    // 2100-2499: the upper-only sample participates, the low one cannot
    CHECK(reports[1].n == 2);
    CHECK(reports[1].skipped == 1);
    CHECK(reports[1].ids == std::vector<std::string>{"full", "upper-only"});

    // an untrained model still produces a well-formed report
    nn::ParameterStore ps;
    nn::Rng rng(13);
    pad::PaddingConfig pcfg;
    pcfg.d_model = 16;
    pcfg.heads = 2;
    pcfg.self_layers = 1;
    pcfg.ffn_hidden = 32;
    pcfg.conv_width = 6;
    pad::PaddingModel model(ps, rng, pcfg);
    auto rep = run_padding_protocol(corpus, model, {{400, 799}});
    REQUIRE(rep.size() == 1);
    CHECK(rep[0].n == 1);
    CHECK(std::isfinite(rep[0].mean_rmse));
    CHECK(rep[0].mean_r2 >= 0.0);
    CHECK(rep[0].mean_r2 <= 1.0);
}

TEST_CASE("ablation sentence selection follows the rules") {
    CHECK(property_name("Baseline Albedo: 0.3") == "baseline albedo");
    CHECK(property_name("  manufacturer:  Beta") == "manufacturer");
    CHECK(property_name("no colon here") == "no colon here");

    std::vector<std::string> sents = {"baseline albedo: 0.35", "spectral slope: 0.1 per span",
                                      "absorption depth: 0.03 at 1400 nm",
                                      "manufacturer: Alpha"};
    nn::Rng rng(77);
    std::vector<std::string> out;

    AblationSpec all;
    CHECK(select_sentences(sents, all, rng, out));
    CHECK(out == sents);

    AblationSpec dropm;
    dropm.mode = AblationSpec::Mode::drop_manufacturer;
    CHECK(select_sentences(sents, dropm, rng, out));
    CHECK(out == std::vector<std::string>(sents.begin(), sents.begin() + 3));
    CHECK(select_sentences({sents[0]}, dropm, rng, out));
    CHECK(out == std::vector<std::string>{sents[0]});
    CHECK(select_sentences({sents[3]}, dropm, rng, out));  // manufacturer-only sample
    CHECK(out.empty());                                    // runner counts it as a skip

    AblationSpec drop1;
    drop1.mode = AblationSpec::Mode::drop_random_k;
    drop1.k = 1;
    CHECK(select_sentences({sents[0]}, drop1, rng, out));
    CHECK(out == std::vector<std::string>{sents[0]});  // floor: nothing dropped
    CHECK(select_sentences(sents, drop1, rng, out));
    CHECK(out.size() == 3);
    for (const std::string& s : out) CHECK(std::count(sents.begin(), sents.end(), s) == 1);

    AblationSpec drop2 = drop1;
    drop2.k = 2;
    CHECK(select_sentences({sents[0], sents[1]}, drop2, rng, out));
    CHECK(out.size() == 2);  // dropping two would leave none
    CHECK(select_sentences(sents, drop2, rng, out));
    CHECK(out.size() == 2);

    // deterministic given the rng state
    nn::Rng r1(5), r2(5);
    std::vector<std::string> o1, o2;
    select_sentences(sents, drop1, r1, o1);
    select_sentences(sents, drop1, r2, o2);
    CHECK(o1 == o2);

    AblationSpec sub;
    sub.mode = AblationSpec::Mode::subset;
    sub.keep = {"Baseline Albedo"};
    CHECK(select_sentences(sents, sub, rng, out));
    CHECK(out == std::vector<std::string>{sents[0]});
    sub.keep = {"baseline albedo", "manufacturer"};
    CHECK(select_sentences(sents, sub, rng, out));
    CHECK(out == std::vector<std::string>{sents[0], sents[3]});
    sub.keep = {"organic carbon"};
    CHECK_FALSE(select_sentences(sents, sub, rng, out));
    CHECK(out.empty());
}

TEST_CASE("ablation protocol runs the ensemble and counts skips") {
    ToyCorpusSpec tc;
    tc.count = 3;
    tc.seed = 15;
    tc.manufacturer = true;
    io::Corpus corpus = make_toy_corpus(tc);
    corpus.sentences[1].pop_back();  // sample 2 loses its manufacturer sentence

    props::Dictionary dict;
    for (const auto& ss : corpus.sentences)
        for (const auto& s : ss) dict.absorb(props::tokenize(s));

    sogm::SogmConfig cfg;
    cfg.encoder.d_model = 8;
    cfg.encoder.heads = 2;
    cfg.encoder.sentence_layers = 1;
    cfg.encoder.set_layers = 1;
    cfg.encoder.ffn_hidden = 16;
    cfg.unet.base_ch = 2;
    cfg.unet.cond_dim = 8;
    cfg.unet.heads = 2;
    cfg.unet.time_dim = 8;
    nn::ParameterStore ps;
    nn::Rng rng(19);
    sogm::SogmModel model(ps, rng, dict, cfg);
    model.set_normalization(0.38, 0.1);

    AblationSpec all;
    all.n_seeds = 2;
    all.base_seed = 5;
    EvalReport rep = run_ablation_protocol(corpus, model, all);
    CHECK(rep.protocol == "ablation-all");
    REQUIRE(rep.n == 3);
    CHECK(rep.skipped == 0);
    CHECK(rep.ids == corpus.ids);
    for (double v : rep.rmse) CHECK(std::isfinite(v));
    for (double v : rep.r2) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // row 0 is exactly the ensemble-mean metric for that sample
    sogm::GenerationResult gen = model.generate_mean(corpus.sentences[0], 2, 5);
    CHECK(rep.rmse[0] == rmse_pair(gen.mean, corpus.spectra[0]));
    CHECK(rep.r2[0] == r2_pair(gen.mean, corpus.spectra[0]));

    AblationSpec sub;
    sub.mode = AblationSpec::Mode::subset;
    sub.keep = {"manufacturer"};
    sub.n_seeds = 1;
    EvalReport srep = run_ablation_protocol(corpus, model, sub);
    CHECK(srep.n == 2);  // the stripped sample lacks the property
    CHECK(srep.skipped == 1);
    CHECK(srep.ids == std::vector<std::string>{corpus.ids[0], corpus.ids[2]});
    CHECK(srep.protocol == "ablation-subset-manufacturer");

    AblationSpec bad;
    bad.mode = AblationSpec::Mode::drop_random_k;
    bad.k = 3;
    CHECK_THROWS_AS(run_ablation_protocol(corpus, model, bad), value_error);
    AblationSpec empty_keep;
    empty_keep.mode = AblationSpec::Mode::subset;
    CHECK_THROWS_AS(run_ablation_protocol(corpus, model, empty_keep), value_error);
    AblationSpec no_seeds;
    no_seeds.n_seeds = 0;
    CHECK_THROWS_AS(run_ablation_protocol(corpus, model, no_seeds), value_error);
}

TEST_CASE("ablation protocol skips emptied samples and pads partial truth") {
    io::Corpus corpus;
    corpus.ids = {"only-maker", "partial"};
    Spectrum dry = noisy_spec(0.4, 0.08, 23);
    corpus.spectra = {dry, partial_spec(400, 2099, 0.42)};  // 800-2499 nm
    corpus.spectra[1].meta = "partial";
    corpus.sentences = {{"manufacturer: Alpha"}, {"baseline albedo: 0.42"}};

    props::Dictionary dict;
    for (const auto& ss : corpus.sentences)
        for (const auto& s : ss) dict.absorb(props::tokenize(s));

    sogm::SogmConfig cfg;
    cfg.encoder.d_model = 8;
    cfg.encoder.heads = 2;
    cfg.encoder.sentence_layers = 1;
    cfg.encoder.set_layers = 1;
    cfg.encoder.ffn_hidden = 16;
    cfg.unet.base_ch = 2;
    cfg.unet.cond_dim = 8;
    cfg.unet.heads = 2;
    cfg.unet.time_dim = 8;
    nn::ParameterStore ps;
    nn::Rng rng(29);
    sogm::SogmModel model(ps, rng, dict, cfg);
    model.set_normalization(0.4, 0.1);

    AblationSpec dropm;
    dropm.mode = AblationSpec::Mode::drop_manufacturer;
    dropm.n_seeds = 1;
    EvalReport rep = run_ablation_protocol(corpus, model, dropm);
    CHECK(rep.protocol == "ablation-drop-manufacturer");
    CHECK(rep.n == 1);  // manufacturer-only sample filtered to nothing
    CHECK(rep.skipped == 1);
    CHECK(rep.ids == std::vector<std::string>{"partial"});
    CHECK(std::isfinite(rep.mean_rmse));  // scored over the measured run

    // with a padding model the partial truth is completed first
    nn::ParameterStore pps;
    nn::Rng prng(31);
    pad::PaddingConfig pcfg;
    pcfg.d_model = 16;
    pcfg.heads = 2;
    pcfg.self_layers = 1;
    pcfg.ffn_hidden = 32;
    pcfg.conv_width = 6;
    pad::PaddingModel padder(pps, prng, pcfg);
    EvalReport prep = run_ablation_protocol(corpus, model, dropm, &padder);
    CHECK(prep.n == 1);
    CHECK(std::isfinite(prep.mean_rmse));
    CHECK(prep.mean_rmse != rep.mean_rmse);  // full-range vs measured-run scoring
}

}  // TEST_SUITE

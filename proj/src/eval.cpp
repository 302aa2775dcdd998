#include "soilgen/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

#include "io_util.hpp"
#include "soilgen/nn/rng.hpp"

namespace soilgen::eval {

using nlohmann::json;

namespace {

// Inclusive grid-index window for an inclusive nm window.
struct Window {
    int lo, hi;
};

Window window_for(int lo_nm, int hi_nm) {
    SG_CHECK(lo_nm >= kGridStart && hi_nm <= kGridEnd && lo_nm <= hi_nm, value_error,
             "wavelength window [", lo_nm, ", ", hi_nm, "] outside the ", kGridStart, "-",
             kGridEnd, " nm grid");
    return {lo_nm - kGridStart, hi_nm - kGridStart};
}

void check_window_measured(const Spectrum& s, Window w, const char* which) {
    for (int i = w.lo; i <= w.hi; ++i)
        SG_CHECK(s.mask[static_cast<size_t>(i)] != 0, precondition_error, which,
                 " spectrum not measured at ", kGridStart + i, " nm");
}

double rmse_window(const Spectrum& pred, const Spectrum& truth, Window w) {
    pred.validate();
    truth.validate();
    check_window_measured(pred, w, "pred");
    check_window_measured(truth, w, "truth");
    double acc = 0.0;
    for (int i = w.lo; i <= w.hi; ++i) {
        double d = pred.values[static_cast<size_t>(i)] - truth.values[static_cast<size_t>(i)];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(w.hi - w.lo + 1)) * 100.0;
}

double r2_window(const Spectrum& pred, const Spectrum& truth, Window w) {
    pred.validate();
    truth.validate();
    check_window_measured(pred, w, "pred");
    check_window_measured(truth, w, "truth");
    const int n = w.hi - w.lo + 1;
    double mp = 0.0, mt = 0.0;
    for (int i = w.lo; i <= w.hi; ++i) {
        mp += pred.values[static_cast<size_t>(i)];
        mt += truth.values[static_cast<size_t>(i)];
    }
    mp /= n;
    mt /= n;
    double spp = 0.0, stt = 0.0, spt = 0.0;
    for (int i = w.lo; i <= w.hi; ++i) {
        double dp = pred.values[static_cast<size_t>(i)] - mp;
        double dt = truth.values[static_cast<size_t>(i)] - mt;
        spp += dp * dp;
        stt += dt * dt;
        spt += dp * dt;
    }
    SG_CHECK(stt > 0.0, value_error, "truth spectrum has zero variance; correlation undefined");
    SG_CHECK(spp > 0.0, value_error, "pred spectrum has zero variance; correlation undefined");
    return std::clamp((spt * spt) / (spp * stt), 0.0, 1.0);
}

Window full_window(const Spectrum& pred, const Spectrum& truth, const char* op) {
    pred.validate();
    truth.validate();
    SG_CHECK(pred.fully_measured() && truth.fully_measured(), precondition_error, op,
             " needs fully measured spectra; use the range variant for partial coverage");
    return {0, kGridSize - 1};
}

std::string lower_trim(std::string s) {
    size_t b = s.find_first_not_of(" \t");
    size_t e = s.find_last_not_of(" \t");
    s = (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string fmt3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

}  // namespace

double rmse_pair(const Spectrum& pred, const Spectrum& truth) {
    return rmse_window(pred, truth, full_window(pred, truth, "rmse_pair"));
}

double r2_pair(const Spectrum& pred, const Spectrum& truth) {
    return r2_window(pred, truth, full_window(pred, truth, "r2_pair"));
}

double rmse_range(const Spectrum& pred, const Spectrum& truth, int lo_nm, int hi_nm) {
    return rmse_window(pred, truth, window_for(lo_nm, hi_nm));
}

double r2_range(const Spectrum& pred, const Spectrum& truth, int lo_nm, int hi_nm) {
    return r2_window(pred, truth, window_for(lo_nm, hi_nm));
}

EvalReport make_report(std::string protocol, std::vector<std::string> ids,
                       std::vector<double> rmse, std::vector<double> r2, size_t skipped) {
    SG_CHECK(ids.size() == rmse.size() && ids.size() == r2.size(), shape_error,
             "report columns disagree: ", ids.size(), " ids, ", rmse.size(), " rmse, ",
             r2.size(), " r2");
    EvalReport rep;
    rep.protocol = std::move(protocol);
    rep.ids = std::move(ids);
    rep.rmse = std::move(rmse);
    rep.r2 = std::move(r2);
    rep.n = rep.ids.size();
    rep.skipped = skipped;
    if (rep.n > 0) {
        double sr = 0.0, s2 = 0.0;
        for (size_t i = 0; i < rep.n; ++i) {
            sr += rep.rmse[i];
            s2 += rep.r2[i];
        }
        rep.mean_rmse = sr / static_cast<double>(rep.n);
        rep.mean_r2 = s2 / static_cast<double>(rep.n);
    }
    return rep;
}

json to_json(const EvalReport& report) {
    json items = json::array();
    for (size_t i = 0; i < report.n; ++i)
        items.push_back({{"id", report.ids[i]}, {"rmse", report.rmse[i]}, {"r2", report.r2[i]}});
    return {{"protocol", report.protocol}, {"n", report.n},
            {"skipped", report.skipped},  {"mean_rmse", report.mean_rmse},
            {"mean_r2", report.mean_r2},  {"items", std::move(items)}};
}

void write_report_json(const std::filesystem::path& path, const EvalReport& report) {
    auto f = detail::open_out(path);
    f << to_json(report).dump(2) << '\n';
    SG_CHECK(f.good(), io_error, "short write: ", path.string());
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
    auto f = detail::open_out(path);
    f << "id,rmse_percent,r2\n";
    for (size_t i = 0; i < report.n; ++i)
        f << report.ids[i] << ',' << detail::format_value(report.rmse[i]) << ','
          << detail::format_value(report.r2[i]) << '\n';
    f << "mean," << detail::format_value(report.mean_rmse) << ','
      << detail::format_value(report.mean_r2) << '\n';
    SG_CHECK(f.good(), io_error, "short write: ", path.string());
}

std::vector<EvalReport> run_padding_protocol(const io::Corpus& corpus,
                                             const Reconstructor& reconstruct,
                                             const std::vector<ZeroBand>& bands) {
    SG_CHECK(!bands.empty(), value_error, "padding protocol needs at least one band");
    SG_CHECK(corpus.ids.size() == corpus.spectra.size(), shape_error, "corpus has ",
             corpus.ids.size(), " ids for ", corpus.spectra.size(), " spectra");
    std::vector<EvalReport> reports;
    reports.reserve(bands.size());
    for (const ZeroBand& band : bands) {
        Window w = window_for(band.lo_nm, band.hi_nm);
        std::vector<std::string> ids;
        std::vector<double> rmse, r2;
        size_t skipped = 0;
        for (size_t s = 0; s < corpus.spectra.size(); ++s) {
            const Spectrum& truth = corpus.spectra[s];
            truth.validate();
            bool covers = true;
            for (int i = w.lo; i <= w.hi && covers; ++i)
                covers = truth.mask[static_cast<size_t>(i)] != 0;
            if (!covers) {
                ++skipped;
                continue;
            }
            Spectrum blanked = truth;
            for (int i = w.lo; i <= w.hi; ++i) {
                blanked.values[static_cast<size_t>(i)] = 0.0;
                blanked.mask[static_cast<size_t>(i)] = 0;
            }
            try {
                blanked.validate();  // window may not gut or split the measured run
            } catch (const value_error&) {
                ++skipped;
                continue;
            }
            Spectrum rec = reconstruct(blanked);
            rmse.push_back(rmse_window(rec, truth, w));
            r2.push_back(r2_window(rec, truth, w));
            ids.push_back(corpus.ids[s]);
        }
        std::string name =
            "pad-zero-" + std::to_string(band.lo_nm) + "-" + std::to_string(band.hi_nm);
        reports.push_back(
            make_report(std::move(name), std::move(ids), std::move(rmse), std::move(r2), skipped));
    }
    return reports;
}

std::vector<EvalReport> run_padding_protocol(const io::Corpus& corpus,
                                             const pad::PaddingModel& model,
                                             const std::vector<ZeroBand>& bands) {
    return run_padding_protocol(
        corpus, [&model](const Spectrum& s) { return model.pad_spectrum(s); }, bands);
}

std::string property_name(const std::string& sentence) {
    return lower_trim(sentence.substr(0, sentence.find(':')));
}

bool select_sentences(const std::vector<std::string>& sentences, const AblationSpec& spec,
                      nn::Rng& rng, std::vector<std::string>& out) {
    out.clear();
    switch (spec.mode) {
        case AblationSpec::Mode::all:
            out = sentences;
            return true;
        case AblationSpec::Mode::drop_manufacturer:
            for (const std::string& s : sentences)
                if (property_name(s) != "manufacturer") out.push_back(s);
            return true;
        case AblationSpec::Mode::drop_random_k: {
            out = sentences;
            if (static_cast<int>(out.size()) - spec.k < 1) return true;  // one-sentence floor
            for (int j = 0; j < spec.k; ++j) {
                auto idx = static_cast<size_t>(
                    rng.uniform_int(0, static_cast<int64_t>(out.size()) - 1));
                out.erase(out.begin() + static_cast<ptrdiff_t>(idx));
            }
            return true;
        }
        case AblationSpec::Mode::subset: {
            for (const std::string& name : spec.keep) {
                std::string want = lower_trim(name);
                bool found = false;
                for (const std::string& s : sentences)
                    if (property_name(s) == want) {
                        out.push_back(s);
                        found = true;
                    }
                if (!found) {
                    out.clear();
                    return false;
                }
            }
            return true;
        }
    }
    return false;
}

namespace {

std::string ablation_name(const AblationSpec& spec) {
    switch (spec.mode) {
        case AblationSpec::Mode::all:
            return "ablation-all";
        case AblationSpec::Mode::drop_manufacturer:
            return "ablation-drop-manufacturer";
        case AblationSpec::Mode::drop_random_k:
            return "ablation-drop-random-" + std::to_string(spec.k);
        case AblationSpec::Mode::subset: {
            std::string name = "ablation-subset";
            for (const std::string& k : spec.keep) name += "-" + lower_trim(k);
            return name;
        }
    }
    return "ablation";
}

}  // namespace

EvalReport run_ablation_protocol(const io::Corpus& corpus, const sogm::SogmModel& model,
                                 const AblationSpec& spec, const pad::PaddingModel* padder) {
    SG_CHECK(corpus.ids.size() == corpus.spectra.size() &&
                 corpus.ids.size() == corpus.sentences.size(),
             shape_error, "corpus columns disagree");
    SG_CHECK(spec.n_seeds >= 1, value_error, "ensemble needs at least one seed");
    SG_CHECK(spec.mode != AblationSpec::Mode::drop_random_k || spec.k == 1 || spec.k == 2,
             value_error, "drop_random_k supports k = 1 or 2, got ", spec.k);
    SG_CHECK(spec.mode != AblationSpec::Mode::subset || !spec.keep.empty(), value_error,
             "subset mode needs at least one property name");
    nn::Rng rng(spec.seed);
    std::vector<std::string> ids;
    std::vector<double> rmse, r2;
    size_t skipped = 0;
    for (size_t s = 0; s < corpus.spectra.size(); ++s) {
        std::vector<std::string> kept;
        if (!select_sentences(corpus.sentences[s], spec, rng, kept) || kept.empty()) {
            ++skipped;
            continue;
        }
        Spectrum truth = corpus.spectra[s];
        if (!truth.fully_measured() && padder != nullptr) truth = padder->pad_spectrum(truth);
        sogm::GenerationResult gen =
            model.generate_mean(kept, spec.n_seeds, spec.base_seed);
        if (truth.fully_measured()) {
            rmse.push_back(rmse_pair(gen.mean, truth));
            r2.push_back(r2_pair(gen.mean, truth));
        } else {
            int lo_nm = kGridStart + truth.first_measured();
            int hi_nm = kGridStart + truth.last_measured();
            rmse.push_back(rmse_range(gen.mean, truth, lo_nm, hi_nm));
            r2.push_back(r2_range(gen.mean, truth, lo_nm, hi_nm));
        }
        ids.push_back(corpus.ids[s]);
    }
    return make_report(ablation_name(spec), std::move(ids), std::move(rmse), std::move(r2),
                       skipped);
}

io::Corpus make_toy_corpus(const ToyCorpusSpec& spec) {
    SG_CHECK(spec.count >= 1, value_error, "toy corpus needs at least one sample");
    SG_CHECK(std::isfinite(spec.noise_std) && spec.noise_std >= 0.0, value_error,
             "noise std must be finite and non-negative, got ", spec.noise_std);
    nn::Rng rng(spec.seed);
    io::Corpus corpus;
    json params = json::object();
    for (size_t s = 0; s < spec.count; ++s) {
        char idbuf[16];
        std::snprintf(idbuf, sizeof idbuf, "toy-%04zu", s + 1);
        std::string id = idbuf;

        double base = round3(rng.uniform(0.25, 0.45));
        double slope = round3(rng.uniform(0.05, 0.15));
        double depth = round3(rng.uniform(0.01, 0.05));
        bool beta = spec.manufacturer && rng.uniform() < 0.5;
        double base_eff = base + (beta ? 0.015 : 0.0);

        std::vector<double> vals(kGridSize);
        for (int i = 0; i < kGridSize; ++i) {
            double u = static_cast<double>(i) / (kGridSize - 1);
            double lambda = static_cast<double>(kGridStart + i);
            double g = std::exp(-(lambda - 1400.0) * (lambda - 1400.0) / (2.0 * 60.0 * 60.0));
            double v = base_eff + slope * u - depth * g;
            if (spec.noise_std > 0.0) v += rng.normal(0.0, spec.noise_std);
            vals[static_cast<size_t>(i)] = std::clamp(v, 0.0, 1.5);
        }
        corpus.spectra.push_back(Spectrum::full(vals, id));

        std::vector<std::string> sent = {
            "baseline albedo: " + fmt3(base),
            "spectral slope: " + fmt3(slope) + " per span",
            "absorption depth: " + fmt3(depth) + " at 1400 nm",
        };
        json p = {{"base", base},         {"slope", slope},
                  {"depth", depth},       {"base_effective", base_eff},
                  {"center", 1400.0},     {"sigma", 60.0}};
        if (spec.manufacturer) {
            sent.push_back(std::string("manufacturer: ") + (beta ? "Beta" : "Alpha"));
            p["manufacturer"] = beta ? "Beta" : "Alpha";
        }
        corpus.sentences.push_back(std::move(sent));
        corpus.ids.push_back(id);

        if (spec.wet) {
            double smc = std::round(rng.uniform(0.0, 35.0) * 10.0) / 10.0;
            double f = 0.5 * (1.0 - std::exp(-smc / 15.0));
            std::vector<double> wvals(kGridSize);
            for (int i = 0; i < kGridSize; ++i) {
                double u = static_cast<double>(i) / (kGridSize - 1);
                wvals[static_cast<size_t>(i)] =
                    vals[static_cast<size_t>(i)] * (1.0 - f * (0.6 + 0.4 * u));
            }
            corpus.wet_spectra.push_back(Spectrum::full(wvals, id + "-wet"));
            corpus.smc.push_back(smc);
            p["smc"] = smc;
        }
        params[id] = std::move(p);
    }
    corpus.truth = {{"model", "toy-v1"}, {"params", std::move(params)}};
    return corpus;
}

}  // namespace soilgen::eval

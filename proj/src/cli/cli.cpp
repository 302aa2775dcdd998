#include "soilgen/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "../io_util.hpp"
#include "soilgen/eval.hpp"
#include "soilgen/model_store.hpp"
#include "soilgen/radiometry.hpp"

namespace soilgen::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string num(double v) { return detail::format_value(v); }

// ---------------------------------------------------------------- provenance

struct RunInfo {
    std::string command;
    std::vector<std::pair<std::string, std::string>> options;
    std::optional<uint64_t> seed;

    explicit RunInfo(std::string cmd) : command(std::move(cmd)) {}
    void add(const std::string& k, std::string v) { options.emplace_back(k, std::move(v)); }
    void add(const std::string& k, const char* v) { options.emplace_back(k, std::string(v)); }
    void add(const std::string& k, bool v) { options.emplace_back(k, v ? "true" : "false"); }
    void add(const std::string& k, double v) { options.emplace_back(k, num(v)); }
    template <class T,
              std::enable_if_t<std::is_integral_v<T> && !std::is_same_v<T, bool>, int> = 0>
    void add(const std::string& k, T v) {
        options.emplace_back(k, std::to_string(v));
    }
};

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string config_hash(const RunInfo& info) {
    std::vector<std::string> lines;
    lines.reserve(info.options.size());
    for (const auto& [k, v] : info.options) lines.push_back(k + "=" + v);
    std::sort(lines.begin(), lines.end());
    std::string all = info.command;
    for (const std::string& l : lines) {
        all += '\n';
        all += l;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(all)));
    return buf;
}

/// Run manifest written next to each command's outputs.
void write_run_manifest(const fs::path& path, const RunInfo& info) {
    json opts = json::object();
    for (const auto& [k, v] : info.options) opts[k] = v;
    json j = {{"command", info.command},
              {"version", kVersion},
              {"config_hash", config_hash(info)},
              {"options", std::move(opts)}};
    if (info.seed) j["seed"] = *info.seed;
    auto f = detail::open_out(path);
    f << j.dump(2) << '\n';
    SG_CHECK(f.good(), io_error, "write failed for ", path.string());
}

// ------------------------------------------------------------------- helpers

void ensure_writable(const fs::path& p, bool force) {
    SG_CHECK(force || !fs::exists(p), io_error, p.string(),
             " exists; pass --force to overwrite");
}

int resolve_threads(int flag) {
    if (flag > 0) return flag;
    if (const char* env = std::getenv("SOILGEN_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

std::pair<std::vector<std::string>, std::vector<Spectrum>> load_canonical_csv(
    const fs::path& path) {
    auto cols = io::read_spectra_csv(path);
    SG_CHECK(!cols.empty(), io_error, path.string(), ": no spectra columns");
    std::vector<std::string> ids;
    std::vector<Spectrum> specs;
    ids.reserve(cols.size());
    specs.reserve(cols.size());
    for (auto& c : cols) {
        Spectrum s = trim_to_canonical(c.samples);
        s.meta = c.id;
        ids.push_back(c.id);
        specs.push_back(std::move(s));
    }
    return {std::move(ids), std::move(specs)};
}

// Heap-allocated so the parameter store never moves under its model.
struct PadHandle {
    nn::ParameterStore ps;
    std::optional<pad::PaddingModel> model;
    json extra;
};

std::unique_ptr<PadHandle> open_padding(const fs::path& path) {
    auto h = std::make_unique<PadHandle>();
    h->extra = store::load_model_info(path, store::kPaddingKind);
    nn::Rng rng(0);
    h->model.emplace(h->ps, rng, store::padding_config(h->extra.value("config", json::object())));
    nn::load_checkpoint(path, h->ps);
    return h;
}

struct SogmHandle {
    nn::ParameterStore ps;
    std::optional<sogm::SogmModel> model;
    json extra;
};

std::unique_ptr<SogmHandle> open_sogm(const fs::path& path) {
    auto h = std::make_unique<SogmHandle>();
    h->extra = store::load_model_info(path, store::kSogmKind);
    SG_CHECK(h->extra.contains("dictionary"), io_error, path.string(),
             ": checkpoint lacks the token dictionary");
    props::Dictionary dict = props::Dictionary::from_json(h->extra.at("dictionary"));
    nn::Rng rng(0);
    h->model.emplace(h->ps, rng, dict,
                     store::sogm_config(h->extra.value("config", json::object())));
    nn::load_checkpoint(path, h->ps);
    h->model->set_normalization(h->extra.value("norm_mean", 0.0),
                                h->extra.value("norm_std", 1.0));
    return h;
}

struct WetHandle {
    nn::ParameterStore ps;
    std::optional<wet::WetModel> model;
    json extra;
};

std::unique_ptr<WetHandle> open_wet(const fs::path& path) {
    auto h = std::make_unique<WetHandle>();
    h->extra = store::load_model_info(path, store::kWetKind);
    nn::Rng rng(0);
    h->model.emplace(h->ps, rng, store::wet_config(h->extra.value("config", json::object())));
    nn::load_checkpoint(path, h->ps);
    return h;
}

eval::ZeroBand parse_band(const std::string& s) {
    int lo = 0, hi = 0;
    char tail = 0;
    SG_CHECK(std::sscanf(s.c_str(), "%d-%d%c", &lo, &hi, &tail) == 2, value_error, "band '", s,
             "' must look like 400-799");
    return {lo, hi};
}

eval::AblationSpec::Mode ablation_mode(const std::string& m) {
    if (m == "all") return eval::AblationSpec::Mode::all;
    if (m == "drop_manufacturer") return eval::AblationSpec::Mode::drop_manufacturer;
    if (m == "drop_random_k") return eval::AblationSpec::Mode::drop_random_k;
    if (m == "subset") return eval::AblationSpec::Mode::subset;
    throw value_error("unknown ablation mode '" + m +
                      "' (all, drop_manufacturer, drop_random_k, subset)");
}

void common_command_setup(CLI::App* sub) {
    sub->set_config("--config", "", "key=value file with the same keys as the flags; flags win");
    sub->allow_config_extras(CLI::config_extras_mode::error);
}

// ------------------------------------------------------------------ commands

void add_ingest(CLI::App& app) {
    struct Opts {
        std::string spectra, properties, wet_spectra, smc, unit = "reflectance", out;
        bool force = false;
    };
    auto o = std::make_shared<Opts>();
    auto* c = app.add_subcommand("ingest", "Standardize raw spectra + properties into a corpus");
    c->add_option("--spectra", o->spectra, "raw spectra CSV (wavelength_nm,<id>,...)")
        ->required();
    c->add_option("--properties", o->properties, "property sentences JSON")->required();
    c->add_option("--wet-spectra", o->wet_spectra, "wet counterpart spectra CSV");
    c->add_option("--smc", o->smc, "JSON file of {id: gravimetric moisture percent}");
    c->add_option("--unit", o->unit, "source unit of all spectra")
        ->check(CLI::IsMember({"reflectance", "absorbance"}));
    c->add_option("--out", o->out, "output corpus directory")->required();
    c->add_flag("--force", o->force, "overwrite existing outputs");
    common_command_setup(c);
    c->callback([o] {
        fs::path dir = o->out;
        ensure_writable(dir / "manifest.json", o->force);
        json sources = {{"kind", "soilgen-corpus"},
                        {"unit", o->unit},
                        {"spectra_csv", fs::absolute(o->spectra).string()},
                        {"properties", fs::absolute(o->properties).string()}};
        if (!o->wet_spectra.empty()) {
            SG_CHECK(!o->smc.empty(), value_error, "--wet-spectra needs --smc");
            sources["wet"] = {{"spectra_csv", fs::absolute(o->wet_spectra).string()},
                              {"smc", detail::read_json_file(o->smc)}};
        }
        fs::path staged = dir / "ingest-sources.json";
        {
            auto f = detail::open_out(staged);
            f << sources.dump(2) << '\n';
        }
        io::Corpus corpus;
        try {
            corpus = io::load_corpus(staged);
        } catch (...) {
            std::error_code ec;
            fs::remove(staged, ec);
            throw;
        }
        fs::remove(staged);
        fs::path manifest = io::write_corpus(dir, corpus);

        RunInfo info("ingest");
        info.add("spectra", o->spectra);
        info.add("properties", o->properties);
        info.add("wet-spectra", o->wet_spectra);
        info.add("smc", o->smc);
        info.add("unit", o->unit);
        info.add("out", o->out);
        write_run_manifest(dir / "run.json", info);
        std::cout << "wrote " << manifest.string() << " (" << corpus.size() << " samples"
                  << (corpus.has_wet() ? ", wet pairs" : "") << ")\n";
    });
}

void add_toy_data(CLI::App& app) {
    struct Opts {
        std::string out;
        uint64_t count = 100, seed = 0;
        double noise = 0.0;
        bool manufacturer = false, wet = false, force = false;
    };
    auto o = std::make_shared<Opts>();
    auto* c = app.add_subcommand("toy-data", "Create a synthetic corpus with known ground truth");
    c->add_option("--out", o->out, "output corpus directory")->required();
    c->add_option("--count", o->count, "number of samples")->check(CLI::PositiveNumber);
    c->add_option("--seed", o->seed, "generator seed");
    c->add_option("--noise", o->noise, "per-wavelength noise std")
        ->check(CLI::NonNegativeNumber);
    c->add_flag("--manufacturer", o->manufacturer, "add an Alpha/Beta manufacturer sentence");
    c->add_flag("--wet", o->wet, "attach wet counterparts");
    c->add_flag("--force", o->force, "overwrite existing outputs");
    common_command_setup(c);
    c->callback([o] {
        fs::path dir = o->out;
        ensure_writable(dir / "manifest.json", o->force);
        eval::ToyCorpusSpec spec;
        spec.count = static_cast<size_t>(o->count);
        spec.seed = o->seed;
        spec.noise_std = o->noise;
        spec.manufacturer = o->manufacturer;
        spec.wet = o->wet;
        io::Corpus corpus = eval::make_toy_corpus(spec);
        fs::path manifest = io::write_corpus(dir, corpus);

        RunInfo info("toy-data");
        info.seed = o->seed;
        info.add("out", o->out);
        info.add("count", o->count);
        info.add("seed", o->seed);
        info.add("noise", o->noise);
        info.add("manufacturer", o->manufacturer);
        info.add("wet", o->wet);
        write_run_manifest(dir / "run.json", info);
        std::cout << "wrote " << manifest.string() << " (" << corpus.size() << " samples)\n";
    });
}

void add_train_pad(CLI::App& app) {
    struct Opts {
        std::string corpus, out;
        pad::PaddingConfig cfg;
        pad::PaddingTrainConfig tc;
        bool force = false;
    };
    auto o = std::make_shared<Opts>();
    auto* c = app.add_subcommand("train-pad", "Train the spectra padding model");
    c->add_option("--corpus", o->corpus, "corpus manifest")->required();
    c->add_option("--out", o->out, "checkpoint path")->required();
    c->add_option("--d-model", o->cfg.d_model)->check(CLI::PositiveNumber);
    c->add_option("--heads", o->cfg.heads)->check(CLI::PositiveNumber);
    c->add_option("--self-layers", o->cfg.self_layers)->check(CLI::PositiveNumber);
    c->add_option("--ffn-hidden", o->cfg.ffn_hidden)->check(CLI::PositiveNumber);
    c->add_option("--conv-width", o->cfg.conv_width)->check(CLI::PositiveNumber);
    c->add_option("--epochs", o->tc.epochs)->check(CLI::PositiveNumber);
    c->add_option("--batch", o->tc.batch)->check(CLI::PositiveNumber);
    c->add_option("--lr", o->tc.lr)->check(CLI::PositiveNumber);
    c->add_option("--seed", o->tc.seed, "training seed");
    c->add_option("--log-every", o->tc.log_every)->check(CLI::NonNegativeNumber);
    c->add_flag("--force", o->force, "overwrite existing outputs");
    common_command_setup(c);
    c->callback([o] {
        ensure_writable(o->out, o->force);
        io::Corpus corpus = io::load_corpus(o->corpus);
        std::vector<Spectrum> full;
        for (const Spectrum& s : corpus.spectra)
            if (s.fully_measured()) full.push_back(s);
        SG_CHECK(!full.empty(), precondition_error,
                 "corpus has no full-range spectra to train on");

        nn::ParameterStore ps;
        nn::Rng rng(o->tc.seed);
        pad::PaddingModel model(ps, rng, o->cfg);
        auto log = pad::train_padding(model, ps, full, o->tc);

        json fields;
        fields["train"] = {{"epochs", o->tc.epochs},   {"batch", o->tc.batch},
                           {"lr", o->tc.lr},           {"seed", o->tc.seed},
                           {"samples", full.size()},   {"final_loss", log.epoch_loss.back()}};
        store::save_model(o->out, ps, store::kPaddingKind, store::to_json(o->cfg), fields);

        RunInfo info("train-pad");
        info.seed = o->tc.seed;
        info.add("corpus", o->corpus);
        info.add("out", o->out);
        info.add("d-model", o->cfg.d_model);
        info.add("heads", o->cfg.heads);
        info.add("self-layers", o->cfg.self_layers);
        info.add("ffn-hidden", o->cfg.ffn_hidden);
        info.add("conv-width", o->cfg.conv_width);
        info.add("epochs", o->tc.epochs);
        info.add("batch", o->tc.batch);
        info.add("lr", o->tc.lr);
        info.add("seed", o->tc.seed);
        write_run_manifest(fs::path(o->out + ".run.json"), info);
        std::cout << "wrote " << o->out << " (final loss " << num(log.epoch_loss.back())
                  << ")\n";
    });
}

void add_pad(CLI::App& app) {
    struct Opts {
        std::string model, in, out;
        bool force = false;
    };
    auto o = std::make_shared<Opts>();
    auto* c = app.add_subcommand("pad", "Reconstruct full-range spectra from partial ones");
    c->add_option("--model", o->model, "padding checkpoint");
    c->add_option("--in", o->in, "canonical spectra CSV")->required();
    c->add_option("--out", o->out, "padded spectra CSV")->required();
    c->add_flag("--force", o->force, "overwrite existing outputs");
    common_command_setup(c);
    c->callback([o] {
        SG_CHECK(!o->model.empty(), value_error, "missing checkpoint: pass --model <pad.ckpt>");
        ensure_writable(o->out, o->force);
        auto h = open_padding(o->model);
        auto [ids, specs] = load_canonical_csv(o->in);
        std::vector<Spectrum> padded;
        padded.reserve(specs.size());
        for (const Spectrum& s : specs) padded.push_back(h->model->pad_spectrum(s));
        io::write_spectra_csv(o->out, ids, padded);

        RunInfo info("pad");
        info.add("model", o->model);
        info.add("in", o->in);
        info.add("out", o->out);
        write_run_manifest(fs::path(o->out + ".run.json"), info);
        std::cout << "wrote " << o->out << " (" << padded.size() << " spectra)\n";
    });
}

void add_train_sogm(CLI::App& app) {
    struct Opts {
        std::string corpus, out;
        sogm::SogmConfig cfg;
        sogm::SogmTrainConfig tc;
        bool force = false;
    };
    auto o = std::make_shared<Opts>();
    auto* c = app.add_subcommand("train-sogm", "Train the text-conditioned generator");
    c->add_option("--corpus", o->corpus, "corpus manifest")->required();
    c->add_option("--out", o->out, "checkpoint path")->required();
    c->add_option("--d-model", o->cfg.encoder.d_model)->check(CLI::PositiveNumber);
    c->add_option("--enc-heads", o->cfg.encoder.heads)->check(CLI::PositiveNumber);
    c->add_option("--sentence-layers", o->cfg.encoder.sentence_layers)
        ->check(CLI::PositiveNumber);
    c->add_option("--set-layers", o->cfg.encoder.set_layers)->check(CLI::PositiveNumber);
    c->add_option("--ffn-hidden", o->cfg.encoder.ffn_hidden)->check(CLI::PositiveNumber);
    c->add_option("--base-ch", o->cfg.unet.base_ch)->check(CLI::PositiveNumber);
    c->add_option("--cond-dim", o->cfg.unet.cond_dim)->check(CLI::PositiveNumber);
    c->add_option("--unet-heads", o->cfg.unet.heads)->check(CLI::PositiveNumber);
    c->add_option("--time-dim", o->cfg.unet.time_dim)->check(CLI::PositiveNumber);
    c->add_option("--steps", o->cfg.T, "diffusion steps")->check(CLI::PositiveNumber);
    c->add_option("--epochs", o->tc.epochs)->check(CLI::PositiveNumber);
    c->add_option("--batch", o->tc.batch)->check(CLI::PositiveNumber);
    c->add_option("--lr", o->tc.lr)->check(CLI::PositiveNumber);
    c->add_option("--seed", o->tc.seed, "training seed");
    c->add_option("--dropout", o->tc.sentence_dropout, "sentence dropout probability")
        ->check(CLI::Range(0.0, 1.0));
    c->add_option("--log-every", o->tc.log_every)->check(CLI::NonNegativeNumber);
    c->add_flag("--force", o->force, "overwrite existing outputs");
    common_command_setup(c);
    c->callback([o] {
        ensure_writable(o->out, o->force);
        io::Corpus corpus = io::load_corpus(o->corpus);
        props::Dictionary dict;
        for (const auto& sample : corpus.sentences)
            for (const std::string& s : sample) dict.absorb(props::tokenize(s));

        nn::ParameterStore ps;
        nn::Rng rng(o->tc.seed);
        sogm::SogmModel model(ps, rng, dict, o->cfg);
        auto log = sogm::train_sogm(model, ps, corpus, o->tc);

        json fields;
        fields["dictionary"] = model.encoder().dictionary().to_json();
        fields["norm_mean"] = model.norm_mean();
        fields["norm_std"] = model.norm_std();
        fields["train"] = {{"epochs", o->tc.epochs},
                           {"batch", o->tc.batch},
                           {"lr", o->tc.lr},
                           {"seed", o->tc.seed},
                           {"dropout", o->tc.sentence_dropout},
                           {"samples", corpus.size()},
                           {"final_loss", log.epoch_loss.back()}};
        store::save_model(o->out, ps, store::kSogmKind, store::to_json(o->cfg), fields);

        RunInfo info("train-sogm");
        info.seed = o->tc.seed;
        info.add("corpus", o->corpus);
        info.add("out", o->out);
        info.add("d-model", o->cfg.encoder.d_model);
        info.add("base-ch", o->cfg.unet.base_ch);
        info.add("steps", o->cfg.T);
        info.add("epochs", o->tc.epochs);
        info.add("batch", o->tc.batch);
        info.add("lr", o->tc.lr);
        info.add("seed", o->tc.seed);
        info.add("dropout", o->tc.sentence_dropout);
        write_run_manifest(fs::path(o->out + ".run.json"), info);
        std::cout << "wrote " << o->out << " (final loss " << num(log.epoch_loss.back())
                  << ")\n";
    });
}

void add_generate(CLI::App& app) {
    struct Opts {
        std::string model, properties, out;
        int seeds = 10;
        uint64_t base_seed = 1;
        bool force = false;
    };
    auto o = std::make_shared<Opts>();
    auto* c = app.add_subcommand("generate", "Generate dry spectra from property sentences");
    c->add_option("--model", o->model, "sogm checkpoint");
    c->add_option("--properties", o->properties, "property sentences JSON");
    c->add_option("--out", o->out, "output spectra CSV");
    c->add_option("--seeds", o->seeds, "ensemble size per sample")->check(CLI::PositiveNumber);
    c->add_option("--base-seed", o->base_seed, "first sampling seed");
    c->add_flag("--force", o->force, "overwrite existing outputs");
    common_command_setup(c);
    c->callback([o] {
        SG_CHECK(!o->model.empty(), value_error,
                 "missing checkpoint: pass --model <sogm.ckpt>");
        SG_CHECK(!o->properties.empty(), value_error,
                 "missing --properties <sentences.json>");
        SG_CHECK(!o->out.empty(), value_error, "missing --out <spectra.csv>");
        ensure_writable(o->out, o->force);
        auto h = open_sogm(o->model);
        auto records = io::read_properties_json(o->properties);
        SG_CHECK(!records.empty(), value_error, o->properties + ": no property records");

        std::vector<std::string> ids;
        std::vector<Spectrum> means;
        for (const auto& r : records) {
            sogm::GenerationResult g =
                h->model->generate_mean(r.sentences, o->seeds, o->base_seed);
            g.mean.meta = r.id;
            ids.push_back(r.id);
            means.push_back(std::move(g.mean));
        }
        io::write_spectra_csv(o->out, ids, means);

        RunInfo info("generate");
        info.seed = o->base_seed;
        info.add("model", o->model);
        info.add("properties", o->properties);
        info.add("out", o->out);
        info.add("seeds", o->seeds);
        info.add("base-seed", o->base_seed);
        write_run_manifest(fs::path(o->out + ".run.json"), info);
        std::cout << "wrote " << o->out << " (" << means.size() << " spectra, mean of "
                  << o->seeds << " seeds)\n";
    });
}

void add_train_wet(CLI::App& app) {
    struct Opts {
        std::string corpus, out;
        wet::WetModelConfig cfg;
        wet::WetTrainConfig tc;
        bool force = false;
    };
    auto o = std::make_shared<Opts>();
    auto* c = app.add_subcommand("train-wet", "Train the wet-spectra predictor");
    c->add_option("--corpus", o->corpus, "corpus manifest with wet pairs")->required();
    c->add_option("--out", o->out, "checkpoint path")->required();
    c->add_option("--base-ch", o->cfg.base_ch)->check(CLI::PositiveNumber);
    c->add_option("--iterations", o->tc.iterations)->check(CLI::PositiveNumber);
    c->add_option("--batch", o->tc.batch)->check(CLI::PositiveNumber);
    c->add_option("--lr", o->tc.lr)->check(CLI::PositiveNumber);
    c->add_option("--seed", o->tc.seed, "training seed");
    c->add_option("--test-fraction", o->tc.test_fraction)->check(CLI::Range(0.0, 0.9));
    c->add_option("--log-every", o->tc.log_every)->check(CLI::NonNegativeNumber);
    c->add_flag("--force", o->force, "overwrite existing outputs");
    common_command_setup(c);
    c->callback([o] {
        ensure_writable(o->out, o->force);
        io::Corpus corpus = io::load_corpus(o->corpus);
        SG_CHECK(corpus.has_wet(), precondition_error,
                 o->corpus + ": corpus has no wet spectra");
        o->cfg.iteration_cap = std::max(o->cfg.iteration_cap, o->tc.iterations);

        nn::ParameterStore ps;
        nn::Rng rng(o->tc.seed);
        wet::WetModel model(ps, rng, o->cfg);
        auto log = wet::train_wet(model, ps, corpus, o->tc);

        json fields;
        fields["train"] = {{"iterations", o->tc.iterations},
                           {"batch", o->tc.batch},
                           {"lr", o->tc.lr},
                           {"seed", o->tc.seed},
                           {"test_fraction", o->tc.test_fraction},
                           {"final_loss", log.iter_loss.back()}};
        store::save_model(o->out, ps, store::kWetKind, store::to_json(o->cfg), fields);

        RunInfo info("train-wet");
        info.seed = o->tc.seed;
        info.add("corpus", o->corpus);
        info.add("out", o->out);
        info.add("base-ch", o->cfg.base_ch);
        info.add("iterations", o->tc.iterations);
        info.add("batch", o->tc.batch);
        info.add("lr", o->tc.lr);
        info.add("seed", o->tc.seed);
        info.add("test-fraction", o->tc.test_fraction);
        write_run_manifest(fs::path(o->out + ".run.json"), info);
        std::cout << "wrote " << o->out << " (final loss " << num(log.iter_loss.back())
                  << ")\n";
    });
}

void add_wet(CLI::App& app) {
    struct Opts {
        std::string model, in, out;
        double smc = -1.0;
        bool force = false;
    };
    auto o = std::make_shared<Opts>();
    auto* c = app.add_subcommand("wet", "Predict wet spectra at a given moisture");
    c->add_option("--model", o->model, "wet checkpoint");
    c->add_option("--in", o->in, "dry spectra CSV (full range)")->required();
    c->add_option("--smc", o->smc, "gravimetric moisture percent")
        ->check(CLI::NonNegativeNumber);
    c->add_option("--out", o->out, "wet spectra CSV")->required();
    c->add_flag("--force", o->force, "overwrite existing outputs");
    common_command_setup(c);
    c->callback([o] {
        SG_CHECK(!o->model.empty(), value_error, "missing checkpoint: pass --model <wet.ckpt>");
        SG_CHECK(o->smc >= 0.0, value_error, "missing --smc <percent>");
        ensure_writable(o->out, o->force);
        auto h = open_wet(o->model);
        auto [ids, specs] = load_canonical_csv(o->in);
        std::vector<Spectrum> wets;
        wets.reserve(specs.size());
        for (const Spectrum& s : specs) {
            SG_CHECK(s.fully_measured(), precondition_error, "spectrum '", s.meta,
                     "' is not full range; pad it first");
            wets.push_back(h->model->predict(s, o->smc));
        }
        io::write_spectra_csv(o->out, ids, wets);

        RunInfo info("wet");
        info.add("model", o->model);
        info.add("in", o->in);
        info.add("out", o->out);
        info.add("smc", o->smc);
        write_run_manifest(fs::path(o->out + ".run.json"), info);
        std::cout << "wrote " << o->out << " (" << wets.size() << " spectra at smc "
                  << num(o->smc) << ")\n";
    });
}

void add_integrate(CLI::App& app) {
    struct Opts {
        std::string spectra, response, source, out;
        bool normalize_cs = false, force = false;
    };
    auto o = std::make_shared<Opts>();
    auto* c = app.add_subcommand("integrate", "Band-integrate spectra against camera + source");
    c->add_option("--spectra", o->spectra, "canonical spectra CSV")->required();
    c->add_option("--response", o->response, "camera response CSV")->required();
    c->add_option("--source", o->source, "source spectrum CSV")->required();
    c->add_option("--out", o->out, "output CSV")->required();
    c->add_flag("--normalize-cs", o->normalize_cs,
                "divide by the integral of C*S instead of S");
    c->add_flag("--force", o->force, "overwrite existing outputs");
    common_command_setup(c);
    c->callback([o] {
        ensure_writable(o->out, o->force);
        radio::CameraResponse resp = radio::CameraResponse::from_csv(o->response);
        radio::SourceSpectrum src = radio::SourceSpectrum::from_csv(o->source);
        auto [ids, specs] = load_canonical_csv(o->spectra);

        auto f = detail::open_out(o->out);
        f << "id,channel,lo_nm,hi_nm,reflectivity\n";
        size_t rows = 0;
        for (size_t i = 0; i < specs.size(); ++i) {
            for (const auto& ch : resp.channels) {
                radio::Band band{ch.lo(), ch.hi()};
                double v = radio::band_reflectivity(specs[i], ch, src, band, o->normalize_cs);
                f << ids[i] << ',' << ch.name << ',' << num(ch.lo()) << ',' << num(ch.hi())
                  << ',' << num(v) << '\n';
                ++rows;
            }
        }
        SG_CHECK(f.good(), io_error, "write failed for ", o->out);

        RunInfo info("integrate");
        info.add("spectra", o->spectra);
        info.add("response", o->response);
        info.add("source", o->source);
        info.add("out", o->out);
        info.add("normalize-cs", o->normalize_cs);
        write_run_manifest(fs::path(o->out + ".run.json"), info);
        std::cout << "wrote " << o->out << " (" << rows << " rows)\n";
    });
}

void add_render(CLI::App& app) {
    struct Opts {
        std::string scene, out_dir;
        int threads = 0;
        bool force = false;
    };
    auto o = std::make_shared<Opts>();
    auto* c = app.add_subcommand("render", "Render a soil scene to raster + label map");
    c->add_option("--scene", o->scene, "scene JSON")->required();
    c->add_option("--out-dir", o->out_dir, "output directory")->required();
    c->add_option("--threads", o->threads, "worker cap (0 = SOILGEN_THREADS or 1)")
        ->check(CLI::NonNegativeNumber);
    c->add_flag("--force", o->force, "overwrite existing outputs");
    common_command_setup(c);
    c->callback([o] {
        fs::path dir = o->out_dir;
        for (const char* name : {"raster.sgimg", "render.png", "labels.png", "legend.json"})
            ensure_writable(dir / name, o->force);
        int threads = resolve_threads(o->threads);
        radio::SoilScene scene = radio::load_scene(o->scene);
        radio::RenderResult res = radio::render_scene(scene);
        radio::write_float_image(dir / "raster.sgimg", res.raster);
        radio::write_png_rgb8(dir / "render.png", res.tonemapped);
        radio::write_png_labels(dir / "labels.png", res.labels, res.legend,
                                dir / "legend.json");

        RunInfo info("render");
        info.add("scene", o->scene);
        info.add("out-dir", o->out_dir);
        info.add("threads", threads);
        write_run_manifest(dir / "run.json", info);
        std::cout << "wrote " << (dir / "render.png").string() << " ("
                  << res.raster.width << "x" << res.raster.height << ", "
                  << scene.patches.size() << " patches)\n";
    });
}

void add_eval(CLI::App& app) {
    auto* ev = app.add_subcommand("eval", "Evaluation protocols");
    ev->require_subcommand(1);

    // ---- eval pad ----
    {
        struct Opts {
            std::string corpus, model, out, protocol;
            std::vector<std::string> bands;
            bool force = false;
        };
        auto o = std::make_shared<Opts>();
        auto* c = ev->add_subcommand("pad", "Zero-band reconstruction protocol");
        c->add_option("--corpus", o->corpus, "corpus manifest")->required();
        c->add_option("--model", o->model, "padding checkpoint");
        c->add_option("--protocol", o->protocol, "protocol JSON with a 'bands' list");
        c->add_option("--bands", o->bands, "bands like 400-799 (repeatable)");
        c->add_option("--out", o->out, "report JSON path")->required();
        c->add_flag("--force", o->force, "overwrite existing outputs");
        common_command_setup(c);
        c->callback([o] {
            SG_CHECK(!o->model.empty(), value_error,
                     "missing checkpoint: pass --model <pad.ckpt>");
            std::vector<std::string> band_strs = o->bands;
            if (band_strs.empty() && !o->protocol.empty()) {
                json p = detail::read_json_file(o->protocol);
                for (const json& b : p.value("bands", json::array())) {
                    if (b.is_string())
                        band_strs.push_back(b.get<std::string>());
                    else if (b.is_array() && b.size() == 2)
                        band_strs.push_back(std::to_string(b[0].get<int>()) + "-" +
                                            std::to_string(b[1].get<int>()));
                    else
                        throw value_error(o->protocol + ": bands must be \"lo-hi\" or [lo,hi]");
                }
            }
            if (band_strs.empty()) band_strs = {"400-799", "400-1099", "2100-2499"};
            std::vector<eval::ZeroBand> bands;
            for (const std::string& b : band_strs) bands.push_back(parse_band(b));

            ensure_writable(o->out, o->force);
            io::Corpus corpus = io::load_corpus(o->corpus);
            auto h = open_padding(o->model);
            auto reports = eval::run_padding_protocol(corpus, *h->model, bands);

            json arr = json::array();
            for (const auto& r : reports) arr.push_back(eval::to_json(r));
            {
                auto f = detail::open_out(o->out);
                f << arr.dump(2) << '\n';
                SG_CHECK(f.good(), io_error, "write failed for ", o->out);
            }
            fs::path stem = fs::path(o->out);
            stem.replace_extension();
            for (size_t i = 0; i < reports.size(); ++i) {
                fs::path csv = stem;
                csv += "-" + std::to_string(bands[i].lo_nm) + "-" +
                       std::to_string(bands[i].hi_nm) + ".csv";
                eval::write_report_csv(csv, reports[i]);
            }

            RunInfo info("eval-pad");
            info.add("corpus", o->corpus);
            info.add("model", o->model);
            for (const std::string& b : band_strs) info.add("band", b);
            info.add("out", o->out);
            write_run_manifest(fs::path(o->out + ".run.json"), info);
            for (const auto& r : reports)
                std::cout << r.protocol << ": rmse " << num(r.mean_rmse) << " r2 "
                          << num(r.mean_r2) << " n " << r.n << " skipped " << r.skipped
                          << "\n";
            std::cout << "wrote " << o->out << "\n";
        });
    }

    // ---- eval sogm ----
    {
        struct Opts {
            std::string corpus, model, padder, out, protocol, mode = "all";
            int k = 1, seeds = 10;
            uint64_t seed = 0, base_seed = 1;
            std::vector<std::string> keep;
            bool force = false;
            CLI::Option *mode_opt = nullptr, *k_opt = nullptr, *keep_opt = nullptr,
                        *seed_opt = nullptr, *seeds_opt = nullptr, *base_opt = nullptr;
        };
        auto o = std::make_shared<Opts>();
        auto* c = ev->add_subcommand("sogm", "Property-ablation generation protocol");
        c->add_option("--corpus", o->corpus, "corpus manifest")->required();
        c->add_option("--model", o->model, "sogm checkpoint");
        c->add_option("--padder", o->padder, "padding checkpoint for partial truth");
        c->add_option("--protocol", o->protocol, "ablation spec JSON");
        o->mode_opt = c->add_option("--mode", o->mode,
                                    "all | drop_manufacturer | drop_random_k | subset");
        o->k_opt = c->add_option("--k", o->k, "properties to drop")->check(CLI::Range(1, 2));
        o->keep_opt = c->add_option("--keep", o->keep, "subset property names (repeatable)");
        o->seed_opt = c->add_option("--seed", o->seed, "rng seed for drop_random_k");
        o->seeds_opt =
            c->add_option("--seeds", o->seeds, "ensemble size")->check(CLI::PositiveNumber);
        o->base_opt = c->add_option("--base-seed", o->base_seed, "first sampling seed");
        c->add_option("--out", o->out, "report JSON path")->required();
        c->add_flag("--force", o->force, "overwrite existing outputs");
        common_command_setup(c);
        c->callback([o] {
            SG_CHECK(!o->model.empty(), value_error,
                     "missing checkpoint: pass --model <sogm.ckpt>");
            eval::AblationSpec spec;
            if (!o->protocol.empty()) {
                json p = detail::read_json_file(o->protocol);
                spec.mode = ablation_mode(p.value("mode", "all"));
                spec.k = p.value("k", spec.k);
                spec.keep = p.value("keep", spec.keep);
                spec.seed = p.value("seed", spec.seed);
                spec.n_seeds = p.value("n_seeds", spec.n_seeds);
                spec.base_seed = p.value("base_seed", spec.base_seed);
            }
            if (o->mode_opt->count() || o->protocol.empty()) spec.mode = ablation_mode(o->mode);
            if (o->k_opt->count()) spec.k = o->k;
            if (o->keep_opt->count()) spec.keep = o->keep;
            if (o->seed_opt->count()) spec.seed = o->seed;
            if (o->seeds_opt->count() || o->protocol.empty()) spec.n_seeds = o->seeds;
            if (o->base_opt->count()) spec.base_seed = o->base_seed;

            ensure_writable(o->out, o->force);
            io::Corpus corpus = io::load_corpus(o->corpus);
            auto h = open_sogm(o->model);
            std::unique_ptr<PadHandle> ph;
            if (!o->padder.empty()) ph = open_padding(o->padder);
            eval::EvalReport rep = eval::run_ablation_protocol(
                corpus, *h->model, spec, ph ? &*ph->model : nullptr);

            eval::write_report_json(o->out, rep);
            fs::path csv = fs::path(o->out);
            csv.replace_extension(".csv");
            eval::write_report_csv(csv, rep);

            RunInfo info("eval-sogm");
            info.seed = spec.base_seed;
            info.add("corpus", o->corpus);
            info.add("model", o->model);
            info.add("padder", o->padder);
            info.add("mode", o->mode);
            info.add("k", spec.k);
            for (const std::string& kname : spec.keep) info.add("keep", kname);
            info.add("seed", spec.seed);
            info.add("seeds", spec.n_seeds);
            info.add("base-seed", spec.base_seed);
            info.add("out", o->out);
            write_run_manifest(fs::path(o->out + ".run.json"), info);
            std::cout << rep.protocol << ": rmse " << num(rep.mean_rmse) << " r2 "
                      << num(rep.mean_r2) << " n " << rep.n << " skipped " << rep.skipped
                      << "\nwrote " << o->out << "\n";
        });
    }

    // ---- eval wet ----
    {
        struct Opts {
            std::string corpus, model, out;
            bool force = false;
        };
        auto o = std::make_shared<Opts>();
        auto* c = ev->add_subcommand("wet", "Wet-spectra prediction metrics");
        c->add_option("--corpus", o->corpus, "corpus manifest with wet pairs")->required();
        c->add_option("--model", o->model, "wet checkpoint");
        c->add_option("--out", o->out, "report JSON path")->required();
        c->add_flag("--force", o->force, "overwrite existing outputs");
        common_command_setup(c);
        c->callback([o] {
            SG_CHECK(!o->model.empty(), value_error,
                     "missing checkpoint: pass --model <wet.ckpt>");
            ensure_writable(o->out, o->force);
            io::Corpus corpus = io::load_corpus(o->corpus);
            SG_CHECK(corpus.has_wet(), precondition_error,
                     o->corpus + ": corpus has no wet spectra");
            auto h = open_wet(o->model);

            std::vector<std::string> ids;
            std::vector<double> rmse, r2;
            size_t skipped = 0;
            for (size_t i = 0; i < corpus.size(); ++i) {
                const Spectrum& dry = corpus.spectra[i];
                const Spectrum& truth = corpus.wet_spectra[i];
                if (!dry.fully_measured()) {
                    ++skipped;
                    continue;
                }
                Spectrum pred = h->model->predict(dry, corpus.smc[i]);
                if (truth.fully_measured()) {
                    rmse.push_back(eval::rmse_pair(pred, truth));
                    r2.push_back(eval::r2_pair(pred, truth));
                } else {
                    int lo = kGridStart + truth.first_measured();
                    int hi = kGridStart + truth.last_measured();
                    rmse.push_back(eval::rmse_range(pred, truth, lo, hi));
                    r2.push_back(eval::r2_range(pred, truth, lo, hi));
                }
                ids.push_back(corpus.ids[i]);
            }
            eval::EvalReport rep = eval::make_report("wet-prediction", std::move(ids),
                                                     std::move(rmse), std::move(r2), skipped);
            eval::write_report_json(o->out, rep);
            fs::path csv = fs::path(o->out);
            csv.replace_extension(".csv");
            eval::write_report_csv(csv, rep);

            RunInfo info("eval-wet");
            info.add("corpus", o->corpus);
            info.add("model", o->model);
            info.add("out", o->out);
            write_run_manifest(fs::path(o->out + ".run.json"), info);
            std::cout << rep.protocol << ": rmse " << num(rep.mean_rmse) << " r2 "
                      << num(rep.mean_r2) << " n " << rep.n << " skipped " << rep.skipped
                      << "\nwrote " << o->out << "\n";
        });
    }
}

}  // namespace

int run(std::vector<std::string> args) {
    CLI::App app{"soil reflectance generation toolkit"};
    app.name("soilgen");
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(0, 1);

    add_ingest(app);
    add_toy_data(app);
    add_train_pad(app);
    add_pad(app);
    add_train_sogm(app);
    add_generate(app);
    add_train_wet(app);
    add_wet(app);
    add_integrate(app);
    add_render(app);
    add_eval(app);

    static const std::set<std::string> known = {
        "ingest", "toy-data", "train-pad", "pad",       "train-sogm", "generate",
        "train-wet", "wet",   "integrate", "render",    "eval"};
    if (args.empty()) {
        std::cerr << app.help();
        return 2;
    }
    if (args.front()[0] != '-' && known.find(args.front()) == known.end()) {
        std::cerr << "unknown subcommand '" << args.front() << "'\n\n" << app.help();
        return 2;
    }

    try {
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp&) {
        const CLI::App* a = &app;
        while (!a->get_subcommands().empty()) a = a->get_subcommands().front();
        std::cout << a->help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        std::cout << kVersion << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace soilgen::cli
